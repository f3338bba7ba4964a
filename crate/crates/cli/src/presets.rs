//! Figure-reproduction pipelines. Each preset builds its scenarios from
//! configuration physics (no derived numbers are hard-coded), runs the
//! simulate → analyze → fit chain as appropriate, and writes plot-ready
//! CSV data plus a fitted-parameter summary.

use crate::config::{Config, RunSection};
use crate::errors::ConfigError;
use crate::orchestrator::{analyze_stream, ArtifactWriter, Manifest};
use anyhow::Context;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rydsim_core::counting::{start_stop_histogram, windowed_g2, CorrelationEstimate};
use rydsim_core::detection_sim::{run_trials, Detector, HbtArm, MemoryMode, TrialLayout};
use rydsim_core::fitting::{fit, FitProblem, FitResult, ModelId};
use rydsim_core::photon_source::DlczSourceParams;
use rydsim_core::rydberg_memory::{
    memory_linewidth_deconvolve, nonlinear_retrieval, storage_efficiency, transmission,
    StorageParams,
};
use sha2::{Digest, Sha256};
use std::path::Path;

pub const FIGURE_IDS: [&str; 11] = [
    "fig2a", "fig2b", "fig3a", "fig3b", "fig4", "fig5", "sfig1", "sfig2", "sfig3", "sfig4", "sfig5",
];

#[derive(Debug, Clone, Copy)]
pub struct PresetOptions {
    pub seed: u64,
    /// Trials per simulated point; `None` uses the preset default.
    pub trials: Option<u64>,
}

impl Default for PresetOptions {
    fn default() -> Self {
        PresetOptions {
            seed: 1,
            trials: None,
        }
    }
}

/// Shared paper-like operating point. Efficiencies are detection totals
/// (path times SPD); the write-arm total sets the p(w) <-> p calibration
/// used by the fits.
fn base_config(id: &str) -> Config {
    let mut config = Config::example();
    config.scenario.id = id.into();
    config.detectors = None;
    config.scenario.source = DlczSourceParams {
        p: 0.02,
        eta_w: 0.10,
        eta_r: 0.12,
        eta_a: 0.385,
        p_se: 0.05,
        p_nw: 2e-6,
        p_nr: 2e-4,
        tau_dlcz_us: 24.0,
        n_max: 20,
    };
    config.scenario.storage = StorageParams {
        eta0: 0.052,
        tau_r_us: 3.3,
        delta_f_khz: 182.3,
        p_f1: 0.5,
        t_off_us: 0.47,
    };
    config.scenario.memory_mode = MemoryMode::Bypass;
    config.scenario.hbt = HbtArm::None;
    config.scenario.layout = TrialLayout {
        trial_period_us: 60.0,
        write_center_us: 1.0,
        t_a_us: 1.0,
        t_b_us: 0.5,
    };
    config.run = RunSection {
        n_trials: 2_000_000,
        seed: 1,
    };
    config
}

fn preset_hash(parts: &[String]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(parts.join("\n").as_bytes());
    format!("{:x}", hasher.finalize())
}

fn fit_summary(name: &str, model: ModelId, result: &FitResult) -> String {
    let mut text = format!(
        "[{name}]\nmodel = \"{model}\"\nconverged = {}\nchi_square = {:.6e}\nn_dof = {}\nn_iterations = {}\n",
        result.converged, result.chi_square, result.n_dof, result.n_iterations
    );
    for (i, pname) in model.param_names().iter().enumerate() {
        text.push_str(&format!(
            "{pname} = {:.9e}\n{pname}_sigma = {:.9e}\n",
            result.params[i], result.uncertainties[i]
        ));
    }
    if !result.diagnostics.is_empty() {
        text.push_str(&format!("diagnostics = \"{}\"\n", result.diagnostics));
    }
    text
}

fn estimate_by_name<'a>(
    records: &'a [rydsim_core::counting::EstimateRecord],
    quantity: &str,
) -> anyhow::Result<&'a CorrelationEstimate> {
    records
        .iter()
        .find(|r| r.quantity == quantity)
        .map(|r| &r.estimate)
        .with_context(|| format!("estimator battery missing `{quantity}`"))
}

/// Run one simulated point and return its estimator battery.
fn simulate_point(
    config: &Config,
    seed: u64,
    n_trials: u64,
) -> anyhow::Result<Option<Vec<rydsim_core::counting::EstimateRecord>>> {
    let scenario = config.to_scenario()?;
    let stream = run_trials(&scenario, n_trials, seed)?;
    match analyze_stream(&scenario, &stream) {
        Ok(records) => Ok(Some(records)),
        Err(rydsim_core::Error::InsufficientStatistics(_)) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

pub fn reproduce(figure_id: &str, opts: PresetOptions, out_dir: &Path) -> anyhow::Result<Manifest> {
    match figure_id {
        "fig2a" => fig2_correlations(out_dir, opts, true),
        "fig2b" => fig2_correlations(out_dir, opts, false),
        "fig3a" => fig3a_storage_example(out_dir, opts),
        "fig3b" => fig3b_g2_after_storage(out_dir, opts),
        "fig4" => fig4_memory_decays(out_dir, opts),
        "fig5" => fig5_saturation(out_dir, opts),
        "sfig1" => sfig1_histogram(out_dir, opts),
        "sfig2" => sfig2_eit_spectrum(out_dir, opts),
        "sfig3" => sfig3_storage_beating(out_dir, opts),
        "sfig4" => sfig4_windowed_g2(out_dir, opts),
        "sfig5" => sfig5_linewidth(out_dir, opts),
        other => Err(ConfigError::new(format!(
            "unknown figure id `{other}`; available: {}",
            FIGURE_IDS.join(", ")
        ))
        .into()),
    }
}

/// Antibunching (fig2a) or cross-correlation (fig2b) versus p(w) without
/// Rydberg storage, with the noise-model fit on top.
fn fig2_correlations(out_dir: &Path, opts: PresetOptions, hbt: bool) -> anyhow::Result<Manifest> {
    let id = if hbt { "fig2a" } else { "fig2b" };
    let mut config = base_config(id);
    config.scenario.hbt = if hbt { HbtArm::ReadArm } else { HbtArm::None };
    let n_trials = opts.trials.unwrap_or(2_000_000);
    // alpha is exact in the excitation probability, so its sweep may reach
    // the multi-excitation regime; the g2 noise model is first order in p
    // and stays within the percent-level operating range
    let p_values: &[f64] = if hbt {
        &[0.004, 0.01, 0.03, 0.08, 0.15, 0.25, 0.4]
    } else {
        &[0.005, 0.01, 0.02, 0.04, 0.08, 0.15]
    };

    let mut writer = ArtifactWriter::new(out_dir)?;
    let quantity = if hbt { "alpha" } else { "g2_wr" };
    let mut csv = format!("p_w,{quantity},sigma,n_coinc\n");
    let mut data = Vec::new();
    for (i, &p) in p_values.iter().enumerate() {
        config.scenario.source.p = p;
        let Some(records) = simulate_point(&config, opts.seed.wrapping_add(i as u64), n_trials)?
        else {
            csv.push_str(&format!("{:.9e},nan,nan,0\n", p * config.scenario.source.eta_w));
            continue;
        };
        let p_w = *estimate_by_name(&records, "p_w")?;
        let est = *estimate_by_name(&records, quantity)?;
        csv.push_str(&format!(
            "{:.9e},{:.9e},{:.9e},{}\n",
            p_w.value, est.value, est.sigma, est.n_coinc
        ));
        if est.sigma > 0.0 {
            data.push((p_w.value, est.value, est.sigma));
        }
    }
    writer.write("curve.csv", &csv)?;
    if data.len() < 3 {
        return Err(rydsim_core::Error::InsufficientStatistics(format!(
            "only {} usable sweep points; raise --trials",
            data.len()
        ))
        .into());
    }

    let eta_w = config.scenario.source.eta_w;
    let src = &config.scenario.source;
    let (model, problem) = if hbt {
        let problem = FitProblem::new(ModelId::AlphaVsPw, data, vec![1.0 / eta_w, 1e-4]);
        (ModelId::AlphaVsPw, problem)
    } else {
        let initial = vec![1.0 / eta_w, 0.0, 0.5, src.eta_r, 0.1, src.p_nr];
        let problem =
            FitProblem::new(ModelId::G2VsPw, data, initial).with_fixed(&[0, 1, 3, 5]);
        (ModelId::G2VsPw, problem)
    };
    let result = fit(&problem)?;
    writer.write("summary.toml", &fit_summary("fit", model, &result))?;
    writer.finish(
        &preset_hash(&[id.into(), config.to_toml()?, format!("{n_trials}")]),
        opts.seed,
        n_trials,
    )
}

/// Heralded D2 arrival-time histogram for the input, slowed and retrieved
/// photon, plus the storage-efficiency ratio.
fn fig3a_storage_example(out_dir: &Path, opts: PresetOptions) -> anyhow::Result<Manifest> {
    let mut config = base_config("fig3a");
    config.scenario.source.p = 0.27;
    let n_trials = opts.trials.unwrap_or(2_000_000);
    let bin_us = 0.02;

    let modes: [(&str, MemoryMode); 3] = [
        ("input", MemoryMode::Bypass),
        (
            "slow_light",
            MemoryMode::SlowLight {
                transmission: 0.23,
                delay_us: 1.1,
                leak_fraction: 0.42,
            },
        ),
        ("retrieved", MemoryMode::Storage),
    ];

    let mut writer = ArtifactWriter::new(out_dir)?;
    let mut csv = String::from("mode,t_us,counts_per_herald_per_bin\n");
    let mut p_r_given_w = Vec::new();
    for (i, (name, mode)) in modes.iter().enumerate() {
        config.scenario.memory_mode = mode.clone();
        let scenario = config.to_scenario()?;
        let stream = run_trials(&scenario, n_trials, opts.seed.wrapping_add(i as u64))?;
        let w = scenario.windows();

        // trials with a write click
        let mut heralds: Vec<u64> = stream
            .tags
            .iter()
            .filter(|t| {
                t.detector == Detector::D1 && t.t_us >= w.write_lo() && t.t_us <= w.write_hi()
            })
            .map(|t| t.trial)
            .collect();
        heralds.dedup();
        let n_heralds = heralds.len().max(1) as f64;

        let lo = scenario.read_in_center_us() - 1.0;
        let hi = scenario.signal_center_us() + 1.5;
        let n_bins = ((hi - lo) / bin_us).ceil() as usize;
        let mut bins = vec![0u64; n_bins];
        let mut h_iter = heralds.iter().peekable();
        let mut heralded = std::collections::HashSet::new();
        for &h in heralds.iter() {
            heralded.insert(h);
        }
        let _ = h_iter.next();
        for tag in stream.tags.iter().filter(|t| t.detector == Detector::D2) {
            if !heralded.contains(&tag.trial) {
                continue;
            }
            if tag.t_us >= lo && tag.t_us < hi {
                bins[((tag.t_us - lo) / bin_us) as usize] += 1;
            }
        }
        for (b, &count) in bins.iter().enumerate() {
            let t = lo + (b as f64 + 0.5) * bin_us;
            csv.push_str(&format!("{name},{t:.4},{:.9e}\n", count as f64 / n_heralds));
        }

        let records = analyze_stream(&scenario, &stream)?;
        p_r_given_w.push((*name, *estimate_by_name(&records, "p_r_given_w")?));
    }
    writer.write("histogram.csv", &csv)?;

    let input = &p_r_given_w[0].1;
    let retrieved = &p_r_given_w[2].1;
    let eta_b = rydsim_core::counting::retrieval_ratio(retrieved, input)?;
    let t_t = config.scenario.layout.t_b_us + config.scenario.storage.t_off_us;
    let eta_b_model = storage_efficiency(&config.scenario.storage, t_t)?;
    let mut summary = String::from("[storage_efficiency]\n");
    for (name, est) in &p_r_given_w {
        summary.push_str(&format!("p_r_given_w_{name} = {:.6e}\n", est.value));
    }
    summary.push_str(&format!(
        "eta_b_measured = {:.6e}\neta_b_sigma = {:.6e}\neta_b_model = {:.6e}\n",
        eta_b.value, eta_b.sigma, eta_b_model
    ));
    writer.write("summary.toml", &summary)?;
    writer.finish(
        &preset_hash(&["fig3a".into(), config.to_toml()?, format!("{n_trials}")]),
        opts.seed,
        n_trials,
    )
}

/// Cross-correlation versus p(w) after storage and retrieval, fitted with
/// the noise model to recover the intrinsic retrieval efficiency.
fn fig3b_g2_after_storage(out_dir: &Path, opts: PresetOptions) -> anyhow::Result<Manifest> {
    let mut config = base_config("fig3b");
    config.scenario.memory_mode = MemoryMode::Storage;
    // the noise model applies the memory efficiency to the random-emission
    // branch as part of the total read transmission; mirror that here so
    // the g2 fit below is self-consistent
    config.scenario.noise_transmission = config.to_scenario()?.memory_efficiency()?;
    let n_trials = opts.trials.unwrap_or(6_000_000);
    let p_values = [0.01, 0.02, 0.04, 0.08, 0.12, 0.15];

    let mut writer = ArtifactWriter::new(out_dir)?;
    let mut csv = String::from("p_w,g2_wr,sigma,n_coinc\n");
    let mut data = Vec::new();
    for (i, &p) in p_values.iter().enumerate() {
        config.scenario.source.p = p;
        let Some(records) = simulate_point(&config, opts.seed.wrapping_add(i as u64), n_trials)?
        else {
            csv.push_str(&format!("{:.9e},nan,nan,0\n", p * config.scenario.source.eta_w));
            continue;
        };
        let p_w = *estimate_by_name(&records, "p_w")?;
        let g2 = *estimate_by_name(&records, "g2_wr")?;
        csv.push_str(&format!(
            "{:.9e},{:.9e},{:.9e},{}\n",
            p_w.value, g2.value, g2.sigma, g2.n_coinc
        ));
        data.push((p_w.value, g2.value, g2.sigma));
    }
    writer.write("curve.csv", &csv)?;

    // effective read transmission includes the memory efficiency
    let scenario = config.to_scenario()?;
    let eta_r_eff = config.scenario.source.eta_r * scenario.memory_efficiency()?;
    let initial = vec![
        1.0 / config.scenario.source.eta_w,
        0.0,
        0.5,
        eta_r_eff,
        0.1,
        config.scenario.source.p_nr,
    ];
    let problem = FitProblem::new(ModelId::G2VsPw, data, initial).with_fixed(&[0, 1, 3, 5]);
    let result = fit(&problem)?;
    let mut summary = fit_summary("fit", ModelId::G2VsPw, &result);
    summary.push_str(&format!(
        "eta_a_injected = {:.6e}\n",
        config.scenario.source.eta_a
    ));
    writer.write("summary.toml", &summary)?;
    writer.finish(
        &preset_hash(&["fig3b".into(), config.to_toml()?, format!("{n_trials}")]),
        opts.seed,
        n_trials,
    )
}

/// Retrieval probability and cross-correlation versus both storage times,
/// with the Gaussian-decay fits for the two coherence times.
fn fig4_memory_decays(out_dir: &Path, opts: PresetOptions) -> anyhow::Result<Manifest> {
    let mut config = base_config("fig4");
    config.scenario.memory_mode = MemoryMode::Storage;
    config.scenario.source.p = 0.1;
    let n_trials = opts.trials.unwrap_or(6_000_000);

    let mut writer = ArtifactWriter::new(out_dir)?;
    let mut csv = String::from("panel,x_us,quantity,value,sigma,n_coinc\n");

    // panels (a, b): sweep the Rydberg storage time
    let t_b_values: Vec<f64> = (0..14).map(|i| 0.5 + i as f64 * 0.75).collect();
    let mut decay_ab = Vec::new();
    for (i, &t_b) in t_b_values.iter().enumerate() {
        config.scenario.layout.t_b_us = t_b;
        config.scenario.noise_transmission = config.to_scenario()?.memory_efficiency()?;
        let Some(records) = simulate_point(&config, opts.seed.wrapping_add(i as u64), n_trials)?
        else {
            csv.push_str(&format!("a,{t_b:.3},p_r_given_w,nan,nan,0\n"));
            continue;
        };
        let pr = *estimate_by_name(&records, "p_r_given_w")?;
        let g2 = *estimate_by_name(&records, "g2_wr")?;
        csv.push_str(&format!(
            "a,{t_b:.3},p_r_given_w,{:.9e},{:.9e},{}\n",
            pr.value, pr.sigma, pr.n_coinc
        ));
        csv.push_str(&format!(
            "b,{t_b:.3},g2_wr,{:.9e},{:.9e},{}\n",
            g2.value, g2.sigma, g2.n_coinc
        ));
        if pr.sigma > 0.0 {
            decay_ab.push((t_b, pr.value, pr.sigma));
        }
    }
    config.scenario.layout.t_b_us = 0.5;

    // panels (c, d): sweep the source storage time
    let t_a_values: Vec<f64> = (0..12).map(|i| 1.0 + i as f64 * 3.5).collect();
    let mut decay_cd = Vec::new();
    for (i, &t_a) in t_a_values.iter().enumerate() {
        config.scenario.layout.t_a_us = t_a;
        config.scenario.noise_transmission = config.to_scenario()?.memory_efficiency()?;
        let Some(records) =
            simulate_point(&config, opts.seed.wrapping_add(100 + i as u64), n_trials)?
        else {
            csv.push_str(&format!("c,{t_a:.3},p_r_given_w,nan,nan,0\n"));
            continue;
        };
        let pr = *estimate_by_name(&records, "p_r_given_w")?;
        let g2 = *estimate_by_name(&records, "g2_wr")?;
        csv.push_str(&format!(
            "c,{t_a:.3},p_r_given_w,{:.9e},{:.9e},{}\n",
            pr.value, pr.sigma, pr.n_coinc
        ));
        csv.push_str(&format!(
            "d,{t_a:.3},g2_wr,{:.9e},{:.9e},{}\n",
            g2.value, g2.sigma, g2.n_coinc
        ));
        if pr.sigma > 0.0 {
            decay_cd.push((t_a, pr.value, pr.sigma));
        }
    }
    writer.write("curves.csv", &csv)?;

    // fit (a): storage-decay model with beating; x is t_B, the offset
    // t_OFF stays fixed at its configured value
    let s = &config.scenario.storage;
    let amp0 = decay_ab.first().map(|&(_, y, _)| y).unwrap_or(1e-3);
    // the free offset absorbs the non-decaying background floor
    let problem_a = FitProblem::new(
        ModelId::StorageDecay,
        decay_ab,
        vec![amp0, 2.5, 150.0, s.p_f1, s.t_off_us, 1e-5],
    )
    .with_fixed(&[3, 4]);
    let fit_a = fit(&problem_a)?;
    // fit (c): Gaussian decay of the source memory
    let amp0 = decay_cd.first().map(|&(_, y, _)| y).unwrap_or(1e-3);
    let problem_c = FitProblem::new(ModelId::DlczDecay, decay_cd, vec![amp0, 15.0, 1e-5]);
    let fit_c = fit(&problem_c)?;

    let mut summary = fit_summary("fit_panel_a", ModelId::StorageDecay, &fit_a);
    summary.push('\n');
    summary.push_str(&fit_summary("fit_panel_c", ModelId::DlczDecay, &fit_c));
    summary.push_str(&format!(
        "\n[injected]\ntau_r_us = {:.4}\ndelta_f_khz = {:.4}\ntau_dlcz_us = {:.4}\n",
        s.tau_r_us, s.delta_f_khz, config.scenario.source.tau_dlcz_us
    ));
    writer.write("summary.toml", &summary)?;
    writer.finish(
        &preset_hash(&["fig4".into(), config.to_toml()?, format!("{n_trials}")]),
        opts.seed,
        n_trials,
    )
}

/// Saturation of the retrieved photon number, fitted with the blockade
/// law. The microscopic blockade dynamics are out of scope; data are
/// generated from the effective saturation model with multiplicative noise.
fn fig5_saturation(out_dir: &Path, opts: PresetOptions) -> anyhow::Result<Manifest> {
    let config = base_config("fig5");
    let sat = config.saturation;
    let mut rng = ChaCha12Rng::seed_from_u64(opts.seed);
    let n_points = 12usize;
    let mut writer = ArtifactWriter::new(out_dir)?;
    let mut csv = String::from("n_in,n_out,sigma,n_out_over_t,model\n");
    let mut data = Vec::new();
    for i in 0..n_points {
        let n_in = 2.0 * (600.0f64 / 2.0).powf(i as f64 / (n_points - 1) as f64);
        let clean = nonlinear_retrieval(n_in, &sat)?;
        let sigma = 0.05 * clean;
        let noisy = (clean + sigma * rng.sample::<f64, _>(rand_distr::StandardNormal)).max(1e-6);
        csv.push_str(&format!(
            "{n_in:.9e},{noisy:.9e},{sigma:.9e},{:.9e},{clean:.9e}\n",
            noisy / sat.t_lin
        ));
        data.push((n_in, noisy, sigma));
    }
    writer.write("curve.csv", &csv)?;

    let problem = FitProblem::new(ModelId::Saturation, data, vec![30.0, 0.01]);
    let result = fit(&problem)?;
    let mut summary = fit_summary("fit", ModelId::Saturation, &result);
    summary.push_str(&format!(
        "n_max_injected = {:.4}\nt_lin_injected = {:.6}\nasymptote_n_max_t = {:.6}\n",
        sat.n_max,
        sat.t_lin,
        sat.n_max * sat.t_lin
    ));
    writer.write("summary.toml", &summary)?;
    writer.finish(
        &preset_hash(&["fig5".into(), format!("{sat:?}"), format!("{opts:?}")]),
        opts.seed,
        n_points as u64,
    )
}

/// Start-stop coincidence histogram across trial offsets.
fn sfig1_histogram(out_dir: &Path, opts: PresetOptions) -> anyhow::Result<Manifest> {
    let mut config = base_config("sfig1");
    config.scenario.source.p = 0.113;
    let n_trials = opts.trials.unwrap_or(2_000_000);
    let scenario = config.to_scenario()?;
    let stream = run_trials(&scenario, n_trials, opts.seed)?;
    let h = start_stop_histogram(&stream, &scenario.windows(), Detector::D1, Detector::D2)?;

    let mut writer = ArtifactWriter::new(out_dir)?;
    let mut csv = String::from("trial_offset,coincidences,poisson_sigma\n");
    for (k, &c) in h.peak_counts.iter().enumerate() {
        csv.push_str(&format!("{k},{c},{:.6e}\n", (c as f64).sqrt()));
    }
    writer.write("histogram.csv", &csv)?;
    let g2 = rydsim_core::counting::g2_from_histogram(&h)?;
    writer.write(
        "summary.toml",
        &format!(
            "[coincidences]\nn_starts = {}\npeak0 = {}\nmean_accidentals = {:.4}\ng2_wr = {:.6}\ng2_sigma = {:.6}\n",
            h.n_starts,
            h.peak_counts[0],
            h.mean_accidentals(),
            g2.value,
            g2.sigma
        ),
    )?;
    writer.finish(
        &preset_hash(&["sfig1".into(), config.to_toml()?, format!("{n_trials}")]),
        opts.seed,
        n_trials,
    )
}

/// EIT transmission spectra with and without coupling, a noisy synthetic
/// scan and its round-trip fit.
fn sfig2_eit_spectrum(out_dir: &Path, opts: PresetOptions) -> anyhow::Result<Manifest> {
    let config = base_config("sfig2");
    let medium = config.medium.to_params();
    let mut coupling_off = medium.clone();
    coupling_off.omega_c_mhz = 0.0;

    let mut rng = ChaCha12Rng::seed_from_u64(opts.seed);
    let noise_sigma = 0.01;
    let mut writer = ArtifactWriter::new(out_dir)?;
    let mut csv = String::from("delta_mhz,t_coupling_off,t_coupling_on,t_noisy\n");
    let mut data = Vec::new();
    for i in 0..=120 {
        let delta = -15.0 + i as f64 * 0.25;
        let t_off = transmission(&coupling_off, delta)?;
        let t_on = transmission(&medium, delta)?;
        let noisy = t_on + noise_sigma * rng.sample::<f64, _>(rand_distr::StandardNormal);
        csv.push_str(&format!(
            "{delta:.3},{t_off:.9e},{t_on:.9e},{noisy:.9e}\n"
        ));
        data.push((delta, noisy, noise_sigma));
    }
    writer.write("spectrum.csv", &csv)?;

    let problem = FitProblem::new(
        ModelId::EitSpectrum,
        data,
        vec![4.0, 2.0, 0.2, medium.gamma_mhz],
    )
    .with_fixed(&[3]);
    let result = fit(&problem)?;
    let mut summary = fit_summary("fit", ModelId::EitSpectrum, &result);
    summary.push_str(&format!(
        "od_injected = {:.4}\nomega_c_injected = {:.4}\ngamma_gr_injected = {:.4}\n",
        medium.od, medium.omega_c_mhz, medium.gamma_gr_mhz
    ));
    writer.write("summary.toml", &summary)?;
    writer.finish(
        &preset_hash(&["sfig2".into(), format!("{medium:?}"), format!("{opts:?}")]),
        opts.seed,
        121,
    )
}

/// Storage efficiency versus dwell time with the hyperfine beating, Poisson
/// noise and the round-trip fit.
fn sfig3_storage_beating(out_dir: &Path, opts: PresetOptions) -> anyhow::Result<Manifest> {
    let config = base_config("sfig3");
    // Supp.-Fig.-3 fitted values
    let truth = StorageParams {
        eta0: 0.052,
        tau_r_us: 3.34,
        delta_f_khz: 194.0,
        p_f1: 0.5,
        t_off_us: 0.0,
    };
    let counts_scale = 4.0e4;
    let mut rng = ChaCha12Rng::seed_from_u64(opts.seed);
    let mut writer = ArtifactWriter::new(out_dir)?;
    let mut csv = String::from("t_t_us,eta_model,eta_est,sigma\n");
    let mut data = Vec::new();
    for i in 0..=48 {
        let t_t = i as f64 * 0.25;
        let eta = storage_efficiency(&truth, t_t)?;
        let mean = counts_scale * eta;
        let counts = poisson_sample(mean, &mut rng);
        let est = counts / counts_scale;
        let sigma = (mean.max(1.0)).sqrt() / counts_scale;
        csv.push_str(&format!("{t_t:.3},{eta:.9e},{est:.9e},{sigma:.9e}\n"));
        data.push((t_t, est, sigma));
    }
    writer.write("curve.csv", &csv)?;

    let problem = FitProblem::new(
        ModelId::StorageDecay,
        data,
        vec![0.04, 2.5, 170.0, truth.p_f1, 0.0, 0.0],
    )
    .with_fixed(&[3, 4, 5]);
    let result = fit(&problem)?;
    let mut summary = fit_summary("fit", ModelId::StorageDecay, &result);
    summary.push_str(&format!(
        "tau_r_injected = {:.4}\ndelta_f_injected = {:.4}\nbeat_period_us = {:.4}\n",
        truth.tau_r_us,
        truth.delta_f_khz,
        1e3 / truth.delta_f_khz
    ));
    writer.write("summary.toml", &summary)?;
    writer.finish(
        &preset_hash(&["sfig3".into(), config.to_toml()?, format!("{opts:?}")]),
        opts.seed,
        49,
    )
}

/// Sliding-window cross-correlation across the slowed pulse with temporally
/// overlapping uncorrelated noise.
fn sfig4_windowed_g2(out_dir: &Path, opts: PresetOptions) -> anyhow::Result<Manifest> {
    let mut config = base_config("sfig4");
    config.scenario.source.p = 0.02;
    config.scenario.source.p_se = 0.8;
    config.scenario.source.eta_a = 0.5;
    config.scenario.source.eta_r = 0.3;
    config.scenario.memory_mode = MemoryMode::SlowLight {
        transmission: 0.5,
        delay_us: 1.1,
        leak_fraction: 0.0,
    };
    // noise keeps the input timing; widen it so it overlaps the slowed pulse
    config.scenario.noise_waveform = Some(rydsim_core::detection_sim::WaveformSpec::Gaussian {
        center_us: config.scenario.layout.write_center_us + config.scenario.layout.t_a_us + 0.3,
        fwhm_us: 0.7,
    });
    let n_trials = opts.trials.unwrap_or(12_000_000);
    let scenario = config.to_scenario()?;
    let stream = run_trials(&scenario, n_trials, opts.seed)?;
    let w = scenario.windows();

    let mut writer = ArtifactWriter::new(out_dir)?;
    let mut csv = String::from("t_w_us,g2,sigma,n_coinc\n");
    let center = scenario.read_in_center_us();
    let mut early = None;
    let mut late = None;
    for i in 0..=26 {
        let t_w = center - 0.4 + i as f64 * 0.1;
        match windowed_g2(&stream, &w, t_w, 0.123, Detector::D2) {
            Ok(g) => {
                csv.push_str(&format!(
                    "{t_w:.3},{:.9e},{:.9e},{}\n",
                    g.value, g.sigma, g.n_coinc
                ));
                if (t_w - (center + 0.3)).abs() < 0.05 {
                    early = Some(g);
                }
                if (t_w - (center + 1.5)).abs() < 0.05 {
                    late = Some(g);
                }
            }
            Err(rydsim_core::Error::InsufficientStatistics(_)) => {
                csv.push_str(&format!("{t_w:.3},nan,nan,0\n"));
            }
            Err(e) => return Err(e.into()),
        }
    }
    writer.write("curve.csv", &csv)?;
    let mut summary = String::from("[windowed_g2]\n");
    if let Some(g) = early {
        summary.push_str(&format!(
            "early_overlap_g2 = {:.6}\nearly_overlap_sigma = {:.6}\n",
            g.value, g.sigma
        ));
    }
    if let Some(g) = late {
        summary.push_str(&format!(
            "late_g2 = {:.6}\nlate_sigma = {:.6}\n",
            g.value, g.sigma
        ));
    }
    writer.write("summary.toml", &summary)?;
    writer.finish(
        &preset_hash(&["sfig4".into(), config.to_toml()?, format!("{n_trials}")]),
        opts.seed,
        n_trials,
    )
}

/// Memory linewidth: retrieval probability versus coupling detuning, the
/// Gaussian fit and the spectral deconvolution.
fn sfig5_linewidth(out_dir: &Path, opts: PresetOptions) -> anyhow::Result<Manifest> {
    let sigma_true = 1.01; // MHz, total Gaussian width of the scan
    let fwhm_factor = (8.0 * 2.0f64.ln()).sqrt();
    let fwhm_eit = 0.73;
    let amp = 1.5e-3;
    let counts_scale = 2.0e6;
    let mut rng = ChaCha12Rng::seed_from_u64(opts.seed);

    let mut writer = ArtifactWriter::new(out_dir)?;
    let mut csv = String::from("delta_c_mhz,p_r_given_w,sigma\n");
    let mut data = Vec::new();
    for i in 0..=32 {
        let delta = -4.0 + i as f64 * 0.25;
        let clean = amp * (-(delta / sigma_true).powi(2) / 2.0).exp();
        let counts = poisson_sample(clean * counts_scale, &mut rng);
        let est = counts / counts_scale;
        let sigma = (clean * counts_scale).max(1.0).sqrt() / counts_scale;
        csv.push_str(&format!("{delta:.3},{est:.9e},{sigma:.9e}\n"));
        data.push((delta, est, sigma));
    }
    writer.write("scan.csv", &csv)?;

    let problem = FitProblem::new(
        ModelId::GaussianLine,
        data,
        vec![1e-3, 0.8, 0.0, 0.0],
    )
    .with_fixed(&[2, 3]);
    let result = fit(&problem)?;
    let fwhm_total = fwhm_factor * result.params[1];
    let fwhm_read = memory_linewidth_deconvolve(fwhm_total, fwhm_eit)?;
    let mut summary = fit_summary("fit", ModelId::GaussianLine, &result);
    summary.push_str(&format!(
        "sigma_injected_mhz = {sigma_true:.4}\nfwhm_total_mhz = {fwhm_total:.4}\nfwhm_eit_mhz = {fwhm_eit:.4}\nfwhm_read_mhz = {fwhm_read:.4}\n"
    ));
    writer.write("summary.toml", &summary)?;
    writer.finish(
        &preset_hash(&["sfig5".into(), format!("{opts:?}")]),
        opts.seed,
        33,
    )
}

/// Knuth-style Poisson sampler; means here are large enough that the
/// normal approximation would also do, but exact sampling is cheap.
fn poisson_sample(mean: f64, rng: &mut ChaCha12Rng) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    if mean > 1e3 {
        // normal approximation for large means
        let draw: f64 = rng.sample(rand_distr::StandardNormal);
        return (mean + mean.sqrt() * draw).round().max(0.0);
    }
    let l = (-mean).exp();
    let mut k = 0u64;
    let mut p = 1.0;
    loop {
        p *= rng.gen::<f64>();
        if p <= l {
            return k as f64;
        }
        k += 1;
    }
}
