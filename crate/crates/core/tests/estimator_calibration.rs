//! Statistical quality of the estimators: reported error bars must track
//! the true seed-to-seed spread, and estimator variances must scale as
//! 1/n_trials when independent-seed streams are merged.

use rydsim_core::counting::{antibunching_estimator, conditional_retrieval, cross_correlation};
use rydsim_core::detection_sim::{run_trials, Detector, HbtArm, MemoryMode, Scenario, TrialLayout};
use rydsim_core::photon_source::DlczSourceParams;
use rydsim_core::rydberg_memory::StorageParams;

fn scenario() -> Scenario {
    Scenario {
        id: "calib".into(),
        source: DlczSourceParams {
            p: 0.05,
            eta_w: 0.3,
            eta_r: 0.3,
            eta_a: 0.385,
            p_se: 0.05,
            p_nw: 1e-5,
            p_nr: 3e-4,
            tau_dlcz_us: 24.0,
            n_max: 20,
        },
        storage: StorageParams {
            eta0: 0.05,
            tau_r_us: 3.3,
            delta_f_khz: 182.3,
            p_f1: 0.5,
            t_off_us: 0.47,
        },
        memory_mode: MemoryMode::Bypass,
        hbt: HbtArm::None,
        layout: TrialLayout {
            trial_period_us: 10.0,
            write_center_us: 0.5,
            t_a_us: 1.0,
            t_b_us: 0.5,
        },
        windows: None,
        write_waveform: None,
        read_waveform: None,
        noise_waveform: None,
        noise_transmission: 1.0,
    }
}

fn mean_and_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Over 100 seeds the empirical spread of each estimator matches its mean
/// reported sigma within 20%.
#[test]
fn reported_sigmas_track_empirical_spread() {
    let sc = scenario();
    let mut hbt = scenario();
    hbt.hbt = HbtArm::ReadArm;
    hbt.source.p = 0.1;
    hbt.source.eta_r = 0.5;

    let n_trials = 150_000;
    let mut g2s = Vec::new();
    let mut g2_sigmas = Vec::new();
    let mut prs = Vec::new();
    let mut pr_sigmas = Vec::new();
    let mut alphas = Vec::new();
    let mut alpha_sigmas = Vec::new();
    for seed in 0..100 {
        let stream = run_trials(&sc, n_trials, 10_000 + seed).unwrap();
        let g = cross_correlation(&stream, &sc.windows(), Detector::D1, Detector::D2).unwrap();
        g2s.push(g.value);
        g2_sigmas.push(g.sigma);
        let pr = conditional_retrieval(&stream, &sc.windows(), Detector::D1, Detector::D2).unwrap();
        prs.push(pr.value);
        pr_sigmas.push(pr.sigma);

        let hbt_stream = run_trials(&hbt, n_trials, 20_000 + seed).unwrap();
        let a = antibunching_estimator(&hbt_stream, &hbt.windows()).unwrap();
        alphas.push(a.value);
        alpha_sigmas.push(a.sigma);
    }

    for (name, values, sigmas) in [
        ("g2_wr", &g2s, &g2_sigmas),
        ("p(r|w)", &prs, &pr_sigmas),
        ("alpha", &alphas, &alpha_sigmas),
    ] {
        let (_, sd) = mean_and_sd(values);
        let mean_sigma = sigmas.iter().sum::<f64>() / sigmas.len() as f64;
        let ratio = sd / mean_sigma;
        assert!(
            (ratio - 1.0).abs() < 0.2,
            "{name}: empirical sd {sd:.4} vs mean reported sigma {mean_sigma:.4} (ratio {ratio:.3})"
        );
    }
}

/// Merging streams from distinct seeds behaves like more trials: the g2
/// variance over replicas falls as 1/n at three sizes.
#[test]
fn variance_scales_inversely_with_trials() {
    let sc = scenario();
    let n_base = 60_000u64;
    let replicas = 24u64;
    let mut variances = Vec::new();
    for level in 0..3u32 {
        let n_merge = 1u64 << level; // 1, 2, 4 stream merges
        let mut values = Vec::new();
        for r in 0..replicas {
            let mut stream = run_trials(&sc, n_base, 300_000 + 97 * r).unwrap();
            for m in 1..n_merge {
                let extra = run_trials(&sc, n_base, 300_000 + 97 * r + 31 * m).unwrap();
                stream = stream.merged(&extra);
            }
            let g = cross_correlation(&stream, &sc.windows(), Detector::D1, Detector::D2).unwrap();
            values.push(g.value);
        }
        let (_, sd) = mean_and_sd(&values);
        variances.push(sd * sd);
    }
    // log-log slope of variance vs trials should be close to -1
    let slope01 = (variances[1] / variances[0]).ln() / 2f64.ln();
    let slope12 = (variances[2] / variances[1]).ln() / 2f64.ln();
    let slope = (slope01 + slope12) / 2.0;
    assert!(
        (slope + 1.0).abs() < 0.45,
        "variance scaling slope {slope:.2}, variances {variances:?}"
    );
}
