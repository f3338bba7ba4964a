//! Scenario configuration: a hand-editable TOML schema with exhaustive
//! validation, mapped onto the core simulation scenario.
//!
//! Units are fixed per field: times in µs, rates in MHz, hyperfine
//! splittings in kHz, probabilities and efficiencies dimensionless.

use anyhow::{bail, Context};
use rydsim_core::counting::WindowSpec;
use rydsim_core::detection_sim::{HbtArm, MemoryMode, Scenario, SpdParams, TrialLayout, WaveformSpec};
use rydsim_core::photon_source::DlczSourceParams;
use rydsim_core::rydberg_memory::{EitMediumParams, SaturationParams, StorageParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Top-level configuration file.
///
/// `source.eta_w` / `source.eta_r` are path transmissions; the SPD
/// efficiencies and dark counts from `[detectors]` are folded in when
/// building the effective simulation scenario. Without a `[detectors]`
/// table the source values are used as totals directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub detectors: Option<DetectorBank>,
    /// EIT medium parameters; consumed by the spectrum presets.
    #[serde(default = "default_medium")]
    pub medium: MediumSection,
    /// Blockade saturation law; consumed by the nonlinearity preset.
    #[serde(default = "default_saturation")]
    pub saturation: SaturationParams,
    pub run: RunSection,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub id: String,
    pub source: DlczSourceParams,
    pub storage: StorageParams,
    pub memory_mode: MemoryMode,
    pub hbt: HbtArm,
    pub layout: TrialLayout,
    #[serde(default)]
    pub windows: Option<WindowSpec>,
    #[serde(default)]
    pub write_waveform: Option<WaveformSpec>,
    #[serde(default)]
    pub read_waveform: Option<WaveformSpec>,
    #[serde(default)]
    pub noise_waveform: Option<WaveformSpec>,
    #[serde(default = "one")]
    pub noise_transmission: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorBank {
    pub d1: SpdParams,
    pub d2: SpdParams,
    pub d3: SpdParams,
    pub d4: SpdParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumSection {
    pub od: f64,
    pub gamma_mhz: f64,
    pub omega_c_mhz: f64,
    pub gamma_gr_mhz: f64,
}

impl MediumSection {
    pub fn to_params(&self) -> EitMediumParams {
        EitMediumParams {
            od: self.od,
            gamma_mhz: self.gamma_mhz,
            omega_c_mhz: self.omega_c_mhz,
            gamma_gr_mhz: self.gamma_gr_mhz,
            k_p_per_m: rydsim_core::constants::wavenumber(
                rydsim_core::constants::WAVELENGTH_780_NM,
            ),
            length_m: 1e-3,
        }
    }
}

fn default_medium() -> MediumSection {
    MediumSection {
        od: 5.4,
        gamma_mhz: rydsim_core::constants::RB87_D2_LINEWIDTH_MHZ,
        omega_c_mhz: 2.66,
        gamma_gr_mhz: 0.29,
    }
}

fn default_saturation() -> SaturationParams {
    SaturationParams {
        n_max: 68.0,
        t_lin: 0.0044,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub n_trials: u64,
    pub seed: u64,
}

/// Sweep of one configuration variable over a value list; the variable
/// name must resolve to a known config path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub variable: String,
    pub values: Vec<f64>,
}

pub const SWEEP_VARIABLES: [&str; 10] = [
    "source.p",
    "source.eta_w",
    "source.eta_r",
    "source.eta_a",
    "source.p_se",
    "source.p_nw",
    "source.p_nr",
    "layout.t_a_us",
    "layout.t_b_us",
    "storage.t_off_us",
];

impl Config {
    pub fn from_toml(text: &str) -> anyhow::Result<Config> {
        let config: Config = toml::from_str(text).context("parsing configuration TOML")?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        toml::to_string_pretty(self).context("serializing configuration")
    }

    /// SHA-256 of the canonical serialized form.
    pub fn hash(&self) -> anyhow::Result<String> {
        let canonical = self.to_toml()?;
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        Ok(format!("{:x}", hasher.finalize()))
    }

    /// Fold the detector bank into effective totals and hand back the core
    /// scenario the simulator consumes.
    pub fn to_scenario(&self) -> anyhow::Result<Scenario> {
        let s = &self.scenario;
        let mut source = s.source.clone();
        if let Some(bank) = &self.detectors {
            for (name, spd) in [
                ("detectors.d1", &bank.d1),
                ("detectors.d2", &bank.d2),
                ("detectors.d3", &bank.d3),
                ("detectors.d4", &bank.d4),
            ] {
                spd.validate()
                    .map_err(|e| anyhow::anyhow!("{name}: {e}"))?;
            }
            let (write_spd, read_spd) = match s.hbt {
                HbtArm::None => (&bank.d1, &bank.d2),
                HbtArm::ReadArm => {
                    if (bank.d3.efficiency - bank.d4.efficiency).abs() > 1e-12 {
                        bail!("detectors.d3/d4: HBT arms must have equal efficiency");
                    }
                    (&bank.d1, &bank.d3)
                }
                HbtArm::WriteArm => {
                    if (bank.d3.efficiency - bank.d4.efficiency).abs() > 1e-12 {
                        bail!("detectors.d3/d4: HBT arms must have equal efficiency");
                    }
                    (&bank.d3, &bank.d2)
                }
            };
            source.eta_w *= write_spd.efficiency;
            source.eta_r *= read_spd.efficiency;
            source.p_nw += write_spd.dark_prob_per_gate;
            source.p_nr += read_spd.dark_prob_per_gate;
        }
        let scenario = Scenario {
            id: s.id.clone(),
            source,
            storage: s.storage.clone(),
            memory_mode: s.memory_mode.clone(),
            hbt: s.hbt,
            layout: s.layout,
            windows: s.windows.clone(),
            write_waveform: s.write_waveform.clone(),
            read_waveform: s.read_waveform.clone(),
            noise_waveform: s.noise_waveform.clone(),
            noise_transmission: s.noise_transmission,
        };
        scenario
            .validate()
            .map_err(|e| anyhow::anyhow!("scenario: {e}"))?;
        Ok(scenario)
    }

    /// Full validation with field-level diagnostics; performed before any
    /// compute.
    pub fn validate(&self) -> anyhow::Result<()> {
        self.to_scenario()?;
        let medium = self.medium.to_params();
        medium
            .validate()
            .map_err(|e| anyhow::anyhow!("medium: {e}"))?;
        self.saturation
            .validate()
            .map_err(|e| anyhow::anyhow!("saturation: {e}"))?;
        if self.run.n_trials == 0 {
            bail!("run.n_trials: must be >= 1");
        }
        if let Some(sweep) = &self.sweep {
            if !SWEEP_VARIABLES.contains(&sweep.variable.as_str()) {
                bail!(
                    "sweep.variable: `{}` does not resolve to a config path; known: {}",
                    sweep.variable,
                    SWEEP_VARIABLES.join(", ")
                );
            }
            if sweep.values.is_empty() {
                bail!("sweep.values: must be non-empty");
            }
            // every sweep point must itself validate
            for &v in &sweep.values {
                let mut probe = self.clone();
                probe.sweep = None;
                probe
                    .set_variable(&sweep.variable, v)
                    .with_context(|| format!("sweep value {v}"))?;
                probe
                    .to_scenario()
                    .with_context(|| format!("sweep value {v}"))?;
            }
        }
        Ok(())
    }

    /// Assign a sweep variable by its config path.
    pub fn set_variable(&mut self, path: &str, value: f64) -> anyhow::Result<()> {
        let s = &mut self.scenario;
        match path {
            "source.p" => s.source.p = value,
            "source.eta_w" => s.source.eta_w = value,
            "source.eta_r" => s.source.eta_r = value,
            "source.eta_a" => s.source.eta_a = value,
            "source.p_se" => s.source.p_se = value,
            "source.p_nw" => s.source.p_nw = value,
            "source.p_nr" => s.source.p_nr = value,
            "layout.t_a_us" => s.layout.t_a_us = value,
            "layout.t_b_us" => s.layout.t_b_us = value,
            "storage.t_off_us" => s.storage.t_off_us = value,
            other => bail!("unknown sweep variable `{other}`"),
        }
        Ok(())
    }

    /// Paper-like defaults: source parameters at the percent-level operating
    /// point, detector bank at a realistic detection efficiency, Rydberg
    /// storage for 500 ns.
    pub fn example() -> Config {
        Config {
            scenario: ScenarioSection {
                id: "example".into(),
                source: DlczSourceParams {
                    p: 0.05,
                    eta_w: 0.66,
                    eta_r: 0.66,
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
                memory_mode: MemoryMode::Storage,
                hbt: HbtArm::None,
                layout: TrialLayout {
                    trial_period_us: 50.0,
                    write_center_us: 1.0,
                    t_a_us: 1.0,
                    t_b_us: 0.5,
                },
                windows: None,
                write_waveform: None,
                read_waveform: None,
                noise_waveform: None,
                noise_transmission: 1.0,
            },
            detectors: Some(DetectorBank {
                d1: spd_default(),
                d2: spd_default(),
                d3: spd_default(),
                d4: spd_default(),
            }),
            medium: default_medium(),
            saturation: default_saturation(),
            run: RunSection {
                n_trials: 2_000_000,
                seed: 1,
            },
            sweep: None,
        }
    }
}

fn spd_default() -> SpdParams {
    SpdParams {
        efficiency: 0.152,
        dark_prob_per_gate: 1e-5,
        gate_width_us: 0.6,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_config_round_trips() {
        let config = Config::example();
        config.validate().unwrap();
        let text = config.to_toml().unwrap();
        let back = Config::from_toml(&text).unwrap();
        assert_eq!(back, config);
        assert_eq!(back.to_toml().unwrap(), text);
        assert_eq!(back.hash().unwrap(), config.hash().unwrap());
    }

    #[test]
    fn detector_bank_folds_into_totals() {
        let config = Config::example();
        let scenario = config.to_scenario().unwrap();
        assert!((scenario.source.eta_w - 0.66 * 0.152).abs() < 1e-12);
        assert!((scenario.source.eta_r - 0.66 * 0.152).abs() < 1e-12);
        assert!((scenario.source.p_nw - (1e-5 + 1e-5)).abs() < 1e-15);
    }

    #[test]
    fn rejects_unknown_sweep_variable() {
        let mut config = Config::example();
        config.sweep = Some(SweepSection {
            variable: "source.nonsense".into(),
            values: vec![0.01],
        });
        let err = config.validate().unwrap_err().to_string();
        assert!(err.contains("does not resolve"), "{err}");
    }

    #[test]
    fn rejects_invalid_sweep_value() {
        let mut config = Config::example();
        config.sweep = Some(SweepSection {
            variable: "source.p".into(),
            values: vec![0.01, 1.5],
        });
        assert!(config.validate().is_err());
    }

    #[test]
    fn rejects_unknown_fields() {
        let mut text = Config::example().to_toml().unwrap();
        text.push_str("\n[typo_section]\nx = 1\n");
        assert!(Config::from_toml(&text).is_err());
    }

    #[test]
    fn rejects_unequal_hbt_arms() {
        let mut config = Config::example();
        config.scenario.hbt = HbtArm::ReadArm;
        config.detectors.as_mut().unwrap().d4.efficiency = 0.3;
        let err = config.validate().unwrap_err().to_string();
        assert!(err.contains("equal efficiency"), "{err}");
    }
}
