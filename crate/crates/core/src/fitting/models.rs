//! Model adapters: each `ModelId` delegates pointwise to the closed-form
//! operation owned by the physics modules, so fits and forward evaluation
//! cannot drift apart.

use super::Transform;
use crate::photon_source::{ideal_antibunching, noise_cross_correlation};
use crate::rydberg_memory::{saturation_model, storage_efficiency_model, transmission, EitMediumParams};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelId {
    /// EIT probe transmission vs detuning (MHz). Params: `od`, `omega_c`,
    /// `gamma_gr`, `gamma`.
    EitSpectrum,
    /// Cross-correlation vs measured write probability, with the excitation
    /// probability read off the write rate through `p = c1 x + c2`. Params:
    /// `c1`, `c2`, `eta_a`, `eta_r`, `p_se`, `p_nr`.
    ///
    /// Only the projective combination of `(eta_a*eta_r, (1-eta_a)*p_se*eta_r,
    /// p_nr)` is identifiable from the curve shape: rescaling all three
    /// leaves g² unchanged. Fits should fix `eta_r` and `p_nr` (and `c1`,
    /// `c2` from write-arm calibration) to pin the scale.
    G2VsPw,
    /// Heralded antibunching vs measured write probability. Params: `c1`, `c2`.
    AlphaVsPw,
    /// Storage efficiency vs Rydberg storage time with Gaussian dephasing
    /// and hyperfine beating. Params: `eta0`, `tau_r_us`, `delta_f_khz`,
    /// `p_f1`, `t_off_us`, `offset`.
    ///
    /// The beating factor is symmetric under `p_f1 <-> 1 - p_f1`, and its
    /// gradient vanishes at `p_f1 = 0.5`; fits near the balanced point
    /// should keep `p_f1` fixed.
    StorageDecay,
    /// Gaussian decay of the source retrieval vs source storage time.
    /// Params: `amp`, `tau_us`, `offset`.
    DlczDecay,
    /// Gaussian line `amp * exp(-(x-center)^2 / (2 sigma^2)) + offset`.
    /// Params: `amp`, `sigma`, `center`, `offset`.
    GaussianLine,
    /// Blockade saturation `N_max T (1 - exp(-x/N_max))`. Params: `n_max`,
    /// `t_lin`.
    Saturation,
}

impl ModelId {
    pub const ALL: [ModelId; 7] = [
        ModelId::EitSpectrum,
        ModelId::G2VsPw,
        ModelId::AlphaVsPw,
        ModelId::StorageDecay,
        ModelId::DlczDecay,
        ModelId::GaussianLine,
        ModelId::Saturation,
    ];

    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            ModelId::EitSpectrum => &["od", "omega_c_mhz", "gamma_gr_mhz", "gamma_mhz"],
            ModelId::G2VsPw => &["c1", "c2", "eta_a", "eta_r", "p_se", "p_nr"],
            ModelId::AlphaVsPw => &["c1", "c2"],
            ModelId::StorageDecay => &[
                "eta0",
                "tau_r_us",
                "delta_f_khz",
                "p_f1",
                "t_off_us",
                "offset",
            ],
            ModelId::DlczDecay => &["amp", "tau_us", "offset"],
            ModelId::GaussianLine => &["amp", "sigma", "center", "offset"],
            ModelId::Saturation => &["n_max", "t_lin"],
        }
    }

    pub fn default_transforms(&self) -> Vec<Transform> {
        let prob = Transform::Logistic { lo: 0.0, hi: 1.0 };
        match self {
            ModelId::EitSpectrum => vec![Transform::LogPositive; 4],
            ModelId::G2VsPw => vec![
                Transform::LogPositive,
                Transform::Free,
                prob,
                prob,
                prob,
                prob,
            ],
            ModelId::AlphaVsPw => vec![Transform::LogPositive, Transform::Free],
            ModelId::StorageDecay => vec![
                Transform::LogPositive,
                Transform::LogPositive,
                Transform::LogPositive,
                prob,
                Transform::Free,
                Transform::Free,
            ],
            ModelId::DlczDecay => vec![
                Transform::LogPositive,
                Transform::LogPositive,
                Transform::Free,
            ],
            ModelId::GaussianLine => vec![
                Transform::LogPositive,
                Transform::LogPositive,
                Transform::Free,
                Transform::Free,
            ],
            ModelId::Saturation => vec![Transform::LogPositive, Transform::LogPositive],
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ModelId::EitSpectrum => "eit_spectrum",
            ModelId::G2VsPw => "g2_vs_pw",
            ModelId::AlphaVsPw => "alpha_vs_pw",
            ModelId::StorageDecay => "storage_decay",
            ModelId::DlczDecay => "dlcz_decay",
            ModelId::GaussianLine => "gaussian_line",
            ModelId::Saturation => "saturation",
        };
        f.write_str(s)
    }
}

impl FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eit_spectrum" => Ok(ModelId::EitSpectrum),
            "g2_vs_pw" => Ok(ModelId::G2VsPw),
            "alpha_vs_pw" => Ok(ModelId::AlphaVsPw),
            "storage_decay" => Ok(ModelId::StorageDecay),
            "dlcz_decay" => Ok(ModelId::DlczDecay),
            "gaussian_line" => Ok(ModelId::GaussianLine),
            "saturation" => Ok(ModelId::Saturation),
            other => Err(Error::Parse(format!(
                "unknown model `{other}`; available: eit_spectrum, g2_vs_pw, alpha_vs_pw, \
                 storage_decay, dlcz_decay, gaussian_line, saturation"
            ))),
        }
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(1e-12, 1.0 - 1e-12)
}

/// Evaluate `model` at `x` for the given (external-space) parameters.
pub fn model_eval(model: ModelId, x: f64, params: &[f64]) -> Result<f64> {
    let n = model.param_names().len();
    if params.len() != n {
        return Err(Error::invalid(
            "params",
            format!("model `{model}` expects {n} parameters, got {}", params.len()),
        ));
    }
    let y = match model {
        ModelId::EitSpectrum => {
            let medium = EitMediumParams {
                od: params[0],
                omega_c_mhz: params[1],
                gamma_gr_mhz: params[2],
                gamma_mhz: params[3],
                // both cancel out of the transmission
                k_p_per_m: 1.0,
                length_m: 1.0,
            };
            transmission(&medium, x)?
        }
        ModelId::G2VsPw => {
            let p = clamp_prob(params[0] * x + params[1]);
            noise_cross_correlation(p, 1.0, params[3], params[2], params[4], 0.0, params[5])
        }
        ModelId::AlphaVsPw => {
            let p = clamp_prob(params[0] * x + params[1]);
            ideal_antibunching(p)?
        }
        ModelId::StorageDecay => {
            let t_t = (x + params[4]).max(0.0);
            storage_efficiency_model(params[0], params[1], params[2], params[3], t_t) + params[5]
        }
        ModelId::DlczDecay => params[0] * (-(x / params[1]).powi(2)).exp() + params[2],
        ModelId::GaussianLine => {
            let z = (x - params[2]) / params[1];
            params[0] * (-z * z / 2.0).exp() + params[3]
        }
        ModelId::Saturation => {
            if x < 0.0 {
                return Err(Error::invalid("x", "photon number must be >= 0"));
            }
            saturation_model(params[0], params[1], x)
        }
    };
    Ok(y)
}
