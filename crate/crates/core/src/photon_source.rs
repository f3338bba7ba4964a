//! Closed-form model of the DLCZ photon-pair source.
//!
//! The write process prepares a two-mode squeezed state of the write-photon
//! mode and the collective spin excitation, so the joint photon-number
//! distribution is geometric, `P(n) = (1-p) p^n`, with write and read numbers
//! perfectly correlated. On top of the ideal statistics this module carries
//! the noise-dressed detection-probability model (directional retrieval,
//! spontaneous-emission background, dark counts) that every correlation fit
//! in the analysis chain is built from.

use crate::constants::BOLTZMANN;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Source-side parameters: excitation probability, efficiencies and noise
/// floors of the pair source.
///
/// `eta_r` is the *total* transmission of the read photon after it leaves
/// the ensemble, including any downstream memory efficiency and the
/// detector; `p_nw`/`p_nr` are per-gate background probabilities (stray
/// light plus dark counts).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DlczSourceParams {
    /// Spin-wave excitation probability per trial, in (0,1).
    pub p: f64,
    /// Write-photon total detection efficiency.
    pub eta_w: f64,
    /// Read-path transmission + detection efficiency.
    pub eta_r: f64,
    /// Intrinsic retrieval efficiency of the source at zero delay.
    pub eta_a: f64,
    /// Branching probability for a failed retrieval to emit a random
    /// (spontaneous-emission) photon into the detected mode.
    pub p_se: f64,
    /// Background-count probability per write gate.
    pub p_nw: f64,
    /// Background-count probability per read gate.
    pub p_nr: f64,
    /// 1/e coherence time of the spin wave, µs.
    pub tau_dlcz_us: f64,
    /// Fock truncation order used by closed-form sums.
    pub n_max: u32,
}

impl DlczSourceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(Error::invalid("p", format!("{} not in (0,1)", self.p)));
        }
        for (name, v) in [
            ("eta_w", self.eta_w),
            ("eta_r", self.eta_r),
            ("eta_a", self.eta_a),
            ("p_se", self.p_se),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(name, format!("{v} not in [0,1]")));
            }
        }
        for (name, v) in [("p_nw", self.p_nw), ("p_nr", self.p_nr)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::invalid(name, format!("{v} not in [0,1)")));
            }
        }
        if self.tau_dlcz_us <= 0.0 {
            return Err(Error::invalid("tau_dlcz_us", "must be > 0"));
        }
        if self.n_max < 2 {
            return Err(Error::invalid("n_max", "must be >= 2"));
        }
        let tail = self.p.powi(self.n_max as i32 + 1);
        if tail >= 1e-6 {
            return Err(Error::invalid(
                "n_max",
                format!("truncated tail mass {tail:.2e} too large for p={}", self.p),
            ));
        }
        Ok(())
    }

    /// Intrinsic retrieval efficiency after a storage time `t_us` in the
    /// source memory: Gaussian motional decay `eta_a * exp(-t^2/tau^2)`.
    pub fn retrieval_efficiency(&self, t_us: f64) -> f64 {
        self.eta_a * (-(t_us / self.tau_dlcz_us).powi(2)).exp()
    }
}

/// Truncation order for which the neglected tail mass `p^(n_max+1)` stays
/// below 1e-12.
pub fn default_fock_truncation(p: f64) -> u32 {
    let n = (1e-12f64.ln() / p.ln()).ceil() as u32;
    n.max(2)
}

/// Joint photon-number distribution of the pair state, `n_w = n_r = n`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairNumberDistribution {
    /// `(n, P(n))` for `n = 0..=n_max`.
    pub probs: Vec<(u32, f64)>,
}

impl PairNumberDistribution {
    pub fn total_mass(&self) -> f64 {
        self.probs.iter().map(|&(_, p)| p).sum()
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().map(|&(n, p)| n as f64 * p).sum()
    }
}

/// Geometric pair-number distribution `P(n) = (1-p) p^n`, truncated at
/// `n_max`.
pub fn pair_number_distribution(p: f64, n_max: u32) -> Result<PairNumberDistribution> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid("p", format!("{p} not in (0,1)")));
    }
    if n_max < 2 {
        return Err(Error::invalid("n_max", "must be >= 2"));
    }
    let probs = (0..=n_max)
        .map(|n| (n, (1.0 - p) * p.powi(n as i32)))
        .collect();
    Ok(PairNumberDistribution { probs })
}

/// Ideal write–read cross-correlation of the two-mode squeezed state,
/// `g2_wr = 1 + 1/p`. Thermal-marginal classical light is bounded by 2.
pub fn ideal_cross_correlation(p: f64) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::invalid("p", format!("{p} not in (0,1]")));
    }
    Ok(1.0 + 1.0 / p)
}

/// Ideal heralded antibunching parameter of the read field,
/// `alpha = 2p(2+p)/(1+p)^2`; tends to `4p` as `p -> 0`.
pub fn ideal_antibunching(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid("p", format!("{p} not in [0,1]")));
    }
    Ok(2.0 * p * (2.0 + p) / (1.0 + p).powi(2))
}

/// The noise-dressed single and coincidence detection probabilities
/// `(p_w, p_r, p_wr)` for a source-memory delay `t_a_us`.
///
/// The read-photon probability splits into a directional part (retrieval of
/// the heralded excitation) and a random part: spontaneous emission scales
/// with the failed-retrieval population and is uncorrelated with the write
/// detection, so it enters the coincidence probability multiplied by the
/// unconditional excitation probability.
pub fn detection_probabilities(params: &DlczSourceParams, t_a_us: f64) -> Result<(f64, f64, f64)> {
    params.validate()?;
    if t_a_us < 0.0 {
        return Err(Error::invalid("t_a_us", "must be >= 0"));
    }
    let eta_a_t = params.retrieval_efficiency(t_a_us);
    Ok(noise_detection_probabilities(
        params.p,
        params.eta_w,
        params.eta_r,
        eta_a_t,
        params.p_se,
        params.p_nw,
        params.p_nr,
    ))
}

/// Raw detection-probability equations without struct validation; shared
/// with the fit models, which explore the parameter space freely.
pub fn noise_detection_probabilities(
    p: f64,
    eta_w: f64,
    eta_r: f64,
    eta_a_t: f64,
    p_se: f64,
    p_nw: f64,
    p_nr: f64,
) -> (f64, f64, f64) {
    let p_w = p * eta_w + p_nw;
    let random = p * (1.0 - eta_a_t) * p_se * eta_r;
    let p_r = p * eta_a_t * eta_r + random + p_nr;
    let p_wr = p_w * eta_a_t * eta_r + p_w * random + p_w * p_nr;
    (p_w, p_r, p_wr)
}

/// Cross-correlation `g2_wr = p_wr / (p_w p_r)` of the noise model.
pub fn noise_cross_correlation(
    p: f64,
    eta_w: f64,
    eta_r: f64,
    eta_a_t: f64,
    p_se: f64,
    p_nw: f64,
    p_nr: f64,
) -> f64 {
    let (p_w, p_r, p_wr) = noise_detection_probabilities(p, eta_w, eta_r, eta_a_t, p_se, p_nw, p_nr);
    p_wr / (p_w * p_r)
}

/// Motional coherence time `sqrt(m / (k_B T dk^2))` in seconds, for atomic
/// mass `mass_kg`, temperature `temperature_k` and wavevector mismatch
/// `delta_k_per_m`.
pub fn motional_coherence_time(mass_kg: f64, temperature_k: f64, delta_k_per_m: f64) -> Result<f64> {
    for (name, v) in [
        ("mass_kg", mass_kg),
        ("temperature_k", temperature_k),
        ("delta_k_per_m", delta_k_per_m),
    ] {
        if v <= 0.0 {
            return Err(Error::invalid(name, format!("{v} must be > 0")));
        }
    }
    Ok((mass_kg / (BOLTZMANN * temperature_k * delta_k_per_m * delta_k_per_m)).sqrt())
}
