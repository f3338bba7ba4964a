//! Nonlinear weighted least-squares engine plus the model adapters for
//! every curve the analysis fits: EIT spectrum, g² and α versus p(w),
//! storage decay with hyperfine beating, source-memory decay, Gaussian
//! lines and the saturation curve.
//!
//! Parameters are optimized in a transformed space: probabilities through a
//! logistic map, positive scales through a log map. Bounds stay implicit
//! and the curvature matrix remains well conditioned.

mod engine;
mod models;
mod profile;

pub use engine::{fit, FitOptions};
pub use models::{model_eval, ModelId};
pub use profile::{profile_uncertainty, ProfileInterval};

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Parameter-space mapping between the external (physical) value and the
/// internal unconstrained coordinate used by the optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    /// Unbounded: internal = external.
    Free,
    /// Positive scale: external = exp(internal).
    LogPositive,
    /// Bounded interval: external = lo + (hi - lo) * sigmoid(internal).
    Logistic { lo: f64, hi: f64 },
}

impl Transform {
    pub fn to_internal(&self, external: f64) -> Result<f64> {
        match *self {
            Transform::Free => Ok(external),
            Transform::LogPositive => {
                if external <= 0.0 {
                    return Err(Error::invalid(
                        "initial_params",
                        format!("{external} must be > 0 for a log-transformed parameter"),
                    ));
                }
                Ok(external.ln())
            }
            Transform::Logistic { lo, hi } => {
                if !(external > lo && external < hi) {
                    return Err(Error::invalid(
                        "initial_params",
                        format!("{external} outside ({lo}, {hi})"),
                    ));
                }
                let f = (external - lo) / (hi - lo);
                Ok((f / (1.0 - f)).ln())
            }
        }
    }

    pub fn to_external(&self, internal: f64) -> f64 {
        match *self {
            Transform::Free => internal,
            Transform::LogPositive => internal.exp(),
            Transform::Logistic { lo, hi } => lo + (hi - lo) / (1.0 + (-internal).exp()),
        }
    }

    /// d(external)/d(internal), for mapping curvature uncertainties back.
    pub fn jacobian(&self, internal: f64) -> f64 {
        match *self {
            Transform::Free => 1.0,
            Transform::LogPositive => internal.exp(),
            Transform::Logistic { lo, hi } => {
                let s = 1.0 / (1.0 + (-internal).exp());
                (hi - lo) * s * (1.0 - s)
            }
        }
    }

    /// Domain of the internal coordinate where the map is numerically
    /// alive: a deeply saturated logistic (or a vanishing exponential)
    /// makes the finite-difference curvature underflow to an exact zero.
    pub fn internal_limits(&self) -> (f64, f64) {
        match *self {
            Transform::Free => (f64::NEG_INFINITY, f64::INFINITY),
            Transform::LogPositive => (-25.0, 25.0),
            Transform::Logistic { .. } => (-15.0, 15.0),
        }
    }

    /// A parameter sitting at the clamp is pinned at an effective bound.
    pub fn clamp_internal(&self, internal: f64) -> f64 {
        let (lo, hi) = self.internal_limits();
        internal.clamp(lo, hi)
    }
}

/// Optimizer selection; the damped least-squares path is the default, the
/// simplex path is a derivative-free fallback for ill-behaved problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[default]
    DampedLeastSquares,
    Simplex,
}

/// A weighted least-squares problem: model, data triples `(x, y, sigma_y)`,
/// starting point, per-parameter transforms and fixed mask.
#[derive(Debug, Clone)]
pub struct FitProblem {
    pub model: ModelId,
    pub data: Vec<(f64, f64, f64)>,
    pub initial: Vec<f64>,
    pub transforms: Vec<Transform>,
    pub fixed: Vec<bool>,
    pub algorithm: Algorithm,
    pub options: FitOptions,
}

impl FitProblem {
    /// Problem with the model's default transforms, everything free.
    pub fn new(model: ModelId, data: Vec<(f64, f64, f64)>, initial: Vec<f64>) -> Self {
        let transforms = model.default_transforms();
        let fixed = vec![false; transforms.len()];
        FitProblem {
            model,
            data,
            initial,
            transforms,
            fixed,
            algorithm: Algorithm::default(),
            options: FitOptions::default(),
        }
    }

    pub fn with_fixed(mut self, fixed: &[usize]) -> Self {
        for &i in fixed {
            self.fixed[i] = true;
        }
        self
    }

    pub fn n_free(&self) -> usize {
        self.fixed.iter().filter(|&&f| !f).count()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.model.param_names().len();
        if self.initial.len() != n || self.transforms.len() != n || self.fixed.len() != n {
            return Err(Error::invalid(
                "initial_params",
                format!(
                    "model `{}` has {} parameters, got {} initial / {} transforms / {} fixed",
                    self.model,
                    n,
                    self.initial.len(),
                    self.transforms.len(),
                    self.fixed.len()
                ),
            ));
        }
        if self.data.iter().any(|&(_, _, s)| s <= 0.0 || !s.is_finite()) {
            return Err(Error::invalid("data", "every sigma_y must be finite and > 0"));
        }
        if self.data.len() < self.n_free() {
            return Err(Error::invalid(
                "data",
                format!(
                    "{} points cannot constrain {} free parameters",
                    self.data.len(),
                    self.n_free()
                ),
            ));
        }
        for (i, (&v, t)) in self.initial.iter().zip(&self.transforms).enumerate() {
            t.to_internal(v).map_err(|_| {
                Error::invalid(
                    "initial_params",
                    format!("parameter `{}` = {v} outside its bounds", self.model.param_names()[i]),
                )
            })?;
        }
        Ok(())
    }
}

/// Fit outcome: parameters, one-sigma curvature uncertainties, goodness of
/// fit and convergence diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: Vec<f64>,
    pub uncertainties: Vec<f64>,
    pub chi_square: f64,
    pub n_dof: usize,
    pub converged: bool,
    pub n_iterations: usize,
    /// Non-empty when the fit flagged a problem (singular curvature,
    /// iteration cap); never silently absent.
    pub diagnostics: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn transforms_round_trip() {
        for t in [
            Transform::Free,
            Transform::LogPositive,
            Transform::Logistic { lo: 0.0, hi: 1.0 },
            Transform::Logistic { lo: -2.0, hi: 5.0 },
        ] {
            for &v in &[0.1, 0.5, 0.9] {
                let ext = match t {
                    Transform::Logistic { lo, hi } => lo + (hi - lo) * v,
                    _ => v,
                };
                let z = t.to_internal(ext).unwrap();
                assert_relative_eq!(t.to_external(z), ext, max_relative = 1e-12);
                // jacobian consistent with finite differences
                let h = 1e-6;
                let fd = (t.to_external(z + h) - t.to_external(z - h)) / (2.0 * h);
                assert_relative_eq!(t.jacobian(z), fd, max_relative = 1e-6);
            }
        }
        assert!(Transform::LogPositive.to_internal(-1.0).is_err());
        assert!(Transform::Logistic { lo: 0.0, hi: 1.0 }.to_internal(1.5).is_err());
    }
}
