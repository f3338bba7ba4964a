//! Δχ² = 1 profile-likelihood intervals, for the asymmetric cases the
//! curvature estimate cannot represent (parameters pinned against a bound,
//! zero-count data).

use super::{fit, FitProblem, FitResult};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Profile interval for one parameter. An unbounded side keeps the furthest
/// scanned value and clears its `*_bounded` flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileInterval {
    pub lo: f64,
    pub hi: f64,
    pub lo_bounded: bool,
    pub hi_bounded: bool,
}

/// Profile chi-square at `z_k` fixed: re-fit all other free parameters.
fn profile_chi2(problem: &FitProblem, best: &FitResult, param_index: usize, external: f64) -> Result<f64> {
    let mut sub = problem.clone();
    sub.initial = best.params.clone();
    sub.initial[param_index] = external;
    sub.fixed[param_index] = true;
    if sub.n_free() == 0 {
        // nothing left to profile over: evaluate directly
        let chi2: f64 = sub
            .data
            .iter()
            .map(|&(x, y, s)| {
                let f = super::model_eval(sub.model, x, &sub.initial).unwrap_or(f64::NAN);
                ((y - f) / s).powi(2)
            })
            .sum();
        return Ok(chi2);
    }
    Ok(fit(&sub)?.chi_square)
}

/// Parameter values where the profiled chi-square rises by 1 above the
/// optimum, scanning each side in units of the curvature sigma.
pub fn profile_uncertainty(
    problem: &FitProblem,
    result: &FitResult,
    param_index: usize,
) -> Result<ProfileInterval> {
    if param_index >= problem.fixed.len() {
        return Err(Error::invalid("param_index", "out of range"));
    }
    if !result.converged {
        return Err(Error::NonConvergence(
            "profile requires a converged fit".into(),
        ));
    }
    let value = result.params[param_index];
    if problem.fixed[param_index] {
        return Ok(ProfileInterval {
            lo: value,
            hi: value,
            lo_bounded: true,
            hi_bounded: true,
        });
    }

    let transform = problem.transforms[param_index];
    let z0 = transform.to_internal(value)?;
    // curvature sigma in internal coordinates sets the scan scale
    let sigma_ext = result.uncertainties[param_index];
    let dext = transform.jacobian(z0).abs().max(1e-300);
    let sigma_z = if sigma_ext > 0.0 { sigma_ext / dext } else { 0.5 };
    let target = result.chi_square + 1.0;

    let side = |direction: f64| -> Result<(f64, bool)> {
        let mut z_prev = z0;
        let mut chi_prev = result.chi_square;
        let max_steps = 60;
        for j in 1..=max_steps {
            let z = z0 + direction * j as f64 * sigma_z;
            let chi = profile_chi2(problem, result, param_index, transform.to_external(z))?;
            if chi >= target {
                // bisect the crossing between z_prev and z
                let (mut a, mut b) = (z_prev, z);
                let (mut fa, mut fb) = (chi_prev, chi);
                for _ in 0..60 {
                    let mid = 0.5 * (a + b);
                    let fm = profile_chi2(problem, result, param_index, transform.to_external(mid))?;
                    if fm >= target {
                        b = mid;
                        fb = fm;
                    } else {
                        a = mid;
                        fa = fm;
                    }
                    if (b - a).abs() < 1e-9 * sigma_z.max(1e-12) || (fb - fa).abs() < 1e-12 {
                        break;
                    }
                }
                return Ok((transform.to_external(0.5 * (a + b)), true));
            }
            z_prev = z;
            chi_prev = chi;
        }
        Ok((transform.to_external(z0 + direction * max_steps as f64 * sigma_z), false))
    };

    let (hi, hi_bounded) = side(1.0)?;
    let (lo, lo_bounded) = side(-1.0)?;
    Ok(ProfileInterval {
        lo,
        hi,
        lo_bounded,
        hi_bounded,
    })
}
