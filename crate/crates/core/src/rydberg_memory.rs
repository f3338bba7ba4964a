//! Site-B physics: EIT susceptibility and transmission, slow-light group
//! delay, storage efficiency with motional dephasing and hyperfine beating,
//! linewidth deconvolution, and the effective saturation nonlinearity of the
//! Rydberg-blockaded medium.
//!
//! Unit convention: every rate (Γ, Ω_c, γ_gR, δ) is an ordinary frequency in
//! MHz and enters the susceptibility exactly as written, so round-trip fits
//! are self-consistent whichever convention the fitted data used. Times are
//! µs, hyperfine splittings kHz.

use crate::{Error, Result};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Three-level EIT medium parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EitMediumParams {
    /// Optical depth of the probe transition.
    pub od: f64,
    /// Excited-state linewidth Γ, MHz.
    pub gamma_mhz: f64,
    /// Coupling Rabi frequency Ω_c, MHz.
    pub omega_c_mhz: f64,
    /// Ground–Rydberg dephasing rate γ_gR, MHz.
    pub gamma_gr_mhz: f64,
    /// Probe wavenumber, 1/m. Cancels out of the transmission.
    pub k_p_per_m: f64,
    /// Medium length, m. Cancels out of the transmission.
    pub length_m: f64,
}

impl EitMediumParams {
    pub fn validate(&self) -> Result<()> {
        if self.od <= 0.0 {
            return Err(Error::invalid("od", "must be > 0"));
        }
        if self.gamma_mhz <= 0.0 {
            return Err(Error::invalid("gamma_mhz", "must be > 0"));
        }
        if self.omega_c_mhz < 0.0 {
            return Err(Error::invalid("omega_c_mhz", "must be >= 0"));
        }
        if self.gamma_gr_mhz < 0.0 {
            return Err(Error::invalid("gamma_gr_mhz", "must be >= 0"));
        }
        if self.k_p_per_m <= 0.0 || self.length_m <= 0.0 {
            return Err(Error::invalid("k_p_per_m/length_m", "must be > 0"));
        }
        Ok(())
    }
}

/// Storage-and-retrieval efficiency model of the Rydberg memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageParams {
    /// Zero-time storage-and-retrieval efficiency.
    pub eta0: f64,
    /// Gaussian 1/e coherence time, µs.
    pub tau_r_us: f64,
    /// Hyperfine splitting of the Rydberg state, kHz.
    pub delta_f_khz: f64,
    /// Excitation probability of the F=1 hyperfine component.
    pub p_f1: f64,
    /// Delay offset added to the storage time (group delay plus coupling
    /// switching profile), µs.
    pub t_off_us: f64,
}

impl StorageParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta0) {
            return Err(Error::invalid("eta0", format!("{} not in [0,1]", self.eta0)));
        }
        if self.tau_r_us <= 0.0 {
            return Err(Error::invalid("tau_r_us", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.p_f1) {
            return Err(Error::invalid("p_f1", format!("{} not in [0,1]", self.p_f1)));
        }
        Ok(())
    }
}

/// Effective saturation law of the blockaded medium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationParams {
    /// Maximum number of storable photons.
    pub n_max: f64,
    /// Linear-regime storage efficiency.
    pub t_lin: f64,
}

impl SaturationParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_max <= 0.0 {
            return Err(Error::invalid("n_max", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.t_lin) {
            return Err(Error::invalid("t_lin", format!("{} not in [0,1]", self.t_lin)));
        }
        Ok(())
    }
}

/// A sampled temporal intensity profile on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseWaveform {
    /// `(t_us, intensity)` with strictly increasing times and non-negative
    /// intensities (counts per bin).
    pub samples: Vec<(f64, f64)>,
    /// Bin width, µs.
    pub bin_width_us: f64,
}

impl PulseWaveform {
    pub fn new(samples: Vec<(f64, f64)>, bin_width_us: f64) -> Result<Self> {
        if bin_width_us <= 0.0 {
            return Err(Error::invalid("bin_width_us", "must be > 0"));
        }
        for pair in samples.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(Error::invalid("samples", "times must be strictly increasing"));
            }
        }
        if samples.iter().any(|&(_, y)| y < 0.0 || !y.is_finite()) {
            return Err(Error::invalid("samples", "intensities must be finite and >= 0"));
        }
        Ok(PulseWaveform {
            samples,
            bin_width_us,
        })
    }

    /// Render a Gaussian profile onto a uniform grid spanning ±4.5σ.
    pub fn gaussian(center_us: f64, fwhm_us: f64, bin_width_us: f64) -> Result<Self> {
        if fwhm_us <= 0.0 {
            return Err(Error::invalid("fwhm_us", "must be > 0"));
        }
        let sigma = fwhm_us / (8.0 * 2.0f64.ln()).sqrt();
        let half_span = 4.5 * sigma;
        let n_bins = (2.0 * half_span / bin_width_us).ceil() as usize;
        let t0 = center_us - half_span;
        let samples = (0..=n_bins)
            .map(|i| {
                let t = t0 + i as f64 * bin_width_us;
                (t, (-((t - center_us) / sigma).powi(2) / 2.0).exp())
            })
            .collect();
        PulseWaveform::new(samples, bin_width_us)
    }

    /// Flat profile on `[start_us, end_us]`.
    pub fn uniform(start_us: f64, end_us: f64, bin_width_us: f64) -> Result<Self> {
        if end_us <= start_us {
            return Err(Error::invalid("end_us", "must exceed start_us"));
        }
        let n_bins = ((end_us - start_us) / bin_width_us).ceil() as usize;
        let samples = (0..=n_bins)
            .map(|i| (start_us + i as f64 * bin_width_us, 1.0))
            .collect();
        PulseWaveform::new(samples, bin_width_us)
    }

    pub fn shifted(&self, dt_us: f64) -> Self {
        PulseWaveform {
            samples: self.samples.iter().map(|&(t, y)| (t + dt_us, y)).collect(),
            bin_width_us: self.bin_width_us,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        PulseWaveform {
            samples: self.samples.iter().map(|&(t, y)| (t, y * factor)).collect(),
            bin_width_us: self.bin_width_us,
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.samples.iter().map(|&(_, y)| y).sum()
    }
}

/// Complex EIT susceptibility at probe detuning `delta_mhz`:
///
/// `chi = OD Γ / (2 k_p ℓ) * (δ + iγ_gR) / ((Γ/2 - iδ)(γ_gR - iδ) + (Ω_c/2)^2)`.
pub fn susceptibility(medium: &EitMediumParams, delta_mhz: f64) -> Result<Complex64> {
    medium.validate()?;
    let delta = Complex64::new(delta_mhz, 0.0);
    let i = Complex64::i();
    let denom = (Complex64::new(medium.gamma_mhz / 2.0, 0.0) - i * delta)
        * (Complex64::new(medium.gamma_gr_mhz, 0.0) - i * delta)
        + Complex64::new((medium.omega_c_mhz / 2.0).powi(2), 0.0);
    if denom.norm() < 1e-30 {
        return Err(Error::invalid(
            "delta_mhz",
            "susceptibility pole: unphysical parameter combination",
        ));
    }
    let prefactor = medium.od * medium.gamma_mhz / (2.0 * medium.k_p_per_m * medium.length_m);
    Ok(prefactor * (delta + i * medium.gamma_gr_mhz) / denom)
}

/// Probe transmission `exp(-k_p ℓ Im[chi])`. The `k_p ℓ` product cancels the
/// susceptibility prefactor, so only `(OD, Γ, Ω_c, γ_gR, δ)` matter.
pub fn transmission(medium: &EitMediumParams, delta_mhz: f64) -> Result<f64> {
    let chi = susceptibility(medium, delta_mhz)?;
    Ok((-medium.k_p_per_m * medium.length_m * chi.im).exp())
}

/// Slow-light group delay through the medium, µs.
///
/// Convention: `δt = OD Γ / Ω_c^2` with Γ, Ω_c in MHz; the underlying group
/// index is only known proportionally (`n_gr ~ OD/Ω_c^2`), so this fixes the
/// prefactor at exactly 1.
pub fn group_delay(medium: &EitMediumParams) -> Result<f64> {
    medium.validate()?;
    if medium.omega_c_mhz == 0.0 {
        return Err(Error::invalid("omega_c_mhz", "zero coupling: infinite delay"));
    }
    Ok(medium.od * medium.gamma_mhz / medium.omega_c_mhz.powi(2))
}

/// Storage-and-retrieval efficiency after a total dwell time `t_t_us`:
/// Gaussian motional decay times the hyperfine beating factor
/// `|p_F1 + (1-p_F1) exp(-2πi ΔF t)|^2`.
pub fn storage_efficiency(params: &StorageParams, t_t_us: f64) -> Result<f64> {
    params.validate()?;
    if t_t_us < 0.0 {
        return Err(Error::invalid("t_t_us", "must be >= 0"));
    }
    Ok(storage_efficiency_model(
        params.eta0,
        params.tau_r_us,
        params.delta_f_khz,
        params.p_f1,
        t_t_us,
    ))
}

/// Unvalidated storage-efficiency formula, shared with the fit models.
pub fn storage_efficiency_model(
    eta0: f64,
    tau_r_us: f64,
    delta_f_khz: f64,
    p_f1: f64,
    t_t_us: f64,
) -> f64 {
    let envelope = (-(t_t_us / tau_r_us).powi(2)).exp();
    // ΔF in kHz, t in µs: phase = 2π ΔF t with ΔF in cycles/µs = MHz.
    let phase = std::f64::consts::TAU * (delta_f_khz * 1e-3) * t_t_us;
    let beat = p_f1 * p_f1
        + (1.0 - p_f1) * (1.0 - p_f1)
        + 2.0 * p_f1 * (1.0 - p_f1) * phase.cos();
    eta0 * envelope * beat
}

/// Centre-of-mass delay between an input and an output waveform,
/// `<t>_out - <t>_in`, with the first moments computed by trapezoidal
/// quadrature on each sample grid.
pub fn centre_of_mass_delay(f_in: &PulseWaveform, f_out: &PulseWaveform) -> Result<f64> {
    Ok(centre_of_mass(f_out)? - centre_of_mass(f_in)?)
}

fn centre_of_mass(f: &PulseWaveform) -> Result<f64> {
    if f.samples.len() < 2 {
        return Err(Error::invalid("samples", "need at least two samples"));
    }
    let mut mass = 0.0;
    let mut moment = 0.0;
    for pair in f.samples.windows(2) {
        let (t0, y0) = pair[0];
        let (t1, y1) = pair[1];
        let dt = t1 - t0;
        mass += 0.5 * (y0 + y1) * dt;
        moment += 0.5 * (y0 * t0 + y1 * t1) * dt;
    }
    if mass <= 0.0 {
        return Err(Error::invalid("samples", "waveform has zero total mass"));
    }
    Ok(moment / mass)
}

/// Read-photon spectral width from the measured total width and the EIT
/// filter width: `sqrt(total^2 - eit^2)` (Gaussian deconvolution), MHz.
pub fn memory_linewidth_deconvolve(fwhm_total_mhz: f64, fwhm_eit_mhz: f64) -> Result<f64> {
    if fwhm_eit_mhz <= 0.0 {
        return Err(Error::invalid("fwhm_eit_mhz", "must be > 0"));
    }
    if fwhm_total_mhz <= fwhm_eit_mhz {
        return Err(Error::invalid(
            "fwhm_total_mhz",
            "must exceed the EIT width for a real deconvolution",
        ));
    }
    Ok((fwhm_total_mhz * fwhm_total_mhz - fwhm_eit_mhz * fwhm_eit_mhz).sqrt())
}

/// Mean retrieved photon number under the blockade saturation law
/// `N_out = N_max T (1 - exp(-N_in/N_max))`.
pub fn nonlinear_retrieval(n_in: f64, sat: &SaturationParams) -> Result<f64> {
    sat.validate()?;
    if n_in < 0.0 {
        return Err(Error::invalid("n_in", "must be >= 0"));
    }
    Ok(saturation_model(sat.n_max, sat.t_lin, n_in))
}

/// Unvalidated saturation formula, shared with the fit models.
pub fn saturation_model(n_max: f64, t_lin: f64, n_in: f64) -> f64 {
    n_max * t_lin * (1.0 - (-n_in / n_max).exp())
}

/// Monte Carlo retrieval factor of the collective Rydberg state after a
/// dwell time `t_s`: sample atomic velocities from a Maxwell–Boltzmann
/// distribution, accumulate per-atom phases `Δk v_j t`, and return
/// `|Σ_j exp(i φ_j) / N|^2`. The expectation is `1/N + (1-1/N) exp(-t²/τ²)`
/// with τ from [`crate::photon_source::motional_coherence_time`].
pub fn simulate_collective_dephasing(
    n_atoms: u32,
    mass_kg: f64,
    temperature_k: f64,
    delta_k_per_m: f64,
    t_s: f64,
    rng_seed: u64,
) -> Result<f64> {
    if n_atoms < 2 {
        return Err(Error::invalid("n_atoms", "need at least 2 atoms"));
    }
    if mass_kg <= 0.0 || temperature_k < 0.0 {
        return Err(Error::invalid("mass_kg/temperature_k", "unphysical"));
    }
    let sigma_v = (crate::constants::BOLTZMANN * temperature_k / mass_kg).sqrt();
    let normal = Normal::new(0.0, sigma_v).map_err(|e| Error::invalid("sigma_v", e.to_string()))?;
    let mut rng = ChaCha12Rng::seed_from_u64(rng_seed);
    let mut re = 0.0;
    let mut im = 0.0;
    for _ in 0..n_atoms {
        let v = normal.sample(&mut rng);
        let phi = delta_k_per_m * v * t_s;
        re += phi.cos();
        im += phi.sin();
    }
    let n = n_atoms as f64;
    Ok((re * re + im * im) / (n * n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::{wavenumber, RB87_D2_LINEWIDTH_MHZ, RB87_MASS, WAVELENGTH_780_NM};
    use crate::photon_source::motional_coherence_time;
    use approx::assert_relative_eq;

    fn medium() -> EitMediumParams {
        EitMediumParams {
            od: 5.4,
            gamma_mhz: RB87_D2_LINEWIDTH_MHZ,
            omega_c_mhz: 2.66,
            gamma_gr_mhz: 0.29,
            k_p_per_m: wavenumber(WAVELENGTH_780_NM),
            length_m: 1e-3,
        }
    }

    fn storage() -> StorageParams {
        StorageParams {
            eta0: 0.05,
            tau_r_us: 3.3,
            delta_f_khz: 182.3,
            p_f1: 0.5,
            t_off_us: 0.47,
        }
    }

    #[test]
    fn resonant_two_level_absorption() {
        let mut m = medium();
        m.omega_c_mhz = 0.0;
        let t = transmission(&m, 0.0).unwrap();
        assert_relative_eq!(t, (-m.od).exp(), epsilon = 1e-14);
        // OD = 5.4 example value
        assert!((t - 4.5e-3).abs() < 1e-4);
    }

    #[test]
    fn far_detuned_transparency() {
        let m = medium();
        for delta in [10.0 * m.gamma_mhz, -10.0 * m.gamma_mhz] {
            let t = transmission(&m, delta).unwrap();
            assert!(t > 0.9, "T({delta}) = {t}");
        }
        let chi = susceptibility(&m, 1e6).unwrap();
        assert!(chi.norm() < 1e-8);
    }

    #[test]
    fn perfect_dark_state_without_dephasing() {
        let mut m = medium();
        m.gamma_gr_mhz = 0.0;
        let chi = susceptibility(&m, 0.0).unwrap();
        assert!(chi.im.abs() < 1e-18);
        assert_relative_eq!(transmission(&m, 0.0).unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn pole_detection() {
        let mut m = medium();
        m.omega_c_mhz = 0.0;
        m.gamma_gr_mhz = 0.0;
        assert!(susceptibility(&m, 0.0).is_err());
    }

    #[test]
    fn transmission_independent_of_geometry() {
        let m = medium();
        let mut m2 = medium();
        m2.length_m *= 37.5;
        m2.k_p_per_m *= 0.21;
        for delta in [-4.0, -1.0, 0.0, 0.3, 2.5] {
            assert_relative_eq!(
                transmission(&m, delta).unwrap(),
                transmission(&m2, delta).unwrap(),
                epsilon = 1e-13
            );
        }
    }

    #[test]
    fn eit_peak_monotonicity() {
        let mut prev = 0.0;
        for omega_c in [0.5, 1.0, 2.0, 4.0] {
            let mut m = medium();
            m.omega_c_mhz = omega_c;
            let t = transmission(&m, 0.0).unwrap();
            assert!(t > prev, "peak transparency should grow with omega_c");
            prev = t;
        }
        let mut prev = 1.0;
        for gamma_gr in [0.0, 0.1, 0.3, 1.0] {
            let mut m = medium();
            m.gamma_gr_mhz = gamma_gr;
            let t = transmission(&m, 0.0).unwrap();
            assert!(t <= prev, "peak transparency should fall with gamma_gr");
            prev = t;
        }
    }

    #[test]
    fn group_delay_scaling() {
        let m = medium();
        let base = group_delay(&m).unwrap();
        // microsecond scale for the reference parameters; the absolute
        // prefactor convention is documented on the function
        assert!(base > 0.1 && base < 10.0, "delay {base} µs");
        let mut m2 = medium();
        m2.omega_c_mhz *= 2.0;
        assert_relative_eq!(group_delay(&m2).unwrap(), base / 4.0, epsilon = 1e-14);
        let mut m3 = medium();
        m3.od = 1e-9;
        assert!(group_delay(&m3).unwrap() < 1e-8);
        let mut m4 = medium();
        m4.omega_c_mhz = 0.0;
        assert!(group_delay(&m4).is_err());
    }

    #[test]
    fn storage_efficiency_limits() {
        let s = storage();
        assert_relative_eq!(storage_efficiency(&s, 0.0).unwrap(), s.eta0);
        // full revival at t = 1/ΔF with negligible envelope decay
        let mut long = storage();
        long.tau_r_us = 1e9;
        let t_revival = 1e3 / long.delta_f_khz; // µs
        assert_relative_eq!(
            storage_efficiency(&long, t_revival).unwrap(),
            long.eta0,
            max_relative = 1e-9
        );
        // complete destructive beat at half period for p_f1 = 1/2
        let t_null = 0.5e3 / long.delta_f_khz;
        assert!(storage_efficiency(&long, t_null).unwrap() < 1e-12);
    }

    #[test]
    fn storage_efficiency_bounded_by_eta0() {
        let s = storage();
        for i in 0..200 {
            let t = i as f64 * 0.05;
            assert!(storage_efficiency(&s, t).unwrap() <= s.eta0 + 1e-15);
        }
    }

    #[test]
    fn revival_maxima_at_beat_periods() {
        let mut s = storage();
        s.tau_r_us = 1e9; // isolate the beating factor
        let period = 1e3 / s.delta_f_khz;
        let dt = 0.01;
        for k in 1..=2 {
            let target = k as f64 * period;
            let mut best = (0.0, 0.0);
            let mut t = target - 1.0;
            while t < target + 1.0 {
                let e = storage_efficiency(&s, t).unwrap();
                if e > best.1 {
                    best = (t, e);
                }
                t += dt;
            }
            assert!(
                (best.0 - target).abs() <= dt,
                "revival {k} at {} vs {target}",
                best.0
            );
        }
    }

    #[test]
    fn centre_of_mass_translation_and_scale() {
        let f_in = PulseWaveform::gaussian(2.0, 0.35, 0.001).unwrap();
        let f_shift = f_in.shifted(1.0);
        assert_relative_eq!(
            centre_of_mass_delay(&f_in, &f_shift).unwrap(),
            1.0,
            epsilon = 1e-9
        );
        let f_att = f_in.scaled(0.5);
        assert_relative_eq!(
            centre_of_mass_delay(&f_in, &f_att).unwrap(),
            0.0,
            epsilon = 1e-12
        );
        let f_late = f_in.shifted(1.47);
        let d = centre_of_mass_delay(&f_in, &f_late).unwrap();
        assert!((d - 1.47).abs() < 0.001 / 2.0);
    }

    #[test]
    fn centre_of_mass_rejects_zero_mass() {
        let z = PulseWaveform::new(vec![(0.0, 0.0), (1.0, 0.0)], 1.0).unwrap();
        let f = PulseWaveform::gaussian(1.0, 0.3, 0.01).unwrap();
        assert!(centre_of_mass_delay(&z, &f).is_err());
    }

    #[test]
    fn linewidth_deconvolution() {
        let w = memory_linewidth_deconvolve(2.38, 0.73).unwrap();
        assert!((w - 2.26).abs() < 0.01, "deconvolved width {w}");
        assert_relative_eq!(
            memory_linewidth_deconvolve(2.0f64.sqrt(), 1.0).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            memory_linewidth_deconvolve(3.0, 1e-9).unwrap(),
            3.0,
            max_relative = 1e-9
        );
        assert!(memory_linewidth_deconvolve(0.7, 0.73).is_err());
    }

    #[test]
    fn saturation_curve() {
        let sat = SaturationParams {
            n_max: 68.0,
            t_lin: 0.0044,
        };
        assert_relative_eq!(nonlinear_retrieval(0.0, &sat).unwrap(), 0.0);
        // slope at zero equals the linear efficiency
        let eps = 1e-7;
        let slope = nonlinear_retrieval(eps, &sat).unwrap() / eps;
        assert_relative_eq!(slope, sat.t_lin, max_relative = 1e-6);
        // asymptote N_max * T ≈ 0.30
        let asym = nonlinear_retrieval(1e9, &sat).unwrap();
        assert_relative_eq!(asym, sat.n_max * sat.t_lin, max_relative = 1e-12);
        assert!((asym - 0.30).abs() < 0.01);
        assert!(nonlinear_retrieval(-1.0, &sat).is_err());
    }

    #[test]
    fn saturation_concave_monotone_bounded() {
        let sat = SaturationParams {
            n_max: 68.0,
            t_lin: 0.0044,
        };
        let cap = sat.n_max * sat.t_lin;
        let mut prev = 0.0;
        let mut prev_slope = f64::INFINITY;
        for i in 1..=200 {
            let x = i as f64 * 2.0;
            let y = nonlinear_retrieval(x, &sat).unwrap();
            assert!(y > prev && y <= cap);
            let slope = (y - prev) / 2.0;
            assert!(slope <= prev_slope + 1e-15);
            prev = y;
            prev_slope = slope;
        }
        // linear law within 1% below N_max/50
        let x = sat.n_max / 50.0;
        let y = nonlinear_retrieval(x, &sat).unwrap();
        assert!((y - sat.t_lin * x).abs() / (sat.t_lin * x) < 0.01);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn transmission_in_unit_interval(
                od in 0.1..20.0f64,
                omega_c in 0.0..10.0f64,
                gamma_gr in 1e-4..2.0f64,
                delta in -50.0..50.0f64,
            ) {
                let m = EitMediumParams {
                    od,
                    gamma_mhz: 6.07,
                    omega_c_mhz: omega_c,
                    gamma_gr_mhz: gamma_gr,
                    k_p_per_m: 8.05e6,
                    length_m: 1e-3,
                };
                let t = transmission(&m, delta).unwrap();
                prop_assert!(t > 0.0 && t <= 1.0 + 1e-12, "T = {t}");
            }

            #[test]
            fn storage_efficiency_within_envelope(
                eta0 in 0.0..1.0f64,
                tau in 0.5..50.0f64,
                delta_f in 10.0..500.0f64,
                p_f1 in 0.0..1.0f64,
                t in 0.0..30.0f64,
            ) {
                let s = StorageParams {
                    eta0,
                    tau_r_us: tau,
                    delta_f_khz: delta_f,
                    p_f1,
                    t_off_us: 0.0,
                };
                let eta = storage_efficiency(&s, t).unwrap();
                prop_assert!(eta >= 0.0 && eta <= eta0 + 1e-15);
            }
        }
    }

    #[test]
    fn collective_dephasing_limits() {
        let dk = wavenumber(WAVELENGTH_780_NM) * (3.4f64.to_radians()).sin();
        let f0 = simulate_collective_dephasing(5000, RB87_MASS, 77e-6, dk, 0.0, 7).unwrap();
        assert_relative_eq!(f0, 1.0, epsilon = 1e-12);
        let f_nodk = simulate_collective_dephasing(5000, RB87_MASS, 77e-6, 0.0, 1e-3, 7).unwrap();
        assert_relative_eq!(f_nodk, 1.0, epsilon = 1e-12);
        assert!(simulate_collective_dephasing(1, RB87_MASS, 77e-6, dk, 0.0, 7).is_err());
    }

    #[test]
    fn collective_dephasing_matches_gaussian() {
        let n = 10_000u32;
        let dk = wavenumber(WAVELENGTH_780_NM) * (3.4f64.to_radians()).sin();
        let tau = motional_coherence_time(RB87_MASS, 77e-6, dk).unwrap();
        let f = simulate_collective_dephasing(n, RB87_MASS, 77e-6, dk, tau, 42).unwrap();
        let expected = (-1.0f64).exp();
        assert!(
            (f - expected).abs() < 5.0 / (n as f64).sqrt(),
            "f = {f}, expected ~{expected}"
        );
    }
}
