//! Physical constants used by the coherence-time formulas.
//!
//! Values are CODATA 2018 / standard atomic data; they are compiled in so
//! that the motional coherence-time checks are reproducible bit-for-bit.

/// Boltzmann constant, J/K (exact, 2019 SI redefinition).
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Atomic mass constant, kg (CODATA 2018).
pub const ATOMIC_MASS: f64 = 1.660_539_066_60e-27;

/// Rb-87 atomic mass, kg (86.909 180 31 u).
pub const RB87_MASS: f64 = 86.909_180_31 * ATOMIC_MASS;

/// D2-line wavelength of Rb-87 (5S1/2 → 5P3/2), metres.
pub const WAVELENGTH_780_NM: f64 = 780.241e-9;

/// Coupling-laser wavelength for the 5P3/2 → Rydberg transition, metres.
pub const WAVELENGTH_480_NM: f64 = 480.0e-9;

/// Natural linewidth Γ/2π of the Rb-87 D2 line, MHz.
pub const RB87_D2_LINEWIDTH_MHZ: f64 = 6.07;

/// Vacuum wavenumber 2π/λ, 1/m.
pub fn wavenumber(wavelength_m: f64) -> f64 {
    std::f64::consts::TAU / wavelength_m
}
