//! Simulation and analysis toolkit for a heralded photon-pair source
//! (DLCZ-type atomic quantum memory) whose read photon is stored in and
//! retrieved from a Rydberg-EIT medium.
//!
//! The crate is organised around the stages of the experiment it models:
//!
//! * [`photon_source`] — closed-form pair statistics of the source and the
//!   noise-dressed detection-probability model used for all fits.
//! * [`rydberg_memory`] — EIT susceptibility/transmission, slow-light delay,
//!   storage efficiency with motional dephasing and hyperfine beating, and
//!   the effective saturation nonlinearity.
//! * [`detection_sim`] — trial-by-trial Monte Carlo producing raw detector
//!   click streams, reproducible byte-for-byte from `(scenario, seed)`.
//! * [`counting`] — coincidence-counting estimators (start–stop histograms,
//!   g², α, Cauchy–Schwarz R) with propagated Poissonian errors.
//! * [`fitting`] — damped least-squares engine plus the model adapters for
//!   every curve the analysis fits.

pub mod constants;
pub mod counting;
pub mod detection_sim;
mod error;
pub mod fitting;
pub mod photon_source;
pub mod rydberg_memory;

pub use error::{Error, Result};
