//! Resonance-fluorescence spectroscopy of a single-photon emitter coupled to
//! one phonon mode, and the inverse problem of reading the phonon number
//! statistics back out of a (possibly noisy) spectrum.
//!
//! The crate has three layers:
//!
//! * analytic forward models — Franck-Condon factors ([`franck_condon`]),
//!   second-order spectra and correlation functions ([`analytic`]), phase
//!   space distributions ([`wigner`]);
//! * a brute-force Lindblad master-equation oracle ([`lindblad`]) used to
//!   validate the analytic path;
//! * the readout machinery ([`readout`]): noise injection, sideband
//!   detection, nonlinear least-squares occupation fitting and coupling
//!   sweeps.
//!
//! All rates and frequencies are measured in units of the phonon frequency
//! ω ≡ 1, and spectra are reported over the detuning `x = (Ω - ω_ZPL)/ω`.
//! Intensities are in arbitrary units with a consistent scale across models.
//!
//! See the `examples/` directory for one runnable example per capability and
//! the `phonon-readout` binary for the file-based workflow.

pub mod analytic;
pub mod cli;
pub mod config;
pub mod error;
pub mod franck_condon;
pub mod io;
pub mod lindblad;
mod linalg;
pub mod model;
pub mod readout;
pub mod spectrum;
pub mod wigner;

pub use error::{Error, Result};
pub use model::{coherent_state_occupations, fock_superposition_state, ModelParams, PhononState};
pub use spectrum::{Provenance, Spectrum};
