//! System parameters and initial phonon states.
//!
//! All rates and frequencies are dimensionless, in units of the phonon
//! frequency ω ≡ 1. Output frequency axes are detunings
//! `x = (Ω - ω_ZPL)/ω` from the zero-phonon line.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::franck_condon::ln_factorial;
use crate::linalg;

/// Dimensionless system, drive and detector parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ModelParams {
    /// Phonon coupling γ = g/ω.
    pub gamma: C64,
    /// Pure-dephasing rate of the emitter.
    pub gamma_pd: f64,
    /// Excited-state decay rate of the emitter.
    pub gamma_xd: f64,
    /// Spectrometer resolution Γ.
    pub gamma_det: f64,
    /// Laser detuning κ from the zero-phonon line (δ = κω).
    pub kappa: f64,
    /// Overall drive prefactor standing for |E₀|²/(4ħ²).
    pub drive_scale: f64,
}

impl ModelParams {
    pub fn new(
        gamma: C64,
        gamma_pd: f64,
        gamma_xd: f64,
        gamma_det: f64,
        kappa: f64,
    ) -> Result<Self> {
        let p = Self {
            gamma,
            gamma_pd,
            gamma_xd,
            gamma_det,
            kappa,
            drive_scale: 1.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_drive_scale(mut self, drive_scale: f64) -> Result<Self> {
        self.drive_scale = drive_scale;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_pd >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "gamma_pd must be >= 0, got {}",
                self.gamma_pd
            )));
        }
        if !(self.gamma_xd > 0.0) {
            return Err(Error::InvalidInput(format!(
                "gamma_xd must be > 0, got {}",
                self.gamma_xd
            )));
        }
        if !(self.gamma_det > 0.0) {
            return Err(Error::InvalidInput(format!(
                "gamma_det must be > 0, got {}",
                self.gamma_det
            )));
        }
        if !(self.drive_scale > 0.0) {
            return Err(Error::InvalidInput(format!(
                "drive_scale must be > 0, got {}",
                self.drive_scale
            )));
        }
        if !self.kappa.is_finite() || !self.gamma.re.is_finite() || !self.gamma.im.is_finite() {
            return Err(Error::InvalidInput("non-finite parameter".into()));
        }
        Ok(())
    }

    /// Half the total emitter linewidth, (γ_pd + γ_xd)/2.
    pub fn half_width(&self) -> f64 {
        0.5 * (self.gamma_pd + self.gamma_xd)
    }

    /// Width of the inelastic lineshapes, Γ + (γ_pd + γ_xd)/2.
    pub fn broad_width(&self) -> f64 {
        self.gamma_det + self.half_width()
    }
}

/// Initial phonon density matrix in the Fock basis.
#[derive(Debug, Clone)]
pub struct PhononState {
    matrix: Array2<C64>,
    cutoff: usize,
}

impl PhononState {
    /// Validates Hermiticity, unit trace and positivity of `matrix`.
    pub fn from_matrix(matrix: Array2<C64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(Error::InvalidInput("density matrix must be square".into()));
        }
        let defect = linalg::hermiticity_defect(&matrix);
        if defect > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "density matrix not Hermitian (defect {defect:.2e})"
            )));
        }
        let tr = linalg::trace(&matrix);
        if (tr.re - 1.0).abs() > 1e-12 || tr.im.abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "density matrix trace {tr} is not 1"
            )));
        }
        if !linalg::is_psd_within(&matrix, 1e-10) {
            return Err(Error::InvalidInput(
                "density matrix has an eigenvalue below -1e-10".into(),
            ));
        }
        let cutoff = matrix.nrows() - 1;
        Ok(Self { matrix, cutoff })
    }

    /// Diagonal (number-statistics) state from occupations.
    pub fn from_occupations(occupations: &[f64]) -> Result<Self> {
        if occupations.is_empty() {
            return Err(Error::InvalidInput("no occupations given".into()));
        }
        if occupations.iter().any(|&p| p < -1e-12) {
            return Err(Error::InvalidInput("negative occupation".into()));
        }
        let mut m = Array2::zeros((occupations.len(), occupations.len()));
        for (i, &p) in occupations.iter().enumerate() {
            m[(i, i)] = C64::new(p.max(0.0), 0.0);
        }
        Self::from_matrix(m)
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// Diagonal of the density matrix.
    pub fn occupations(&self) -> Vec<f64> {
        (0..=self.cutoff).map(|i| self.matrix[(i, i)].re).collect()
    }

    /// Largest Fock index with occupation above `tol`.
    pub fn max_occupied(&self, tol: f64) -> usize {
        (0..=self.cutoff)
            .rev()
            .find(|&i| self.matrix[(i, i)].re > tol)
            .unwrap_or(0)
    }
}

/// Pure-state density matrix |ψ><ψ| from Fock amplitudes, normalized.
pub fn fock_superposition_state(amplitudes: &[C64]) -> Result<PhononState> {
    let norm_sqr: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
    if norm_sqr == 0.0 || amplitudes.is_empty() {
        return Err(Error::InvalidInput(
            "all-zero amplitude vector cannot be normalized".into(),
        ));
    }
    let n = amplitudes.len();
    let mut m = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = amplitudes[i] * amplitudes[j].conj() / norm_sqr;
        }
    }
    PhononState::from_matrix(m)
}

/// Poisson occupations of a coherent state |α>, renormalized over the
/// truncation at `cutoff`.
///
/// Fails when the truncated mass falls below 1 - 1e-10; a cutoff of
/// `|α|² + 10|α| + 10` is always sufficient.
pub fn coherent_state_occupations(alpha: C64, cutoff: usize) -> Result<Vec<f64>> {
    let a2 = alpha.norm_sqr();
    let ln_pmf = |i: usize| -> f64 {
        if a2 == 0.0 {
            return if i == 0 { 0.0 } else { f64::NEG_INFINITY };
        }
        -a2 + i as f64 * a2.ln() - ln_factorial(i)
    };
    let occ: Vec<f64> = (0..=cutoff).map(|i| ln_pmf(i).exp()).collect();
    let mass: f64 = occ.iter().sum();
    let required = 1.0 - 1e-10;
    if mass < required {
        return Err(Error::Truncation {
            cutoff,
            mass,
            required,
        });
    }
    Ok(occ.iter().map(|p| p / mass).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn superposition_of_vacuum_and_one_phonon() {
        let s = fock_superposition_state(&[C64::new(1.0, 0.0), C64::new(1.0, 0.0)]).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(s.matrix()[(i, j)].re, 0.5, max_relative = 1e-14);
                assert_eq!(s.matrix()[(i, j)].im, 0.0);
            }
        }
    }

    #[test]
    fn vacuum_and_fock_states() {
        let s = fock_superposition_state(&[C64::new(1.0, 0.0)]).unwrap();
        assert_eq!(s.matrix()[(0, 0)], C64::new(1.0, 0.0));

        let s = fock_superposition_state(&[C64::ZERO, C64::ZERO, C64::new(1.0, 0.0)]).unwrap();
        assert_eq!(s.matrix()[(2, 2)], C64::new(1.0, 0.0));
        assert_eq!(s.matrix()[(0, 0)], C64::ZERO);
        assert_eq!(s.occupations(), vec![0.0, 0.0, 1.0]);
        assert_eq!(s.max_occupied(1e-12), 2);
    }

    #[test]
    fn all_zero_amplitudes_rejected() {
        assert!(fock_superposition_state(&[C64::ZERO, C64::ZERO]).is_err());
        assert!(fock_superposition_state(&[]).is_err());
    }

    #[test]
    fn coherent_vacuum() {
        let occ = coherent_state_occupations(C64::ZERO, 4).unwrap();
        assert_eq!(occ[0], 1.0);
        assert!(occ[1..].iter().all(|&p| p == 0.0));
    }

    #[test]
    fn coherent_unit_alpha() {
        let occ = coherent_state_occupations(C64::new(1.0, 0.0), 20).unwrap();
        assert_relative_eq!(occ[0], (-1.0f64).exp(), epsilon = 1e-10);
        assert_relative_eq!(occ.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn coherent_alpha_two_mode_at_four() {
        // |alpha|^2 = 4: the Poisson pmf has its maximum at i = 4 (tied with
        // i = 3, as for any integer mean).
        let occ = coherent_state_occupations(C64::new(2.0, 0.0), 40).unwrap();
        assert!(occ.iter().all(|&p| p <= occ[4] + 1e-15));
        assert_relative_eq!(occ[3], occ[4], max_relative = 1e-12);
    }

    #[test]
    fn coherent_truncation_error() {
        let err = coherent_state_occupations(C64::new(4.0, 0.0), 3).unwrap_err();
        assert!(matches!(err, Error::Truncation { .. }));
    }

    #[test]
    fn params_invariants_enforced() {
        let ok = ModelParams::new(C64::new(0.5, 0.0), 0.05, 0.05, 0.05, 0.0);
        assert!(ok.is_ok());
        assert!(ModelParams::new(C64::new(0.5, 0.0), -0.1, 0.05, 0.05, 0.0).is_err());
        assert!(ModelParams::new(C64::new(0.5, 0.0), 0.0, 0.0, 0.05, 0.0).is_err());
        assert!(ModelParams::new(C64::new(0.5, 0.0), 0.0, 0.1, 0.0, 0.0).is_err());
        assert!(ok.unwrap().with_drive_scale(0.0).is_err());
    }

    proptest! {
        #[test]
        fn random_superpositions_are_valid_states(
            amps in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..7)
        ) {
            let v: Vec<C64> = amps.iter().map(|&(re, im)| C64::new(re, im)).collect();
            let norm: f64 = v.iter().map(|a| a.norm_sqr()).sum();
            prop_assume!(norm > 1e-6);
            // from_matrix re-checks Hermiticity, trace and positivity
            let s = fock_superposition_state(&v).unwrap();
            prop_assert!(s.cutoff() + 1 == v.len());
        }

        #[test]
        fn coherent_occupations_normalized(re in -2.0f64..2.0, im in -2.0f64..2.0) {
            let alpha = C64::new(re, im);
            let cutoff = (alpha.norm_sqr() + 10.0 * alpha.norm() + 10.0).ceil() as usize;
            let occ = coherent_state_occupations(alpha, cutoff).unwrap();
            let sum: f64 = occ.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-10);
        }
    }
}
