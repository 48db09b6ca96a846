//! Spectrum container and the default frequency-grid policy.
//!
//! Frequency axes are detunings `x = (Ω - ω_ZPL)/ω` relative to the
//! zero-phonon line; intensities are in arbitrary units with a consistent
//! scale across the analytic models.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Which path produced a spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Full,
    Narrow,
    Semiclassical,
    Oracle,
    #[serde(rename = "measured+noise")]
    MeasuredNoise,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Provenance::Full => "full",
            Provenance::Narrow => "narrow",
            Provenance::Semiclassical => "semiclassical",
            Provenance::Oracle => "oracle",
            Provenance::MeasuredNoise => "measured+noise",
        };
        f.write_str(s)
    }
}

/// Sampled spectrum with the parameter snapshot it was produced from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Spectrum {
    grid: Vec<f64>,
    values: Vec<f64>,
    params: ModelParams,
    provenance: Provenance,
}

impl Spectrum {
    pub fn new(
        grid: Vec<f64>,
        values: Vec<f64>,
        params: ModelParams,
        provenance: Provenance,
    ) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::InvalidInput("empty frequency grid".into()));
        }
        if grid.len() != values.len() {
            return Err(Error::InvalidInput(format!(
                "grid length {} != values length {}",
                grid.len(),
                values.len()
            )));
        }
        if !grid.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidInput(
                "frequency grid must be strictly increasing".into(),
            ));
        }
        if !grid.iter().chain(values.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("non-finite spectrum sample".into()));
        }
        Ok(Self {
            grid,
            values,
            params,
            provenance,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Replaces the intensity samples, retagging the provenance.
    pub(crate) fn with_values(&self, values: Vec<f64>, provenance: Provenance) -> Self {
        assert_eq!(values.len(), self.grid.len());
        Self {
            grid: self.grid.clone(),
            values,
            params: self.params,
            provenance,
        }
    }

    /// Trapezoid integral over the whole grid.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.grid, &self.values)
    }
}

pub(crate) fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (ys[0] + ys[1]) * (xs[1] - xs[0]))
        .sum()
}

/// Uniform grid spanning all line centers padded by five broad linewidths,
/// sampled at 40 points per detector resolution.
pub(crate) fn grid_from_centers(centers: &[f64], params: &ModelParams) -> Vec<f64> {
    let pad = 5.0 * params.broad_width();
    let lo = centers.iter().copied().fold(f64::INFINITY, f64::min) - pad;
    let hi = centers.iter().copied().fold(f64::NEG_INFINITY, f64::max) + pad;
    let dx = params.gamma_det / 40.0;
    let n = ((hi - lo) / dx).ceil() as usize + 1;
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64 as C64;

    fn params() -> ModelParams {
        ModelParams::new(C64::new(0.5, 0.0), 0.05, 0.05, 0.05, 0.0).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        let p = params();
        assert!(Spectrum::new(vec![], vec![], p, Provenance::Full).is_err());
        assert!(Spectrum::new(vec![0.0, 0.0], vec![1.0, 1.0], p, Provenance::Full).is_err());
        assert!(Spectrum::new(vec![1.0, 0.0], vec![1.0, 1.0], p, Provenance::Full).is_err());
        assert!(Spectrum::new(vec![0.0, 1.0], vec![1.0], p, Provenance::Full).is_err());
        assert!(Spectrum::new(vec![0.0, 1.0], vec![1.0, f64::NAN], p, Provenance::Full).is_err());
        assert!(Spectrum::new(vec![0.0, 1.0], vec![1.0, 2.0], p, Provenance::Full).is_ok());
    }

    #[test]
    fn trapezoid_integrates_linear_exactly() {
        let x: Vec<f64> = (0..11).map(|i| i as f64 / 10.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v).collect();
        assert!((trapezoid(&x, &y) - 1.5).abs() < 1e-14);
    }

    #[test]
    fn grid_policy_resolution_and_span() {
        let p = params();
        let g = grid_from_centers(&[-2.0, 0.0, 1.0], &p);
        let pad = 5.0 * p.broad_width();
        assert!((g[0] - (-2.0 - pad)).abs() < 1e-12);
        assert!((g.last().unwrap() - (1.0 + pad)).abs() < 1e-12);
        let dx = g[1] - g[0];
        assert!(dx <= p.gamma_det / 40.0 + 1e-12);
    }
}
