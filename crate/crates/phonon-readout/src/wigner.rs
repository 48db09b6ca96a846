//! Wigner functions of phonon density matrices, evaluated through the
//! displaced-parity kernel `W(α) = Σ ρ_mn (-1)^m (2/π) <n|D(2α)|m>` rather
//! than a Fourier transform, reusing the exact Franck-Condon engine.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::analytic::excited_state_dm;
use crate::error::{Error, Result};
use crate::franck_condon::fc_factor;
use crate::linalg;
use crate::model::ModelParams;
use crate::spectrum::trapezoid;

/// Wigner function samples over a rectangular phase-space grid spanned by
/// `(Re α, Im α)`.
#[derive(Debug, Clone)]
pub struct WignerGrid {
    re_axis: Vec<f64>,
    im_axis: Vec<f64>,
    /// `values[(i_im, i_re)]`
    values: Array2<f64>,
}

impl WignerGrid {
    pub fn re_axis(&self) -> &[f64] {
        &self.re_axis
    }

    pub fn im_axis(&self) -> &[f64] {
        &self.im_axis
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn at(&self, i_im: usize, i_re: usize) -> f64 {
        self.values[(i_im, i_re)]
    }

    /// Value at the grid point closest to `alpha`.
    pub fn nearest(&self, alpha: C64) -> f64 {
        let ix = nearest_index(&self.re_axis, alpha.re);
        let iy = nearest_index(&self.im_axis, alpha.im);
        self.values[(iy, ix)]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// 2D trapezoid of W over the grid; equals Tr ρ up to truncation.
    pub fn integral(&self) -> f64 {
        let rows: Vec<f64> = self
            .values
            .rows()
            .into_iter()
            .map(|row| trapezoid(&self.re_axis, row.as_slice().expect("contiguous row")))
            .collect();
        trapezoid(&self.im_axis, &rows)
    }
}

fn nearest_index(axis: &[f64], v: f64) -> usize {
    axis.iter()
        .enumerate()
        .min_by(|a, b| (a.1 - v).abs().total_cmp(&(b.1 - v).abs()))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Default 101x101 axes over `[-4-|γ|, 4+|γ|]²`.
pub fn default_axes(gamma_abs: f64) -> (Vec<f64>, Vec<f64>) {
    let half = 4.0 + gamma_abs;
    let n = 101;
    let axis: Vec<f64> = (0..n)
        .map(|i| -half + 2.0 * half * i as f64 / (n - 1) as f64)
        .collect();
    (axis.clone(), axis)
}

fn wigner_kernel(
    rho: &Array2<C64>,
    re_axis: &[f64],
    im_axis: &[f64],
    shift: C64,
    scale: f64,
) -> Result<WignerGrid> {
    let dim = rho.nrows();
    if dim != rho.ncols() || dim == 0 {
        return Err(Error::InvalidInput("density matrix must be square".into()));
    }
    if re_axis.len() < 2 || im_axis.len() < 2 {
        return Err(Error::InvalidInput("need at least a 2x2 grid".into()));
    }
    let defect = linalg::hermiticity_defect(rho);
    if defect > 1e-10 * scale {
        return Err(Error::InvalidInput(format!(
            "input matrix not Hermitian (defect {defect:.2e})"
        )));
    }
    // entries below fp relevance contribute nothing
    let keep: Vec<(usize, usize, C64)> = (0..dim)
        .flat_map(|m| (0..dim).map(move |n| (m, n)))
        .map(|(m, n)| (m, n, rho[(m, n)]))
        .filter(|&(_, _, v)| v.norm() > 1e-16 * scale)
        .collect();
    let two_over_pi = std::f64::consts::FRAC_2_PI;
    let rows: Vec<Vec<f64>> = im_axis
        .par_iter()
        .map(|&y| {
            re_axis
                .iter()
                .map(|&x| {
                    let arg = 2.0 * C64::new(x, y) + shift;
                    let mut acc = C64::ZERO;
                    for &(m, n, v) in &keep {
                        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                        acc += v * sign * fc_factor(n, m, arg);
                    }
                    acc *= two_over_pi;
                    debug_assert!(
                        acc.im.abs() <= 1e-10 * scale,
                        "imaginary residue {} at alpha = {x}+{y}i",
                        acc.im
                    );
                    acc.re
                })
                .collect()
        })
        .collect();
    let mut values = Array2::zeros((im_axis.len(), re_axis.len()));
    for (iy, row) in rows.into_iter().enumerate() {
        for (ix, v) in row.into_iter().enumerate() {
            values[(iy, ix)] = v;
        }
    }
    Ok(WignerGrid {
        re_axis: re_axis.to_vec(),
        im_axis: im_axis.to_vec(),
        values,
    })
}

/// Wigner function of a phonon density matrix in the Fock basis.
pub fn wigner_of_matrix(
    rho: &Array2<C64>,
    re_axis: &[f64],
    im_axis: &[f64],
) -> Result<WignerGrid> {
    let scale = linalg::trace(rho).norm().max(1.0);
    wigner_kernel(rho, re_axis, im_axis, C64::ZERO, scale)
}

/// Wigner function of the excited-state phonon density matrix on the
/// lab-frame phase plane; the polaron displacement enters through the
/// shifted kernel `D(2α + 2γ)`.
pub fn wigner_excited(
    params: &ModelParams,
    rho_g: &Array2<C64>,
    phase_time: f64,
    re_axis: &[f64],
    im_axis: &[f64],
) -> Result<WignerGrid> {
    let dm = excited_state_dm(params, rho_g, phase_time)?;
    let scale = linalg::trace(&dm).norm().max(f64::MIN_POSITIVE);
    wigner_kernel(&dm, re_axis, im_axis, 2.0 * params.gamma, scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::franck_condon::FcTable;
    use crate::model::fock_superposition_state;
    use approx::assert_relative_eq;

    fn fock(n: usize, dim: usize) -> Array2<C64> {
        let mut m = Array2::zeros((dim, dim));
        m[(n, n)] = C64::new(1.0, 0.0);
        m
    }

    #[test]
    fn vacuum_and_single_phonon_at_origin() {
        let axes = vec![-0.5, 0.0, 0.5];
        let w0 = wigner_of_matrix(&fock(0, 3), &axes, &axes).unwrap();
        assert_relative_eq!(w0.at(1, 1), std::f64::consts::FRAC_2_PI, epsilon = 1e-10);
        let w1 = wigner_of_matrix(&fock(1, 3), &axes, &axes).unwrap();
        assert_relative_eq!(w1.at(1, 1), -std::f64::consts::FRAC_2_PI, epsilon = 1e-10);
    }

    #[test]
    fn vacuum_is_unit_width_gaussian() {
        let axes: Vec<f64> = (0..41).map(|i| -4.0 + 0.2 * i as f64).collect();
        let w = wigner_of_matrix(&fock(0, 2), &axes, &axes).unwrap();
        let two_over_pi = std::f64::consts::FRAC_2_PI;
        for &(x, y) in &[(0.6f64, 0.0f64), (0.0, -0.8), (1.0, 1.0)] {
            let expect = two_over_pi * (-2.0 * (x * x + y * y)).exp();
            assert_relative_eq!(w.nearest(C64::new(x, y)), expect, max_relative = 1e-9);
        }
        assert_relative_eq!(w.integral(), 1.0, max_relative = 0.02);
    }

    #[test]
    fn coherent_state_is_displaced_vacuum() {
        // rho = |beta><beta| built by displacing the vacuum with the FC table
        let beta = C64::new(0.9, -0.4);
        let cutoff = 20;
        let t = FcTable::new(beta, cutoff);
        let d = cutoff + 1;
        let mut rho = Array2::<C64>::zeros((d, d));
        for i in 0..d {
            for j in 0..d {
                rho[(i, j)] = t.get(i, 0) * t.get(j, 0).conj();
            }
        }
        let re: Vec<f64> = (0..41).map(|i| -3.1 + 0.2 * i as f64).collect();
        let im: Vec<f64> = (0..41).map(|i| -4.4 + 0.2 * i as f64).collect();
        let w = wigner_of_matrix(&rho, &re, &im).unwrap();
        let two_over_pi = std::f64::consts::FRAC_2_PI;
        for &(x, y) in &[(0.9f64, -0.4f64), (0.3, -0.4), (0.9, 0.2), (0.1, 0.0)] {
            let d2 = (x - beta.re).powi(2) + (y - beta.im).powi(2);
            let expect = two_over_pi * (-2.0 * d2).exp();
            assert_relative_eq!(
                w.nearest(C64::new(x, y)),
                expect,
                max_relative = 1e-6,
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn bounded_by_two_over_pi() {
        let s = fock_superposition_state(&[
            C64::new(0.6, 0.1),
            C64::new(0.3, -0.4),
            C64::new(0.5, 0.0),
        ])
        .unwrap();
        let (re, im) = default_axes(0.0);
        let w = wigner_of_matrix(s.matrix(), &re, &im).unwrap();
        let bound = std::f64::consts::FRAC_2_PI + 1e-9;
        assert!(w.max() <= bound && -w.min() <= bound);
        assert_relative_eq!(w.integral(), 1.0, max_relative = 0.02);
    }

    #[test]
    fn displacement_covariance() {
        // D(g) rho D(-g) shifts the Wigner function by g
        let g = C64::new(0.7, 0.2);
        let cutoff = 24;
        let t = FcTable::new(g, cutoff);
        let d = cutoff + 1;
        let s = fock_superposition_state(&[C64::new(1.0, 0.0), C64::new(0.8, 0.3)]).unwrap();
        let mut rho = Array2::<C64>::zeros((d, d));
        for i in 0..2 {
            for j in 0..2 {
                rho[(i, j)] = s.matrix()[(i, j)];
            }
        }
        let disp = t.entries();
        let rho_shifted = disp.dot(&rho).dot(&disp.mapv(|v| v.conj()).t().to_owned());
        let axes: Vec<f64> = (0..5).map(|i| -1.0 + 0.5 * i as f64).collect();
        let w0 = wigner_of_matrix(&rho, &axes, &axes).unwrap();
        let shifted_axes_re: Vec<f64> = axes.iter().map(|x| x + g.re).collect();
        let shifted_axes_im: Vec<f64> = axes.iter().map(|y| y + g.im).collect();
        let w1 = wigner_of_matrix(&rho_shifted, &shifted_axes_re, &shifted_axes_im).unwrap();
        for iy in 0..axes.len() {
            for ix in 0..axes.len() {
                assert_relative_eq!(w1.at(iy, ix), w0.at(iy, ix), epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn excited_wigner_blind_coupling_is_displaced_vacuum() {
        let p = ModelParams::new(C64::new(1.0, 0.0), 0.05, 0.05, 0.05, 0.0).unwrap();
        let s = fock_superposition_state(&[C64::new(1.0, 0.0), C64::new(1.0, 0.0)]).unwrap();
        let (re, im) = default_axes(1.0);
        let w = wigner_excited(&p, s.matrix(), 0.0, &re, &im).unwrap();
        let peak = w.max();
        assert!(peak > 0.0);
        assert!(-w.min() <= 1e-3 * peak, "negativity {} of {peak}", w.min());
        // blob sits at alpha = -gamma
        let at_center = w.nearest(C64::new(-1.0, 0.0));
        assert!(at_center > 0.95 * peak);
        assert_relative_eq!(w.integral(), crate::linalg::trace(
            &excited_state_dm(&p, s.matrix(), 0.0).unwrap()).re,
            max_relative = 0.02
        );
    }

    #[test]
    fn excited_wigner_mirrors_across_the_blind_coupling() {
        // the 0-1 coherence in the excited state flips sign between
        // gamma = 0.5 and gamma = 1.5, mirroring the Wigner pattern
        let s = fock_superposition_state(&[C64::new(1.0, 0.0), C64::new(1.0, 0.0)]).unwrap();
        let mut asym = Vec::new();
        let mut peaks = Vec::new();
        for &g in &[0.5f64, 1.0, 1.5] {
            let p = ModelParams::new(C64::new(g, 0.0), 0.05, 0.05, 0.05, 0.0).unwrap();
            let (re, im) = default_axes(g);
            let w = wigner_excited(&p, s.matrix(), 0.0, &re, &im).unwrap();
            let a = w.nearest(C64::new(-g + 0.6, 0.0)) - w.nearest(C64::new(-g - 0.6, 0.0));
            asym.push(a / w.max());
            peaks.push(w.max());
        }
        assert!(asym[0] * asym[2] < 0.0, "asymmetries {asym:?}");
        assert!(
            peaks[0] > peaks[1] && peaks[1] > peaks[2],
            "peak magnitudes not decreasing: {peaks:?}"
        );
    }
}
