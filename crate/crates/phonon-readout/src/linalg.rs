//! Small dense complex-matrix helpers used by state validation and the
//! master-equation propagator. Everything here works on square matrices in
//! `ndarray::Array2<Complex64>`.

use ndarray::Array2;
use num_complex::Complex64 as C64;

pub(crate) fn hermiticity_defect(a: &Array2<C64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            let d = (a[(i, j)] - a[(j, i)].conj()).norm();
            if d > worst {
                worst = d;
            }
        }
    }
    worst
}

pub(crate) fn trace(a: &Array2<C64>) -> C64 {
    (0..a.nrows()).map(|i| a[(i, i)]).sum()
}

/// True when the Hermitian matrix `a` is positive semidefinite up to `tol`,
/// i.e. when `a + tol * I` admits a Cholesky factorization.
pub(crate) fn is_psd_within(a: &Array2<C64>, tol: f64) -> bool {
    let n = a.nrows();
    let mut l = a.clone();
    for i in 0..n {
        l[(i, i)] += C64::new(tol, 0.0);
    }
    // in-place complex Cholesky; fails on a non-positive pivot
    for j in 0..n {
        let mut d = l[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if d <= 0.0 || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        l[(j, j)] = C64::new(d, 0.0);
        for i in (j + 1)..n {
            let mut s = l[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / d;
        }
    }
    true
}
