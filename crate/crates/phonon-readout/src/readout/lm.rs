//! Damped Gauss-Newton (Levenberg-Marquardt) minimizer for the occupation
//! fit. The model is linear in the weights `w_i ≥ 0`; squaring the actual
//! parameters (`w = u²`) keeps the optimizer unconstrained while
//! guaranteeing nonnegativity.

/// Outcome of one least-squares run over `u`.
pub struct LmFit {
    pub u: Vec<f64>,
    pub residual_norm: f64,
    /// Gauss-Newton matrix JᵀJ at the solution (row-major, p x p).
    pub gn_matrix: Vec<f64>,
    #[allow(dead_code)] // diagnostic, read by tests
    pub iterations: usize,
}

/// Minimizes `‖y - Σ_i u_i² basis_i‖²`.
///
/// `basis` holds one column per parameter, each of length `y.len()`.
pub fn fit_squared_weights(y: &[f64], basis: &[Vec<f64>], u0: &[f64]) -> LmFit {
    let p = basis.len();
    let n = y.len();
    let mut u = u0.to_vec();
    let mut res = vec![0.0; n];
    let residual = |u: &[f64], res: &mut [f64]| -> f64 {
        res.copy_from_slice(y);
        for (i, col) in basis.iter().enumerate() {
            let w = u[i] * u[i];
            if w != 0.0 {
                for (r, b) in res.iter_mut().zip(col) {
                    *r -= w * b;
                }
            }
        }
        0.5 * res.iter().map(|r| r * r).sum::<f64>()
    };
    let mut cost = residual(&u, &mut res);
    let mut lambda = 1e-3;
    let mut gn = vec![0.0; p * p];
    let mut grad = vec![0.0; p];
    let mut iterations = 0;
    for _ in 0..500 {
        iterations += 1;
        // J_{k,i} = -2 u_i B_{i,k};  gn = JᵀJ, grad = Jᵀr
        for i in 0..p {
            let ci = -2.0 * u[i];
            grad[i] = ci * dot(&basis[i], &res);
            for j in 0..=i {
                let v = ci * (-2.0 * u[j]) * dot(&basis[i], &basis[j]);
                gn[i * p + j] = v;
                gn[j * p + i] = v;
            }
        }
        let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if gmax == 0.0 {
            break; // stationary (the all-zero start lands here)
        }
        let mut accepted = false;
        while lambda < 1e14 {
            // (JᵀJ + λ diag(JᵀJ) + tiny) δ = -Jᵀr
            let mut a = gn.clone();
            let floor = 1e-300;
            for i in 0..p {
                a[i * p + i] += lambda * gn[i * p + i].max(floor) + floor;
            }
            if let Some(delta) = solve_spd(&a, &grad.iter().map(|g| -g).collect::<Vec<_>>(), p)
            {
                let u_try: Vec<f64> = u.iter().zip(&delta).map(|(a, d)| a + d).collect();
                let mut res_try = vec![0.0; n];
                let cost_try = residual(&u_try, &mut res_try);
                if cost_try < cost {
                    let rel_drop = (cost - cost_try) / cost.max(f64::MIN_POSITIVE);
                    u = u_try;
                    res = res_try;
                    cost = cost_try;
                    lambda = (lambda / 10.0).max(1e-12);
                    accepted = true;
                    if rel_drop < 1e-12 {
                        iterations = usize::MAX; // force outer exit below
                    }
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !accepted || iterations == usize::MAX {
            break;
        }
    }
    // final JᵀJ at the solution for the covariance estimate
    for i in 0..p {
        for j in 0..=i {
            let v = 4.0 * u[i] * u[j] * dot(&basis[i], &basis[j]);
            gn[i * p + j] = v;
            gn[j * p + i] = v;
        }
    }
    LmFit {
        u,
        residual_norm: (2.0 * cost).sqrt(),
        gn_matrix: gn,
        iterations: iterations.min(500),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cholesky solve of a symmetric positive-definite system; `None` when a
/// pivot collapses.
pub fn solve_spd(a: &[f64], b: &[f64], p: usize) -> Option<Vec<f64>> {
    let mut l = a.to_vec();
    for j in 0..p {
        let mut d = l[j * p + j];
        for k in 0..j {
            d -= l[j * p + k] * l[j * p + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        l[j * p + j] = d;
        for i in (j + 1)..p {
            let mut s = l[i * p + j];
            for k in 0..j {
                s -= l[i * p + k] * l[j * p + k];
            }
            l[i * p + j] = s / d;
        }
    }
    // forward then backward substitution
    let mut x = b.to_vec();
    for i in 0..p {
        for k in 0..i {
            let t = l[i * p + k] * x[k];
            x[i] -= t;
        }
        x[i] /= l[i * p + i];
    }
    for i in (0..p).rev() {
        for k in (i + 1)..p {
            let t = l[k * p + i] * x[k];
            x[i] -= t;
        }
        x[i] /= l[i * p + i];
    }
    Some(x)
}

/// Inverse of a symmetric positive-definite matrix, or `None` when singular
/// to working precision.
pub fn invert_spd(a: &[f64], p: usize) -> Option<Vec<f64>> {
    // reject blatant rank deficiency before Cholesky noise does
    let scale = (0..p).map(|i| a[i * p + i]).fold(0.0f64, f64::max);
    if scale <= 0.0 {
        return None;
    }
    for i in 0..p {
        if a[i * p + i] < 1e-14 * scale {
            return None;
        }
    }
    let mut inv = vec![0.0; p * p];
    for col in 0..p {
        let mut e = vec![0.0; p];
        e[col] = 1.0;
        let x = solve_spd(a, &e, p)?;
        for i in 0..p {
            inv[i * p + col] = x[i];
        }
    }
    Some(inv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_linear_combination() {
        let n = 200;
        let x: Vec<f64> = (0..n).map(|i| i as f64 / 20.0).collect();
        let b0: Vec<f64> = x.iter().map(|v| (-v * v / 2.0).exp()).collect();
        let b1: Vec<f64> = x.iter().map(|v| 1.0 / (1.0 + (v - 3.0) * (v - 3.0))).collect();
        let y: Vec<f64> = b0
            .iter()
            .zip(&b1)
            .map(|(a, b)| 0.7 * a + 0.25 * b)
            .collect();
        let fit = fit_squared_weights(&y, &[b0, b1], &[1e-3, 2e-3]);
        let w: Vec<f64> = fit.u.iter().map(|u| u * u).collect();
        assert!((w[0] - 0.7).abs() < 1e-8, "{w:?}");
        assert!((w[1] - 0.25).abs() < 1e-8, "{w:?}");
        assert!(fit.residual_norm < 1e-8);
    }

    #[test]
    fn zero_start_is_stationary() {
        let y = vec![1.0; 10];
        let b = vec![vec![1.0; 10]];
        let fit = fit_squared_weights(&y, &b, &[0.0]);
        assert_eq!(fit.u[0], 0.0);
        assert_eq!(fit.iterations, 1);
    }

    #[test]
    fn nonnegative_by_construction() {
        // best unconstrained weight would be negative; u² pins it at ~0
        let b0 = vec![1.0, 1.0, 1.0, 1.0];
        let b1 = vec![1.0, 0.0, 1.0, 0.0];
        let y = vec![0.8, 1.2, 0.8, 1.2]; // wants w1 < 0
        let fit = fit_squared_weights(&y, &[b0, b1], &[1e-3, 1e-3]);
        let w1 = fit.u[1] * fit.u[1];
        assert!(w1 >= 0.0 && w1 < 1e-6, "w1 = {w1}");
    }

    #[test]
    fn spd_solve_and_invert() {
        let a = vec![4.0, 1.0, 1.0, 3.0];
        let x = solve_spd(&a, &[1.0, 2.0], 2).unwrap();
        assert!((4.0 * x[0] + x[1] - 1.0).abs() < 1e-12);
        assert!((x[0] + 3.0 * x[1] - 2.0).abs() < 1e-12);
        let inv = invert_spd(&a, 2).unwrap();
        assert!((inv[0] - 3.0 / 11.0).abs() < 1e-12);
        let singular = vec![1.0, 1.0, 1.0, 1.0];
        assert!(invert_spd(&singular, 2).is_none());
    }
}
