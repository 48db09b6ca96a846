//! Franck-Condon factors `M_m^n(γ) = <m|D(γ)|n>` of the displacement operator
//! `D(γ) = exp(γ b† - γ* b)`, their weak-coupling limit, and the roots of the
//! associated generalized Laguerre polynomials (blind coupling values).

use ndarray::Array2;
use num_complex::Complex64 as C64;
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// ln(n!) from a lazily built cumulative table.
pub(crate) fn ln_factorial(n: usize) -> f64 {
    const TABLE_LEN: usize = 4096;
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(TABLE_LEN);
        t.push(0.0);
        for k in 1..TABLE_LEN {
            t.push(t[k - 1] + (k as f64).ln());
        }
        t
    });
    if n < table.len() {
        table[n]
    } else {
        // Stirling with 1/(12n) correction; only reached for very large indices.
        let x = n as f64;
        x * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI * x).ln() + 1.0 / (12.0 * x)
    }
}

/// Generalized Laguerre polynomial `L_deg^(alpha)(x)` by the three-term
/// upward recurrence in the degree.
pub(crate) fn genlaguerre(deg: usize, alpha: usize, x: f64) -> f64 {
    let a = alpha as f64;
    if deg == 0 {
        return 1.0;
    }
    let mut lm1 = 1.0;
    let mut l = 1.0 + a - x;
    for k in 1..deg {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + a - x) * l - (kf + a) * lm1) / (kf + 1.0);
        lm1 = l;
        l = next;
    }
    l
}

/// Single Franck-Condon factor `<m|D(gamma)|n>`.
///
/// Magnitudes are assembled in log space so that indices well beyond 170
/// stay finite.
pub fn fc_factor(m: usize, n: usize, gamma: C64) -> C64 {
    let a2 = gamma.norm_sqr();
    let (lo, hi) = (m.min(n), m.max(n));
    let d = hi - lo;
    let lag = genlaguerre(lo, d, a2);
    if lag == 0.0 {
        return C64::new(0.0, 0.0);
    }
    let mut ln_mag = -a2 / 2.0 + 0.5 * (ln_factorial(lo) - ln_factorial(hi)) + lag.abs().ln();
    let mut phase = C64::new(lag.signum(), 0.0);
    if d > 0 {
        if a2 == 0.0 {
            return C64::new(0.0, 0.0);
        }
        ln_mag += d as f64 * gamma.norm().ln();
        let unit = gamma / gamma.norm();
        let dir = if m >= n { unit } else { unit.conj() };
        phase *= dir.powu(d as u32);
        if n > m && d % 2 == 1 {
            phase = -phase;
        }
    }
    phase * ln_mag.exp()
}

/// Leading-order magnitude `|M_m^n|` for weak coupling.
pub fn fc_weak_coupling(m: usize, n: usize, gamma_abs: f64) -> f64 {
    let (lo, hi) = (m.min(n), m.max(n));
    let d = (hi - lo) as f64;
    let ln = if d > 0.0 {
        if gamma_abs == 0.0 {
            return 0.0;
        }
        d * gamma_abs.ln() - ln_factorial(hi - lo) + 0.5 * (ln_factorial(hi) - ln_factorial(lo))
    } else {
        0.0
    };
    ln.exp()
}

/// Precomputed table of `M_m^n(gamma)` for `0 <= m, n <= cutoff`.
#[derive(Debug, Clone)]
pub struct FcTable {
    gamma: C64,
    cutoff: usize,
    entries: Array2<C64>,
}

impl FcTable {
    pub fn new(gamma: C64, cutoff: usize) -> Self {
        let mut entries = Array2::zeros((cutoff + 1, cutoff + 1));
        for m in 0..=cutoff {
            for n in 0..=cutoff {
                entries[(m, n)] = fc_factor(m, n, gamma);
            }
        }
        Self {
            gamma,
            cutoff,
            entries,
        }
    }

    pub fn gamma(&self) -> C64 {
        self.gamma
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// `M_m^n = <m|D(gamma)|n>`.
    #[inline]
    pub fn get(&self, m: usize, n: usize) -> C64 {
        self.entries[(m, n)]
    }

    pub fn entries(&self) -> &Array2<C64> {
        &self.entries
    }
}

/// Positive real couplings `gamma` in `(0, gamma_max]` at which the resonant
/// factor `M_{i+kappa}^i` vanishes, i.e. the roots of
/// `L_min(i+kappa,i)^(|kappa|)(gamma^2)`.
///
/// Roots are bracketed by a fixed-step scan in `x = gamma^2` and then
/// bisected; the polynomial degrees involved are tiny, so robustness wins
/// over cleverness here.
pub fn blind_gammas(i: usize, kappa: i64, gamma_max: f64) -> Result<Vec<f64>> {
    let j = i as i64 + kappa;
    if j < 0 {
        return Err(Error::InvalidTransition { i, kappa });
    }
    if gamma_max <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "gamma_max must be positive, got {gamma_max}"
        )));
    }
    let deg = (j as usize).min(i);
    let alpha = kappa.unsigned_abs() as usize;
    let mut roots = Vec::new();
    if deg == 0 {
        return Ok(roots);
    }
    let x_max = gamma_max * gamma_max;
    let step = 1e-3;
    let f = |x: f64| genlaguerre(deg, alpha, x);
    let mut x0 = 0.0;
    let mut f0 = f(x0);
    let n_steps = (x_max / step).ceil() as usize;
    for k in 1..=n_steps {
        let x1 = (k as f64 * step).min(x_max);
        let f1 = f(x1);
        if f1 == 0.0 {
            roots.push(x1.sqrt());
        } else if f0 * f1 < 0.0 {
            let (mut a, mut b) = (x0, x1);
            let mut fa = f0;
            while b - a > 1e-14 {
                let mid = 0.5 * (a + b);
                let fm = f(mid);
                if fm == 0.0 {
                    a = mid;
                    b = mid;
                } else if fa * fm < 0.0 {
                    b = mid;
                } else {
                    a = mid;
                    fa = fm;
                }
            }
            roots.push((0.5 * (a + b)).sqrt());
        }
        x0 = x1;
        f0 = f1;
    }
    roots.dedup_by(|a, b| (*a - *b).abs() < 1e-10);
    Ok(roots)
}
