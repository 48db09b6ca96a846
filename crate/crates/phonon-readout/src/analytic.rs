//! Second-order analytic resonance-fluorescence spectra.
//!
//! The full model decomposes the signal into elastic peaks pinned to the
//! laser comb `x = N + κ` and inelastic humps pinned to the zero-phonon-line
//! comb `x = N`, the latter present only with pure dephasing. The narrow
//! model keeps resonant transitions only and is valid for weak dissipation
//! and integer laser detuning. Both share a consistent intensity scale, so
//! they can be compared without renormalization.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::franck_condon::{fc_factor, ln_factorial, FcTable};
use crate::model::ModelParams;
use crate::spectrum::{grid_from_centers, Provenance, Spectrum};

const I: C64 = C64::new(0.0, 1.0);

/// Fock-space cutoff for the internal sums:
/// largest occupied index + ceil(|κ|) + ceil(10|γ|² + 15).
pub fn fock_cutoff(params: &ModelParams, n_occ_max: usize) -> usize {
    n_occ_max + params.kappa.abs().ceil() as usize
        + (10.0 * params.gamma.norm_sqr() + 15.0).ceil() as usize
}

fn check_occupations(occupations: &[f64]) -> Result<()> {
    if occupations.is_empty() {
        return Err(Error::InvalidInput("empty occupation vector".into()));
    }
    if occupations.iter().any(|&p| !(p >= -1e-12)) {
        return Err(Error::InvalidInput("negative or non-finite occupation".into()));
    }
    let sum: f64 = occupations.iter().sum();
    if (sum - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidInput(format!(
            "occupations sum to {sum}, expected 1"
        )));
    }
    Ok(())
}

fn integer_kappa(kappa: f64) -> Result<i64> {
    let k = kappa.round();
    if (kappa - k).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "kappa = {kappa} must be an integer for the narrow model"
        )));
    }
    Ok(k as i64)
}

/// Precomputed line weights of the full model (elastic peaks and inelastic
/// humps), evaluable on any detuning grid.
#[derive(Debug, Clone)]
pub struct SpectralTerms {
    params: ModelParams,
    /// (N, weight): elastic Lorentzian of width Γ at `x = N + κ`.
    elastic: Vec<(i64, f64)>,
    /// (N, φ_N): inelastic lineshape of width Γ + (γ_pd+γ_xd)/2 at `x = N`.
    inelastic: Vec<(i64, C64)>,
}

impl SpectralTerms {
    pub fn new(params: &ModelParams, occupations: &[f64]) -> Result<Self> {
        let n_occ_max = occupations
            .iter()
            .rposition(|&p| p > 0.0)
            .unwrap_or(0);
        Self::with_cutoff(params, occupations, fock_cutoff(params, n_occ_max))
    }

    /// Like [`SpectralTerms::new`] with an explicit Fock cutoff; the default
    /// policy is generous, so this mainly serves convergence checks.
    pub fn with_cutoff(params: &ModelParams, occupations: &[f64], cutoff: usize) -> Result<Self> {
        params.validate()?;
        check_occupations(occupations)?;
        let table = FcTable::new(params.gamma, cutoff);
        let hw = params.half_width();
        let kappa = params.kappa;
        let dim = cutoff + 1;

        let mut elastic = vec![0.0; 2 * cutoff + 1]; // N = p - m in [-cutoff, cutoff]
        let mut inelastic = vec![C64::ZERO; 2 * cutoff + 1]; // N = n - m

        for (p, &rho_p) in occupations.iter().enumerate() {
            if rho_p <= 0.0 {
                continue;
            }
            // resolvent factors over the intermediate index
            let c1: Vec<C64> = (0..dim)
                .map(|j| 1.0 / (hw + I * (kappa - j as f64 + p as f64)))
                .collect();
            let c2: Vec<C64> = (0..dim)
                .map(|q| 1.0 / (hw - I * (kappa - q as f64 + p as f64)))
                .collect();

            for m in 0..dim {
                let mut amp = C64::ZERO;
                for j in 0..dim {
                    amp += table.get(j, m) * table.get(j, p).conj() * c1[j];
                }
                let n_idx = (p as i64 - m as i64 + cutoff as i64) as usize;
                elastic[n_idx] += params.drive_scale * rho_p * amp.norm_sqr();
            }

            if params.gamma_pd > 0.0 {
                for m in 0..dim {
                    // q-sums reused across n through the q - n denominator
                    for n in 0..dim {
                        let mut s = C64::ZERO;
                        for q in 0..dim {
                            let dq = params.gamma_pd
                                / (params.gamma_xd + I * (q as f64 - n as f64));
                            s += table.get(q, m).conj() * table.get(q, p) * dq * c2[q];
                        }
                        let pref =
                            table.get(n, m) * table.get(n, p).conj() * c1[n] * rho_p * s;
                        let n_idx = (n as i64 - m as i64 + cutoff as i64) as usize;
                        inelastic[n_idx] += params.drive_scale * pref;
                    }
                }
            }
        }

        let off = cutoff as i64;
        let elastic = elastic
            .into_iter()
            .enumerate()
            .filter(|(_, w)| *w != 0.0)
            .map(|(i, w)| (i as i64 - off, w))
            .collect();
        let inelastic = inelastic
            .into_iter()
            .enumerate()
            .filter(|(_, f)| f.norm_sqr() > 0.0)
            .map(|(i, f)| (i as i64 - off, f))
            .collect();
        Ok(Self {
            params: *params,
            elastic,
            inelastic,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Elastic peak weights as (N, weight) with the peak at `x = N + κ`.
    pub fn elastic_weights(&self) -> &[(i64, f64)] {
        &self.elastic
    }

    /// Inelastic hump coefficients φ_N as (N, φ_N) with the hump at `x = N`.
    pub fn phi(&self) -> &[(i64, C64)] {
        &self.inelastic
    }

    pub fn elastic_at(&self, x: f64) -> f64 {
        let g = self.params.gamma_det;
        let g2 = g * g;
        self.elastic
            .iter()
            .map(|&(n, w)| {
                let d = x - n as f64 - self.params.kappa;
                w * g2 / (g2 + d * d)
            })
            .sum()
    }

    pub fn inelastic_at(&self, x: f64) -> f64 {
        let g = self.params.gamma_det;
        let gw = self.params.broad_width();
        self.inelastic
            .iter()
            .map(|&(n, phi)| {
                let d = x - n as f64;
                (phi.re * g * gw + phi.im * g * d) / (gw * gw + d * d)
            })
            .sum()
    }

    pub fn value_at(&self, x: f64) -> f64 {
        self.elastic_at(x) + self.inelastic_at(x)
    }

    /// Default grid spanning every line center carrying at least 1e-10 of
    /// the strongest weight.
    pub fn default_grid(&self) -> Vec<f64> {
        let mut centers = Vec::new();
        let wmax = self
            .elastic
            .iter()
            .map(|&(_, w)| w)
            .fold(0.0f64, f64::max);
        for &(n, w) in &self.elastic {
            if w >= 1e-10 * wmax {
                centers.push(n as f64 + self.params.kappa);
            }
        }
        let fmax = self
            .inelastic
            .iter()
            .map(|&(_, f)| f.norm())
            .fold(0.0f64, f64::max);
        for &(n, f) in &self.inelastic {
            if f.norm() >= 1e-10 * fmax {
                centers.push(n as f64);
            }
        }
        grid_from_centers(&centers, &self.params)
    }

    pub fn evaluate(&self, grid: &[f64]) -> Result<Spectrum> {
        let values = grid.iter().map(|&x| self.value_at(x)).collect();
        Spectrum::new(grid.to_vec(), values, self.params, Provenance::Full)
    }
}

/// Full second-order spectrum on `grid`.
pub fn rf_spectrum_full(
    params: &ModelParams,
    occupations: &[f64],
    grid: &[f64],
) -> Result<Spectrum> {
    SpectralTerms::new(params, occupations)?.evaluate(grid)
}

/// Weight of the k-th peak of the narrow model at `x = k`:
/// `A_k = Σ_{i,f: k = κ+i-f} |M_{i+κ}^f M_{i+κ}^i|² ρ_ii`.
#[derive(Debug, Clone)]
pub struct PeakWeights {
    pub kappa: i64,
    pub k_start: i64,
    pub weights: Vec<f64>,
}

impl PeakWeights {
    pub fn weight(&self, k: i64) -> f64 {
        let idx = k - self.k_start;
        if idx < 0 || idx as usize >= self.weights.len() {
            0.0
        } else {
            self.weights[idx as usize]
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.weights
            .iter()
            .enumerate()
            .map(|(i, &w)| (self.k_start + i as i64, w))
    }
}

/// Resonant peak weights A_k over `k_range` (inclusive).
pub fn peak_weights(
    occupations: &[f64],
    gamma: C64,
    kappa: i64,
    k_range: (i64, i64),
) -> Result<PeakWeights> {
    check_occupations(occupations)?;
    let (k_lo, k_hi) = k_range;
    if k_lo > k_hi {
        return Err(Error::InvalidInput("empty k range".into()));
    }
    let mut weights = vec![0.0; (k_hi - k_lo + 1) as usize];
    for (i, &rho_i) in occupations.iter().enumerate() {
        if rho_i <= 0.0 {
            continue;
        }
        let j = i as i64 + kappa;
        if j < 0 {
            continue; // no negative Fock states to pass through
        }
        let m_res = fc_factor(j as usize, i, gamma).norm_sqr();
        if m_res == 0.0 {
            continue;
        }
        for k in k_lo..=k_hi {
            let f = kappa + i as i64 - k;
            if f < 0 {
                continue;
            }
            let m_out = fc_factor(j as usize, f as usize, gamma).norm_sqr();
            weights[(k - k_lo) as usize] += m_res * m_out * rho_i;
        }
    }
    Ok(PeakWeights {
        kappa,
        k_start: k_lo,
        weights,
    })
}

/// Precomputed narrow-model terms: sharp Γ-peaks plus broad pedestals at
/// `x = k`, scaled like the full model.
#[derive(Debug, Clone)]
pub struct NarrowTerms {
    params: ModelParams,
    weights: PeakWeights,
    flagged_wide: bool,
}

impl NarrowTerms {
    pub fn new(params: &ModelParams, occupations: &[f64]) -> Result<Self> {
        params.validate()?;
        check_occupations(occupations)?;
        let kappa = integer_kappa(params.kappa)?;
        let n_occ_max = occupations.iter().rposition(|&p| p > 0.0).unwrap_or(0);
        let cutoff = fock_cutoff(params, n_occ_max) as i64;
        let k_lo = kappa - cutoff;
        let k_hi = kappa + n_occ_max as i64;
        let weights = peak_weights(occupations, params.gamma, kappa, (k_lo, k_hi))?;
        Ok(Self {
            params: *params,
            weights,
            flagged_wide: params.gamma_pd + params.gamma_xd >= 1.0,
        })
    }

    /// True when (γ_pd + γ_xd) ≥ ω, outside the intended validity regime.
    pub fn outside_validity(&self) -> bool {
        self.flagged_wide
    }

    pub fn weights(&self) -> &PeakWeights {
        &self.weights
    }

    pub fn sharp_at(&self, x: f64) -> f64 {
        let p = &self.params;
        let g2 = p.gamma_det * p.gamma_det;
        let scale = p.drive_scale * 4.0 / ((p.gamma_pd + p.gamma_xd) * (p.gamma_pd + p.gamma_xd));
        scale
            * self
                .weights
                .iter()
                .map(|(k, w)| {
                    let d = x - k as f64;
                    w * g2 / (g2 + d * d)
                })
                .sum::<f64>()
    }

    pub fn broad_at(&self, x: f64) -> f64 {
        let p = &self.params;
        if p.gamma_pd == 0.0 {
            return 0.0;
        }
        let gw = p.broad_width();
        let scale = p.drive_scale * 4.0 / ((p.gamma_pd + p.gamma_xd) * (p.gamma_pd + p.gamma_xd))
            * (p.gamma_pd / p.gamma_xd);
        scale
            * self
                .weights
                .iter()
                .map(|(k, w)| {
                    let d = x - k as f64;
                    w * p.gamma_det * gw / (gw * gw + d * d)
                })
                .sum::<f64>()
    }

    pub fn value_at(&self, x: f64) -> f64 {
        self.sharp_at(x) + self.broad_at(x)
    }

    pub fn default_grid(&self) -> Vec<f64> {
        let wmax = self.weights.weights.iter().copied().fold(0.0f64, f64::max);
        let centers: Vec<f64> = self
            .weights
            .iter()
            .filter(|&(_, w)| w >= 1e-10 * wmax)
            .map(|(k, _)| k as f64)
            .collect();
        grid_from_centers(&centers, &self.params)
    }

    pub fn evaluate(&self, grid: &[f64]) -> Result<Spectrum> {
        let values = grid.iter().map(|&x| self.value_at(x)).collect();
        Spectrum::new(grid.to_vec(), values, self.params, Provenance::Narrow)
    }
}

/// Weak-dissipation resonant spectrum on `grid` (integer κ only).
pub fn rf_spectrum_narrow(
    params: &ModelParams,
    occupations: &[f64],
    grid: &[f64],
) -> Result<Spectrum> {
    NarrowTerms::new(params, occupations)?.evaluate(grid)
}

/// Narrow-model lineshapes with externally supplied peak weights, e.g. the
/// semiclassical squared-Poisson weights.
pub fn narrow_terms_from_weights(params: &ModelParams, weights: PeakWeights) -> Result<NarrowTerms> {
    params.validate()?;
    integer_kappa(params.kappa)?;
    Ok(NarrowTerms {
        params: *params,
        weights,
        flagged_wide: params.gamma_pd + params.gamma_xd >= 1.0,
    })
}

/// Semiclassical spectrum: the narrow lineshapes carrying squared-Poisson
/// peak weights with mean `d_shift`.
pub fn rf_spectrum_semiclassical(
    params: &ModelParams,
    d_shift: f64,
    grid: &[f64],
) -> Result<Spectrum> {
    let terms = semiclassical_terms(params, d_shift)?;
    let values = grid.iter().map(|&x| terms.value_at(x)).collect();
    Spectrum::new(grid.to_vec(), values, *params, Provenance::Semiclassical)
}

/// Precomputed semiclassical terms; `default_grid` works as for the narrow
/// model.
pub fn semiclassical_terms(params: &ModelParams, d_shift: f64) -> Result<NarrowTerms> {
    let kappa = integer_kappa(params.kappa)?;
    let k_span = (d_shift + 10.0 * d_shift.sqrt() + 10.0).ceil() as i64 + kappa.abs();
    let weights = semiclassical_weights(d_shift, kappa, (-k_span, k_span))?;
    narrow_terms_from_weights(params, weights)
}

/// Semiclassical peak weights `A_k = (D^{|k|+|κ|} / (|k|!|κ|!))²`.
pub fn semiclassical_weights(d_shift: f64, kappa: i64, k_range: (i64, i64)) -> Result<PeakWeights> {
    if d_shift < 0.0 {
        return Err(Error::InvalidInput(format!(
            "strain shift D must be >= 0, got {d_shift}"
        )));
    }
    let (k_lo, k_hi) = k_range;
    if k_lo > k_hi {
        return Err(Error::InvalidInput("empty k range".into()));
    }
    let ak = kappa.unsigned_abs() as usize;
    let weights = (k_lo..=k_hi)
        .map(|k| {
            let n = k.unsigned_abs() as usize + ak;
            if d_shift == 0.0 {
                return if n == 0 { 1.0 } else { 0.0 };
            }
            let ln = n as f64 * d_shift.ln()
                - ln_factorial(k.unsigned_abs() as usize)
                - ln_factorial(ak);
            (2.0 * ln).exp()
        })
        .collect();
    Ok(PeakWeights {
        kappa,
        k_start: k_lo,
        weights,
    })
}

/// Exact small-coupling series for the semiclassical weight of peak `k`:
/// the leading-order Franck-Condon products summed over the Poisson
/// occupations of a coherent state with amplitude `alpha_abs`.
///
/// Terms are accumulated in log space, so large `alpha_abs` is safe.
pub fn semiclassical_weight_exact(
    alpha_abs: f64,
    gamma_abs: f64,
    kappa: i64,
    k: i64,
) -> Result<f64> {
    if alpha_abs < 0.0 || gamma_abs < 0.0 {
        return Err(Error::InvalidInput(
            "alpha and gamma magnitudes must be >= 0".into(),
        ));
    }
    let a2 = alpha_abs * alpha_abs;
    let n_pref = (k.unsigned_abs() + kappa.unsigned_abs()) as f64;
    let ln_pref = if gamma_abs == 0.0 && n_pref > 0.0 {
        return Ok(0.0);
    } else if n_pref > 0.0 {
        2.0 * (n_pref * gamma_abs.ln()
            - ln_factorial(k.unsigned_abs() as usize)
            - ln_factorial(kappa.unsigned_abs() as usize))
    } else {
        0.0
    };
    let i_min = 0i64.max(-kappa).max(k - kappa) as usize;
    // ln of each series term; the Poisson bulk sits near i = a2
    let mut ln_terms = Vec::new();
    let mut best = f64::NEG_INFINITY;
    let mut i = i_min;
    loop {
        let j = (i as i64 + kappa) as usize;
        let f = (i as i64 + kappa - k) as usize;
        let r1 = (ln_factorial(j) - ln_factorial(f)).abs();
        let r2 = (ln_factorial(j) - ln_factorial(i)).abs();
        let poisson = if a2 == 0.0 {
            if i == 0 {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        } else {
            i as f64 * a2.ln() - ln_factorial(i)
        };
        let lt = r1 + r2 + poisson;
        ln_terms.push(lt);
        if lt > best {
            best = lt;
        }
        if a2 == 0.0 && i >= i_min {
            break;
        }
        // stop once past the Poisson bulk and 1e-16 below the running peak
        if i > i_min + 10 && (i as f64) > a2 + 10.0 * a2.sqrt() + 10.0 && lt < best - 40.0 {
            break;
        }
        i += 1;
    }
    let ln_sum = best + ln_terms.iter().map(|t| (t - best).exp()).sum::<f64>().ln();
    Ok((ln_pref - a2 + ln_sum).exp())
}

/// Area fraction of the inelastic background, γ_pd / (γ_pd + γ_xd).
pub fn background_area_ratio(gamma_pd: f64, gamma_xd: f64) -> Result<f64> {
    if !(gamma_xd > 0.0) || gamma_pd < 0.0 {
        return Err(Error::InvalidInput(
            "need gamma_xd > 0 and gamma_pd >= 0".into(),
        ));
    }
    Ok(gamma_pd / (gamma_pd + gamma_xd))
}

/// Time-averaged correlation envelope Ḡ(τ) with the ZPL carrier removed.
///
/// The elastic part oscillates forever; the γ_pd-proportional part decays at
/// (γ_pd + γ_xd)/2 and produces the inelastic background.
pub fn avg_correlation(params: &ModelParams, occupations: &[f64], tau: f64) -> Result<C64> {
    params.validate()?;
    check_occupations(occupations)?;
    if tau < 0.0 {
        return Err(Error::InvalidInput(format!("tau must be >= 0, got {tau}")));
    }
    let n_occ_max = occupations.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    let cutoff = fock_cutoff(params, n_occ_max);
    let table = FcTable::new(params.gamma, cutoff);
    let hw = params.half_width();
    let kappa = params.kappa;
    let dim = cutoff + 1;
    let mut total = C64::ZERO;
    for (p, &rho_p) in occupations.iter().enumerate() {
        if rho_p <= 0.0 {
            continue;
        }
        let c1: Vec<C64> = (0..dim)
            .map(|n| 1.0 / (hw + I * (kappa - n as f64 + p as f64)))
            .collect();
        let c2: Vec<C64> = (0..dim)
            .map(|q| 1.0 / (hw - I * (kappa - q as f64 + p as f64)))
            .collect();
        // elastic piece: the n-dependent phases cancel against e^{-i(m-n)τ}
        let mut elastic = C64::ZERO;
        for m in 0..dim {
            let mut a = C64::ZERO;
            let mut b = C64::ZERO;
            for n in 0..dim {
                a += table.get(n, m) * table.get(n, p).conj() * c1[n];
                b += table.get(n, m).conj() * table.get(n, p) * c2[n];
            }
            elastic += a * b * (-I * m as f64 * tau).exp();
        }
        total += rho_p * (I * (kappa + p as f64) * tau).exp() * elastic;

        if params.gamma_pd > 0.0 {
            let mut decaying = C64::ZERO;
            for m in 0..dim {
                for n in 0..dim {
                    let mut s = C64::ZERO;
                    for q in 0..dim {
                        let dq =
                            params.gamma_pd / (params.gamma_xd + I * (q as f64 - n as f64));
                        s += table.get(q, m).conj() * table.get(q, p) * dq * c2[q];
                    }
                    decaying += table.get(n, m)
                        * table.get(n, p).conj()
                        * c1[n]
                        * s
                        * (-I * (m as f64 - n as f64) * tau).exp();
                }
            }
            total += rho_p * (-(params.gamma_pd + params.gamma_xd) * tau / 2.0).exp() * decaying;
        }
    }
    Ok(params.drive_scale * total)
}

/// Excited-state density matrix `<m|_X ρ |n>_X` from the initial phonon
/// density matrix, evaluated at `phase_time` after switch-on (use 0 for full
/// phonon periods).
pub fn excited_state_dm(
    params: &ModelParams,
    rho_g: &ndarray::Array2<C64>,
    phase_time: f64,
) -> Result<ndarray::Array2<C64>> {
    params.validate()?;
    if phase_time < 0.0 {
        return Err(Error::InvalidInput("phase_time must be >= 0".into()));
    }
    if rho_g.nrows() != rho_g.ncols() || rho_g.nrows() == 0 {
        return Err(Error::InvalidInput("rho_g must be square".into()));
    }
    let n_occ = rho_g.nrows();
    let cutoff = fock_cutoff(params, n_occ - 1);
    let table = FcTable::new(params.gamma, cutoff);
    let gs = params.gamma_pd + params.gamma_xd;
    let hw = params.half_width();
    let kappa = params.kappa;
    let dim = cutoff + 1;
    let mut out = ndarray::Array2::zeros((dim, dim));
    for m in 0..dim {
        for n in 0..dim {
            let mut s = C64::ZERO;
            for p in 0..n_occ {
                for q in 0..n_occ {
                    let rho_pq = rho_g[(p, q)];
                    if rho_pq == C64::ZERO {
                        continue;
                    }
                    let delta = (m as f64 - n as f64) - (p as f64 - q as f64);
                    let ratio = (gs + I * delta) / (params.gamma_xd + I * delta);
                    let c1 = 1.0 / (hw + I * (kappa + q as f64 - n as f64));
                    let c2 = 1.0 / (hw - I * (kappa + p as f64 - m as f64));
                    let phase = (-I * (p as f64 - q as f64) * phase_time).exp();
                    s += table.get(m, p) * table.get(n, q).conj() * rho_pq * phase * ratio * c1
                        * c2;
                }
            }
            out[(m, n)] = params.drive_scale * s;
        }
    }
    Ok(out)
}
