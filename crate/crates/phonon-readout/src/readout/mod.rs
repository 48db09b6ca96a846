//! The inverse problem: noise injection, sideband detection, occupation
//! fitting and coupling sweeps.

mod lm;

use rand_chacha::ChaCha8Rng;
use rand_core::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{NarrowTerms, SpectralTerms};
use crate::error::{Error, Result};
use crate::model::{ModelParams, PhononState};
use crate::spectrum::{Provenance, Spectrum};

/// White-noise injection parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Standard deviation as a percentage of the largest spectral value.
    pub percent_of_max: f64,
    pub seed: u64,
    /// Number of independent noise realizations in sweeps.
    #[serde(default = "default_realizations")]
    pub realizations: usize,
}

fn default_realizations() -> usize {
    50
}

impl NoiseSpec {
    pub fn clean(seed: u64) -> Self {
        Self {
            percent_of_max: 0.0,
            seed,
            realizations: 1,
        }
    }
}

/// Which closed-form spectrum backs a fit or simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    Narrow,
    Full,
}

impl std::fmt::Display for FitModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FitModel::Narrow => "narrow",
            FitModel::Full => "full",
        })
    }
}

/// splitmix64; documented so seed streams can be reproduced elsewhere.
fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Per-cell seed for (gamma index, realization) from the master seed.
pub fn cell_seed(master: u64, gamma_idx: usize, realization: usize) -> u64 {
    splitmix64(splitmix64(master ^ splitmix64(gamma_idx as u64 + 1)) ^ (realization as u64 + 1))
}

/// Standard normal samples via Box-Muller on ChaCha8 output; two 64-bit
/// draws per sample, so the stream is fully specified by the seed.
struct GaussianStream {
    rng: ChaCha8Rng,
}

impl GaussianStream {
    fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn uniform(&mut self) -> f64 {
        // 53-bit mantissa in [0, 1)
        (self.rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    fn next(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform(); // (0, 1]
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// Adds uncorrelated Gaussian noise per grid point with standard deviation
/// `percent_of_max`% of the largest value. Negative results are kept.
pub fn add_noise(spec: &Spectrum, noise: &NoiseSpec) -> Spectrum {
    if noise.percent_of_max == 0.0 {
        return spec.clone();
    }
    let sigma = noise.percent_of_max / 100.0 * spec.max_value();
    let mut stream = GaussianStream::new(noise.seed);
    let values = spec
        .values()
        .iter()
        .map(|v| v + sigma * stream.next())
        .collect();
    spec.with_values(values, Provenance::MeasuredNoise)
}

/// Readout error `Δ_read = ½ Σ |ρ_ii - ρ_ii;fit|`; the shorter vector is
/// zero-padded.
pub fn readout_error(true_occ: &[f64], fitted_occ: &[f64]) -> f64 {
    let n = true_occ.len().max(fitted_occ.len());
    let mut acc = 0.0;
    for i in 0..n {
        let a = true_occ.get(i).copied().unwrap_or(0.0);
        let b = fitted_occ.get(i).copied().unwrap_or(0.0);
        acc += (a - b).abs();
    }
    0.5 * acc
}

const PEAK_WINDOW: f64 = 0.3;

/// Largest `N ≥ 1` with a visible peak near `x = κ + N`, or 0 when nothing
/// shows above the laser.
///
/// A peak is a strict interior local maximum whose prominence (height above
/// the higher of the two flanking minima) reaches `threshold_frac` of the
/// global maximum; plain tails and pedestals of neighbouring lines do not
/// count.
pub fn detect_nmax(spec: &Spectrum, kappa: i64, threshold_frac: f64) -> Result<usize> {
    if !(threshold_frac > 0.0 && threshold_frac < 1.0) {
        return Err(Error::InvalidInput(format!(
            "threshold_frac must be in (0, 1), got {threshold_frac}"
        )));
    }
    let x = spec.grid();
    let s = spec.values();
    let global_max = spec.max_value();
    if !(global_max > 0.0) {
        return Err(Error::EmptySpectrum);
    }
    // prominences of all interior local maxima
    let mut peaks: Vec<(f64, f64)> = Vec::new(); // (position, prominence)
    for i in 1..s.len() - 1 {
        if s[i] > s[i - 1] && s[i] >= s[i + 1] {
            let mut j = i;
            while j > 0 && s[j - 1] < s[j] {
                j -= 1;
            }
            let mut k = i;
            while k + 1 < s.len() && s[k + 1] < s[k] {
                k += 1;
            }
            peaks.push((x[i], s[i] - s[j].max(s[k])));
        }
    }
    let mut best = 0;
    let mut n = 1i64;
    while kappa as f64 + n as f64 - PEAK_WINDOW <= *x.last().expect("nonempty") {
        let center = kappa as f64 + n as f64;
        let visible = peaks
            .iter()
            .filter(|&&(pos, _)| (pos - center).abs() <= PEAK_WINDOW)
            .any(|&(_, prom)| prom >= threshold_frac * global_max);
        if visible {
            best = n as usize;
        }
        n += 1;
    }
    Ok(best)
}

/// Result of one occupation fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReadoutResult {
    /// Fitted occupations, normalized to unit sum.
    pub fitted_occupations: Vec<f64>,
    /// Readout error against the true occupations, when known.
    pub delta_read: Option<f64>,
    /// Linearized per-occupation standard deviations (infinite when the
    /// Jacobian is degenerate).
    pub param_sigma: Vec<f64>,
    pub n_max: usize,
    pub model: FitModel,
    pub residual_norm: f64,
    /// Seed of the jitter restart stream.
    pub seed: u64,
    /// Set when the fit had a direction with no model sensitivity.
    pub degenerate: bool,
}

impl ReadoutResult {
    /// Linearized standard deviation of Δ_read, `½ √(Σ σ_i²)`.
    pub fn delta_sigma(&self) -> f64 {
        0.5 * self
            .param_sigma
            .iter()
            .map(|s| s * s)
            .sum::<f64>()
            .sqrt()
    }

    /// Fills `delta_read` from the known true occupations.
    pub fn against_truth(mut self, true_occ: &[f64]) -> Self {
        self.delta_read = Some(readout_error(true_occ, &self.fitted_occupations));
        self
    }
}

fn basis_curves(
    params: &ModelParams,
    model: FitModel,
    n_max: usize,
    grid: &[f64],
) -> Result<Vec<Vec<f64>>> {
    (0..=n_max)
        .map(|i| {
            let mut occ = vec![0.0; i + 1];
            occ[i] = 1.0;
            let curve = match model {
                FitModel::Narrow => {
                    let t = NarrowTerms::new(params, &occ)?;
                    grid.iter().map(|&x| t.value_at(x)).collect()
                }
                FitModel::Full => {
                    let t = SpectralTerms::new(params, &occ)?;
                    grid.iter().map(|&x| t.value_at(x)).collect()
                }
            };
            Ok(curve)
        })
        .collect()
}

/// Fits the occupations `ρ_00..ρ_{n_max,n_max}` (plus the free overall
/// prefactor absorbed into them) to a spectrum by damped least squares.
///
/// Starts from the all-zero weights; since that point is stationary for the
/// squared parametrization, a seeded jitter restart (u ~ 1e-3 uniform) is
/// applied when the zero start stalls.
pub fn fit_occupations(
    spec: &Spectrum,
    params: &ModelParams,
    model: FitModel,
    n_max: usize,
    jitter_seed: u64,
) -> Result<ReadoutResult> {
    let basis = basis_curves(params, model, n_max, spec.grid())?;
    let p = n_max + 1;
    let y = spec.values();
    if y.len() <= p {
        return Err(Error::InvalidInput(format!(
            "{} samples cannot constrain {p} occupations",
            y.len()
        )));
    }
    let mut fit = lm::fit_squared_weights(y, &basis, &vec![0.0; p]);
    if fit.u.iter().all(|&u| u == 0.0) {
        // the documented restart: tiny positive seeds off the stationary point
        let mut stream = GaussianStream::new(jitter_seed);
        let u0: Vec<f64> = (0..p).map(|_| 1e-3 * stream.uniform()).collect();
        fit = lm::fit_squared_weights(y, &basis, &u0);
    }
    let weights: Vec<f64> = fit.u.iter().map(|u| u * u).collect();
    let total: f64 = weights.iter().sum();
    let fitted: Vec<f64> = if total > 0.0 {
        weights.iter().map(|w| w / total).collect()
    } else {
        let mut f = vec![0.0; p];
        f[0] = 1.0;
        f
    };

    // covariance of u from the Gauss-Newton matrix, then linear propagation
    // through w = u² and the normalization
    let dof = (y.len() - p) as f64;
    let s2 = fit.residual_norm * fit.residual_norm / dof;
    let (param_sigma, degenerate) = match lm::invert_spd(&fit.gn_matrix, p) {
        Some(cov) if total > 0.0 => {
            let sigma_w: Vec<f64> = (0..p)
                .map(|i| 2.0 * fit.u[i].abs() * (cov[i * p + i] * s2).max(0.0).sqrt())
                .collect();
            let sig = (0..p)
                .map(|i| {
                    let mut acc = 0.0;
                    for (j, sw) in sigma_w.iter().enumerate() {
                        let d = if i == j {
                            (total - weights[i]) / (total * total)
                        } else {
                            -weights[i] / (total * total)
                        };
                        acc += d * d * sw * sw;
                    }
                    acc.sqrt()
                })
                .collect();
            (sig, false)
        }
        _ => (vec![f64::INFINITY; p], true),
    };

    Ok(ReadoutResult {
        fitted_occupations: fitted,
        delta_read: None,
        param_sigma,
        n_max,
        model,
        residual_norm: fit.residual_norm,
        seed: jitter_seed,
        degenerate,
    })
}

/// Sweep controls beyond the noise settings.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SweepOptions {
    /// Model used to simulate the spectra that are then fitted. The paper's
    /// protocol simulates with the full formula.
    pub sim_model: FitModel,
    /// Skip detection and assume this many visible absorption sidebands.
    pub n_max_override: Option<usize>,
    /// Visibility threshold for `detect_nmax`.
    pub threshold_frac: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            sim_model: FitModel::Full,
            n_max_override: None,
            threshold_frac: 0.01,
        }
    }
}

/// One row of a coupling sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub gamma: f64,
    pub mean_delta_read: f64,
    pub mean_sigma: f64,
    pub n_fail: usize,
}

/// Readout-error sweep over the phonon coupling.
///
/// For each `gamma`: simulate a spectrum from the true state, inject each
/// noise realization, detect (or assume) the number of visible absorption
/// sidebands, fit the occupations, and average the readout error and its
/// fitted uncertainty over the realizations. Fully deterministic given the
/// noise seed; cells are reduced in grid order regardless of scheduling.
pub fn sweep_gamma(
    state: &PhononState,
    params_base: &ModelParams,
    gamma_grid: &[f64],
    noise: &NoiseSpec,
    model: FitModel,
    options: &SweepOptions,
) -> Result<Vec<SweepRow>> {
    if gamma_grid.is_empty() {
        return Err(Error::InvalidInput("empty gamma grid".into()));
    }
    let true_occ = state.occupations();
    let realizations = if noise.percent_of_max == 0.0 {
        1
    } else {
        noise.realizations.max(1)
    };
    let rows: Vec<Result<SweepRow>> = gamma_grid
        .par_iter()
        .enumerate()
        .map(|(gi, &gamma)| {
            let mut params = *params_base;
            params.gamma = num_complex::Complex64::new(gamma, 0.0);
            let clean = match options.sim_model {
                FitModel::Full => {
                    let t = SpectralTerms::new(&params, &true_occ)?;
                    t.evaluate(&t.default_grid())?
                }
                FitModel::Narrow => {
                    let t = NarrowTerms::new(&params, &true_occ)?;
                    t.evaluate(&t.default_grid())?
                }
            };
            let kappa_int = params.kappa.round() as i64;
            let mut deltas = Vec::with_capacity(realizations);
            let mut sigmas = Vec::with_capacity(realizations);
            let mut n_fail = 0usize;
            for r in 0..realizations {
                let seed = cell_seed(noise.seed, gi, r);
                let measured = add_noise(
                    &clean,
                    &NoiseSpec {
                        percent_of_max: noise.percent_of_max,
                        seed,
                        realizations: 1,
                    },
                );
                let outcome = (|| -> Result<(f64, f64)> {
                    let n_max = match options.n_max_override {
                        Some(n) => n,
                        None => detect_nmax(&measured, kappa_int, options.threshold_frac)?,
                    };
                    let fit = fit_occupations(
                        &measured,
                        &params,
                        model,
                        n_max,
                        splitmix64(seed ^ 0xF17),
                    )?
                    .against_truth(&true_occ);
                    Ok((fit.delta_read.expect("set above"), fit.delta_sigma()))
                })();
                match outcome {
                    Ok((d, s)) => {
                        deltas.push(d);
                        sigmas.push(s);
                    }
                    Err(_) => n_fail += 1,
                }
            }
            let mean = |v: &[f64]| {
                if v.is_empty() {
                    f64::NAN
                } else {
                    v.iter().sum::<f64>() / v.len() as f64
                }
            };
            Ok(SweepRow {
                gamma,
                mean_delta_read: mean(&deltas),
                mean_sigma: mean(&sigmas),
                n_fail,
            })
        })
        .collect();
    rows.into_iter().collect()
}
