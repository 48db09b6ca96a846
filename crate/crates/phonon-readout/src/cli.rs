//! Command implementations behind the `phonon-readout` binary. Each command
//! reads one TOML config, writes CSV payloads plus a JSON manifest, and
//! returns the list of files it produced.

use std::path::{Path, PathBuf};

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::analytic::{
    avg_correlation, rf_spectrum_semiclassical, semiclassical_terms, NarrowTerms, SpectralTerms,
};
use crate::config::{parse_fit_model, RunConfig};
use crate::error::{Error, Result};
use crate::io;
use crate::lindblad::{spectrum_numeric, time_avg_correlation_numeric, TruncatedSystem};
use crate::model::ModelParams;
use crate::readout::{
    add_noise, detect_nmax, fit_occupations, sweep_gamma, NoiseSpec, ReadoutResult, SweepOptions,
};
use crate::spectrum::Spectrum;
use crate::wigner::{default_axes, wigner_excited, wigner_of_matrix};

/// Default oracle truncation: occupied states plus coupling-dependent
/// headroom for the displaced excited-state manifold.
pub fn default_oracle_cutoff(params: &ModelParams, n_occ_max: usize) -> usize {
    let g = params.gamma.norm();
    n_occ_max + (4.0 * g * g + 6.0 * g + 8.0).ceil() as usize
}

fn ensure_out_dir(out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    Ok(())
}

/// `spectrum` command: simulate one spectrum with the selected model and
/// optional measurement noise.
pub fn run_spectrum(
    cfg: &RunConfig,
    out_dir: &Path,
    seed_override: Option<u64>,
) -> Result<Vec<PathBuf>> {
    ensure_out_dir(out_dir)?;
    let params = cfg.params()?;
    let section = cfg
        .spectrum
        .as_ref()
        .ok_or_else(|| Error::Config("missing [spectrum] section".into()))?;
    let spec = match section.model.as_str() {
        "full" => {
            let state = cfg.state()?;
            let terms = SpectralTerms::new(&params, &state.occupations())?;
            let grid = cfg.explicit_grid().unwrap_or_else(|| terms.default_grid());
            terms.evaluate(&grid)?
        }
        "narrow" => {
            let state = cfg.state()?;
            let terms = NarrowTerms::new(&params, &state.occupations())?;
            let grid = cfg.explicit_grid().unwrap_or_else(|| terms.default_grid());
            terms.evaluate(&grid)?
        }
        "semiclassical" => {
            let d = section
                .d_shift
                .ok_or_else(|| Error::Config("semiclassical model needs d_shift".into()))?;
            let grid = cfg
                .explicit_grid()
                .unwrap_or_else(|| semiclassical_terms(&params, d).map(|t| t.default_grid())
                    .unwrap_or_default());
            rf_spectrum_semiclassical(&params, d, &grid)?
        }
        "oracle" => {
            let state = cfg.state()?;
            let cutoff = section
                .oracle_cutoff
                .unwrap_or_else(|| default_oracle_cutoff(&params, state.max_occupied(1e-12)));
            let sys = TruncatedSystem::new(&params, cutoff, section.epsilon0.unwrap_or(0.02))?;
            let grid = cfg.explicit_grid().unwrap_or_else(|| {
                SpectralTerms::new(&params, &state.occupations())
                    .map(|t| t.default_grid())
                    .unwrap_or_default()
            });
            spectrum_numeric(&sys, state.matrix(), params.gamma_det, &grid)?
        }
        other => {
            return Err(Error::Config(format!(
                "unknown spectrum model '{other}' (use full|narrow|semiclassical|oracle)"
            )))
        }
    };
    let (spec, seed) = match (&cfg.noise, seed_override) {
        (Some(n), _) if n.percent_of_max > 0.0 => {
            let seed = seed_override.unwrap_or(n.seed);
            (
                add_noise(
                    &spec,
                    &NoiseSpec {
                        percent_of_max: n.percent_of_max,
                        seed,
                        realizations: 1,
                    },
                ),
                Some(seed),
            )
        }
        _ => (spec, seed_override),
    };
    let mut manifest = io::Manifest::new("spectrum", seed, cfg.clone());
    let hash = manifest.hash();
    let csv = io::out_path(out_dir, &cfg.output.prefix, ".csv");
    io::write_spectrum_csv(&spec, &hash, &csv)?;
    let mpath = io::out_path(out_dir, &cfg.output.prefix, "_manifest.json");
    manifest.outputs = vec![csv.display().to_string()];
    manifest.write(&mpath)?;
    Ok(vec![csv, mpath])
}

#[derive(Serialize)]
struct FitReport<'a> {
    result: &'a ReadoutResult,
    detected_n_max: Option<usize>,
    spectrum_file: String,
}

/// `fit` command: read a spectrum file, detect the sideband count unless
/// overridden, fit the occupations, and write the readout manifest.
pub fn run_fit(cfg: &RunConfig, out_dir: &Path, seed_override: Option<u64>) -> Result<Vec<PathBuf>> {
    ensure_out_dir(out_dir)?;
    let params = cfg.params()?;
    let section = cfg
        .fit
        .as_ref()
        .ok_or_else(|| Error::Config("missing [fit] section".into()))?;
    let model = parse_fit_model(&section.model)?;
    let spec = io::read_spectrum_csv(Path::new(&section.spectrum_file))?;
    let kappa_int = params.kappa.round() as i64;
    let (n_max, detected) = match section.n_max {
        Some(n) => (n, None),
        None => {
            let n = detect_nmax(&spec, kappa_int, section.threshold_frac)?;
            (n, Some(n))
        }
    };
    let seed = seed_override.unwrap_or(0xDEFA017);
    let mut result = fit_occupations(&spec, &params, model, n_max, seed)?;
    if let Some(truth) = &section.true_occupations {
        let total: f64 = truth.iter().sum();
        let norm: Vec<f64> = truth.iter().map(|p| p / total).collect();
        result = result.against_truth(&norm);
    }
    let mut manifest = io::Manifest::new("fit", Some(seed), cfg.clone());
    let hash = manifest.hash();
    let report = FitReport {
        result: &result,
        detected_n_max: detected,
        spectrum_file: section.spectrum_file.clone(),
    };
    let rpath = io::out_path(out_dir, &cfg.output.prefix, "_readout.json");
    let body = serde_json::json!({
        "manifest_sha256": hash,
        "report": serde_json::to_value(&report).expect("report serializes"),
    });
    std::fs::write(&rpath, serde_json::to_string_pretty(&body).expect("json") + "\n")?;
    let mpath = io::out_path(out_dir, &cfg.output.prefix, "_manifest.json");
    manifest.outputs = vec![rpath.display().to_string()];
    manifest.write(&mpath)?;
    Ok(vec![rpath, mpath])
}

/// `sweep` command: readout error across a coupling grid.
pub fn run_sweep(
    cfg: &RunConfig,
    out_dir: &Path,
    seed_override: Option<u64>,
) -> Result<Vec<PathBuf>> {
    ensure_out_dir(out_dir)?;
    let params = cfg.params()?;
    let state = cfg.state()?;
    let section = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("missing [sweep] section".into()))?;
    if !(section.gamma_step > 0.0 && section.gamma_max >= section.gamma_min) {
        return Err(Error::Config("bad gamma grid in [sweep]".into()));
    }
    let n = ((section.gamma_max - section.gamma_min) / section.gamma_step + 1.5).floor() as usize;
    let grid: Vec<f64> = (0..n)
        .map(|i| section.gamma_min + i as f64 * section.gamma_step)
        .filter(|&g| g <= section.gamma_max + 1e-12)
        .collect();
    let fit_model = parse_fit_model(&section.fit_model)?;
    let sim_model = match &section.sim_model {
        Some(name) => parse_fit_model(name)?,
        None => crate::readout::FitModel::Full,
    };
    let mut noise = match &cfg.noise {
        Some(nz) => NoiseSpec {
            percent_of_max: nz.percent_of_max,
            seed: nz.seed,
            realizations: nz.realizations,
        },
        None => NoiseSpec::clean(0),
    };
    if let Some(seed) = seed_override {
        noise.seed = seed;
    }
    let options = SweepOptions {
        sim_model,
        n_max_override: section.n_max,
        threshold_frac: section.threshold_frac,
    };
    let rows = sweep_gamma(&state, &params, &grid, &noise, fit_model, &options)?;
    let mut manifest = io::Manifest::new("sweep", Some(noise.seed), cfg.clone());
    let hash = manifest.hash();
    let csv = io::out_path(out_dir, &cfg.output.prefix, ".csv");
    io::write_sweep_csv(&rows, &hash, &csv)?;
    let mpath = io::out_path(out_dir, &cfg.output.prefix, "_manifest.json");
    manifest.outputs = vec![csv.display().to_string()];
    manifest.write(&mpath)?;
    Ok(vec![csv, mpath])
}

/// `wigner` command: phase-space distribution of the initial state or of
/// the excited-state phonon density matrix.
pub fn run_wigner(
    cfg: &RunConfig,
    out_dir: &Path,
    _seed_override: Option<u64>,
) -> Result<Vec<PathBuf>> {
    ensure_out_dir(out_dir)?;
    let params = cfg.params()?;
    let state = cfg.state()?;
    let section = cfg
        .wigner
        .as_ref()
        .ok_or_else(|| Error::Config("missing [wigner] section".into()))?;
    let (re_axis, im_axis) = match section.half_extent {
        Some(h) => {
            if !(h > 0.0) || section.points < 2 {
                return Err(Error::Config("wigner grid needs half_extent > 0, points >= 2".into()));
            }
            let n = section.points;
            let axis: Vec<f64> = (0..n)
                .map(|i| -h + 2.0 * h * i as f64 / (n - 1) as f64)
                .collect();
            (axis.clone(), axis)
        }
        None => default_axes(params.gamma.norm()),
    };
    let grid = match section.target.as_str() {
        "state" => wigner_of_matrix(state.matrix(), &re_axis, &im_axis)?,
        "excited" => wigner_excited(&params, state.matrix(), section.phase_time, &re_axis, &im_axis)?,
        other => {
            return Err(Error::Config(format!(
                "unknown wigner target '{other}' (use state|excited)"
            )))
        }
    };
    let mut manifest = io::Manifest::new("wigner", None, cfg.clone());
    let hash = manifest.hash();
    let matrix = io::out_path(out_dir, &cfg.output.prefix, "_wigner.csv");
    let re_path = io::out_path(out_dir, &cfg.output.prefix, "_re_axis.csv");
    let im_path = io::out_path(out_dir, &cfg.output.prefix, "_im_axis.csv");
    io::write_wigner_csv(&grid, &hash, &matrix, &re_path, &im_path)?;
    let mpath = io::out_path(out_dir, &cfg.output.prefix, "_manifest.json");
    manifest.outputs = vec![
        matrix.display().to_string(),
        re_path.display().to_string(),
        im_path.display().to_string(),
    ];
    manifest.write(&mpath)?;
    Ok(vec![matrix, re_path, im_path, mpath])
}

#[derive(Debug, Serialize)]
pub struct OracleCheck {
    pub name: &'static str,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// The oracle-vs-analytic comparison suite behind `oracle-check`.
///
/// All tolerances are fixed here; the command exits nonzero if any check
/// fails. Runtime is dominated by the resonant-superposition spectrum.
pub fn oracle_check_suite() -> Result<Vec<OracleCheck>> {
    let mut checks = Vec::new();

    // 1) time-averaged correlation, off-resonant drive on a vacuum
    {
        let params = ModelParams::new(C64::new(0.8, 0.0), 0.2, 0.2, 0.05, 0.5)?
            .with_drive_scale(0.005f64.powi(2) / 4.0)?;
        let sys = TruncatedSystem::new(&params, 12, 0.005)?;
        let mut vac = ndarray::Array2::zeros((1, 1));
        vac[(0, 0)] = C64::new(1.0, 0.0);
        let taus = [0.0, 1.0, 5.0];
        let oracle = time_avg_correlation_numeric(&sys, &vac, 1, &taus)?;
        let mut worst = 0.0f64;
        for (g_o, &tau) in oracle.iter().zip(&taus) {
            let g_a = avg_correlation(&params, &[1.0], tau)?;
            worst = worst.max((g_o - g_a).norm() / g_a.norm());
        }
        checks.push(OracleCheck {
            name: "avg_correlation_offresonant_vacuum",
            max_deviation: worst,
            tolerance: 1e-3,
            pass: worst <= 1e-3,
        });
    }

    // 2) resonant superposition spectrum, peak-normalized
    {
        let params = ModelParams::new(C64::new(0.5, 0.0), 0.05, 0.05, 0.05, 0.0)?;
        let occ = [0.5, 0.5];
        let terms = SpectralTerms::new(&params, &occ)?;
        let grid = terms.default_grid();
        let analytic = terms.evaluate(&grid)?;
        let sys = TruncatedSystem::new(&params, 14, 0.02)?;
        let state = crate::model::fock_superposition_state(&[
            C64::new(1.0, 0.0),
            C64::new(1.0, 0.0),
        ])?;
        let oracle = spectrum_numeric(&sys, state.matrix(), params.gamma_det, &grid)?;
        let worst = peak_normalized_deviation(&analytic, &oracle);
        checks.push(OracleCheck {
            name: "spectrum_resonant_superposition",
            max_deviation: worst,
            tolerance: 2e-2,
            pass: worst <= 2e-2,
        });
    }

    // 3) decoupled phonons: single detector-limited line at the laser
    {
        let params = ModelParams::new(C64::new(0.0, 0.0), 0.1, 0.1, 0.1, 0.3)?;
        let occ = [1.0];
        let terms = SpectralTerms::new(&params, &occ)?;
        let grid = terms.default_grid();
        let analytic = terms.evaluate(&grid)?;
        let sys = TruncatedSystem::new(&params, 2, 0.02)?;
        let mut vac = ndarray::Array2::zeros((1, 1));
        vac[(0, 0)] = C64::new(1.0, 0.0);
        let oracle = spectrum_numeric(&sys, &vac, params.gamma_det, &grid)?;
        let worst = peak_normalized_deviation(&analytic, &oracle);
        checks.push(OracleCheck {
            name: "spectrum_decoupled_single_line",
            max_deviation: worst,
            tolerance: 1e-2,
            pass: worst <= 1e-2,
        });
    }

    // 4) second-order scaling: halving the drive quarters the spectrum
    {
        let params = ModelParams::new(C64::new(0.5, 0.0), 0.2, 0.2, 0.2, 0.0)?;
        let state = crate::model::fock_superposition_state(&[
            C64::new(1.0, 0.0),
            C64::new(1.0, 0.0),
        ])?;
        let grid: Vec<f64> = (0..161).map(|i| -3.0 + i as f64 * 0.025).collect();
        let s1 = spectrum_numeric(
            &TruncatedSystem::new(&params, 12, 0.02)?,
            state.matrix(),
            params.gamma_det,
            &grid,
        )?;
        let s2 = spectrum_numeric(
            &TruncatedSystem::new(&params, 12, 0.01)?,
            state.matrix(),
            params.gamma_det,
            &grid,
        )?;
        let ratio_peak = s1.max_value() / s2.max_value();
        let ratio_area = s1.integral() / s2.integral();
        let worst = ((ratio_peak / 4.0) - 1.0).abs().max(((ratio_area / 4.0) - 1.0).abs());
        checks.push(OracleCheck {
            name: "weak_drive_quadratic_scaling",
            max_deviation: worst,
            tolerance: 1e-2,
            pass: worst <= 1e-2,
        });
    }

    Ok(checks)
}

/// Max pointwise deviation between two spectra after each is normalized to
/// its own peak.
pub fn peak_normalized_deviation(a: &Spectrum, b: &Spectrum) -> f64 {
    let ma = a.max_value();
    let mb = b.max_value();
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x / ma - y / mb).abs())
        .fold(0.0, f64::max)
}

/// Writes the oracle-check report files and converts any failed check into
/// a tolerance error.
pub fn write_oracle_report(
    cfg: &RunConfig,
    out_dir: &Path,
    checks: &[OracleCheck],
) -> Result<Vec<PathBuf>> {
    ensure_out_dir(out_dir)?;
    let mut manifest = io::Manifest::new("oracle-check", None, cfg.clone());
    let hash = manifest.hash();
    let rpath = io::out_path(out_dir, &cfg.output.prefix, "_oracle_check.json");
    let body = serde_json::json!({
        "manifest_sha256": hash,
        "checks": checks,
    });
    std::fs::write(&rpath, serde_json::to_string_pretty(&body).expect("json") + "\n")?;
    let mpath = io::out_path(out_dir, &cfg.output.prefix, "_manifest.json");
    manifest.outputs = vec![rpath.display().to_string()];
    manifest.write(&mpath)?;
    if let Some(bad) = checks.iter().find(|c| !c.pass) {
        return Err(Error::Tolerance(format!(
            "{}: deviation {:.3e} exceeds {:.1e} (report: {})",
            bad.name,
            bad.max_deviation,
            bad.tolerance,
            rpath.display()
        )));
    }
    Ok(vec![rpath, mpath])
}

/// `oracle-check` command; exit code 0 only when every comparison meets its
/// tolerance.
pub fn run_oracle_check(
    cfg: &RunConfig,
    out_dir: &Path,
    _seed_override: Option<u64>,
) -> Result<Vec<PathBuf>> {
    let checks = oracle_check_suite()?;
    write_oracle_report(cfg, out_dir, &checks)
}
