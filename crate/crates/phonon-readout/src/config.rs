//! Run configuration: a flat TOML document with one section per concern.
//! Unknown keys are rejected so that typos fail loudly.

use std::path::Path;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    coherent_state_occupations, fock_superposition_state, ModelParams, PhononState,
};
use crate::readout::FitModel;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Optional command echo; when present it must match the subcommand.
    pub command: Option<String>,
    pub model: ModelSection,
    pub state: Option<StateSection>,
    pub grid: Option<GridSection>,
    pub spectrum: Option<SpectrumSection>,
    pub noise: Option<NoiseSection>,
    pub fit: Option<FitSection>,
    pub sweep: Option<SweepSection>,
    pub wigner: Option<WignerSection>,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub gamma: f64,
    #[serde(default)]
    pub gamma_im: f64,
    pub gamma_pd: f64,
    pub gamma_xd: f64,
    pub gamma_det: f64,
    pub kappa: f64,
    #[serde(default = "one")]
    pub drive_scale: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSection {
    /// Fock amplitudes of a pure superposition state.
    pub fock_amplitudes: Option<Vec<f64>>,
    pub fock_amplitudes_im: Option<Vec<f64>>,
    /// Diagonal occupations.
    pub occupations: Option<Vec<f64>>,
    /// Coherent-state amplitude (occupations only).
    pub coherent_alpha: Option<f64>,
    pub coherent_alpha_im: Option<f64>,
    pub coherent_cutoff: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub x_min: f64,
    pub x_max: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSection {
    /// full | narrow | semiclassical | oracle
    pub model: String,
    /// Strain shift D for the semiclassical model.
    pub d_shift: Option<f64>,
    /// Oracle drive amplitude; defaults to 0.02.
    pub epsilon0: Option<f64>,
    /// Oracle phonon cutoff; defaults to a coupling-based choice.
    pub oracle_cutoff: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub percent_of_max: f64,
    pub seed: u64,
    #[serde(default = "fifty")]
    pub realizations: usize,
}

fn fifty() -> usize {
    50
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    pub spectrum_file: String,
    /// narrow | full
    pub model: String,
    /// Skip detection and use this sideband count.
    pub n_max: Option<usize>,
    #[serde(default = "default_threshold")]
    pub threshold_frac: f64,
    /// When given, the manifest reports the readout error against these.
    pub true_occupations: Option<Vec<f64>>,
}

fn default_threshold() -> f64 {
    0.01
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub gamma_step: f64,
    /// narrow | full
    pub fit_model: String,
    /// Model generating the fitted spectra; defaults to full (the measured
    /// situation). `narrow` turns the sweep into a same-model readout study.
    pub sim_model: Option<String>,
    pub n_max: Option<usize>,
    #[serde(default = "default_threshold")]
    pub threshold_frac: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WignerSection {
    /// state | excited
    pub target: String,
    #[serde(default)]
    pub phase_time: f64,
    /// Half-extent of the square grid; defaults to 4 + |gamma|.
    pub half_extent: Option<f64>,
    #[serde(default = "default_points")]
    pub points: usize,
}

fn default_points() -> usize {
    101
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub prefix: String,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.params()?;
        if let Some(g) = &self.grid {
            if g.samples < 2 || !(g.x_min < g.x_max) {
                return Err(Error::Config("grid needs x_min < x_max and >= 2 samples".into()));
            }
        }
        if self.output.prefix.is_empty()
            || self.output.prefix.contains('/')
            || self.output.prefix.contains("..")
        {
            return Err(Error::Config("output.prefix must be a bare file prefix".into()));
        }
        Ok(())
    }

    pub fn params(&self) -> Result<ModelParams> {
        let m = &self.model;
        ModelParams::new(
            C64::new(m.gamma, m.gamma_im),
            m.gamma_pd,
            m.gamma_xd,
            m.gamma_det,
            m.kappa,
        )
        .and_then(|p| p.with_drive_scale(m.drive_scale))
        .map_err(|e| Error::Config(e.to_string()))
    }

    /// Builds the initial phonon state from the `[state]` section.
    pub fn state(&self) -> Result<PhononState> {
        let s = self
            .state
            .as_ref()
            .ok_or_else(|| Error::Config("missing [state] section".into()))?;
        let chosen = [
            s.fock_amplitudes.is_some(),
            s.occupations.is_some(),
            s.coherent_alpha.is_some(),
        ]
        .iter()
        .filter(|&&b| b)
        .count();
        if chosen != 1 {
            return Err(Error::Config(
                "state needs exactly one of fock_amplitudes, occupations, coherent_alpha".into(),
            ));
        }
        if let Some(re) = &s.fock_amplitudes {
            let im = s
                .fock_amplitudes_im
                .clone()
                .unwrap_or_else(|| vec![0.0; re.len()]);
            if im.len() != re.len() {
                return Err(Error::Config(
                    "fock_amplitudes_im length mismatch".into(),
                ));
            }
            let amps: Vec<C64> = re.iter().zip(&im).map(|(&r, &i)| C64::new(r, i)).collect();
            return fock_superposition_state(&amps).map_err(|e| Error::Config(e.to_string()));
        }
        if let Some(occ) = &s.occupations {
            let total: f64 = occ.iter().sum();
            if total <= 0.0 {
                return Err(Error::Config("occupations sum to zero".into()));
            }
            let norm: Vec<f64> = occ.iter().map(|p| p / total).collect();
            return PhononState::from_occupations(&norm).map_err(|e| Error::Config(e.to_string()));
        }
        let alpha = C64::new(
            s.coherent_alpha.expect("checked above"),
            s.coherent_alpha_im.unwrap_or(0.0),
        );
        let cutoff = s.coherent_cutoff.unwrap_or_else(|| {
            (alpha.norm_sqr() + 10.0 * alpha.norm() + 10.0).ceil() as usize
        });
        let occ =
            coherent_state_occupations(alpha, cutoff).map_err(|e| Error::Config(e.to_string()))?;
        PhononState::from_occupations(&occ).map_err(|e| Error::Config(e.to_string()))
    }

    /// Explicit grid from the `[grid]` section, when present.
    pub fn explicit_grid(&self) -> Option<Vec<f64>> {
        self.grid.as_ref().map(|g| {
            (0..g.samples)
                .map(|i| g.x_min + (g.x_max - g.x_min) * i as f64 / (g.samples - 1) as f64)
                .collect()
        })
    }
}

pub fn parse_fit_model(name: &str) -> Result<FitModel> {
    match name {
        "narrow" => Ok(FitModel::Narrow),
        "full" => Ok(FitModel::Full),
        other => Err(Error::Config(format!(
            "unknown fit model '{other}' (use narrow|full)"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [model]
        gamma = 0.5
        gamma_pd = 0.05
        gamma_xd = 0.05
        gamma_det = 0.05
        kappa = 0.0

        [state]
        occupations = [0.5, 0.5]

        [output]
        prefix = "demo"
    "#;

    #[test]
    fn minimal_config_parses() {
        let cfg: RunConfig = toml::from_str(MINIMAL).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.state().unwrap().occupations(), vec![0.5, 0.5]);
        assert_eq!(cfg.params().unwrap().gamma.re, 0.5);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = MINIMAL.replace("[output]", "typo_key = 1\n[output]");
        assert!(toml::from_str::<RunConfig>(&bad).is_err());
    }

    #[test]
    fn state_must_be_unique() {
        let bad = MINIMAL.replace(
            "occupations = [0.5, 0.5]",
            "occupations = [0.5, 0.5]\nfock_amplitudes = [1.0]",
        );
        let cfg: RunConfig = toml::from_str(&bad).unwrap();
        assert!(cfg.state().is_err());
    }

    #[test]
    fn coherent_state_section() {
        let text = MINIMAL.replace(
            "occupations = [0.5, 0.5]",
            "coherent_alpha = 1.0",
        );
        let cfg: RunConfig = toml::from_str(&text).unwrap();
        let s = cfg.state().unwrap();
        assert!((s.occupations()[0] - (-1.0f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn bad_prefix_rejected() {
        let bad = MINIMAL.replace("prefix = \"demo\"", "prefix = \"../escape\"");
        let cfg: RunConfig = toml::from_str(&bad).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
