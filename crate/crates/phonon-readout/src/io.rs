//! File formats: CSV payloads with `#`-prefixed header lines carrying the
//! manifest hash, and JSON manifests embedding the full run configuration
//! so every output is reproducible from its own metadata.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::readout::SweepRow;
use crate::spectrum::{Provenance, Spectrum};
use crate::wigner::WignerGrid;

/// Serializes a value with 17 significant digits, enough to round-trip f64.
fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Manifest skeleton shared by all commands.
#[derive(Debug, Serialize)]
pub struct Manifest<C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: Option<u64>,
    pub config: C,
    pub outputs: Vec<String>,
}

impl<C: Serialize> Manifest<C> {
    pub fn new(command: &str, seed: Option<u64>, config: C) -> Self {
        Self {
            tool: "phonon-readout",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            seed,
            config,
            outputs: Vec::new(),
        }
    }

    pub fn json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    /// Hash over the manifest body (outputs excluded, so payload files can
    /// embed the hash before the manifest itself is finalized).
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.command.as_bytes());
        hasher.update(serde_json::to_vec(&self.config).expect("config serializes"));
        if let Some(s) = self.seed {
            hasher.update(s.to_le_bytes());
        }
        hex_digest(hasher)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.json() + "\n")?;
        Ok(())
    }
}

fn hex_digest(hasher: Sha256) -> String {
    let bytes = hasher.finalize();
    let mut s = String::with_capacity(64);
    for b in bytes {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Writes a spectrum as a two-column CSV with metadata headers.
pub fn write_spectrum_csv(spec: &Spectrum, manifest_hash: &str, path: &Path) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "# phonon-readout spectrum v1");
    let _ = writeln!(out, "# provenance: {}", spec.provenance());
    let _ = writeln!(out, "# manifest_sha256: {manifest_hash}");
    let _ = writeln!(
        out,
        "# params: {}",
        serde_json::to_string(spec.params()).expect("params serialize")
    );
    let _ = writeln!(out, "# columns: x,intensity");
    for (x, v) in spec.grid().iter().zip(spec.values()) {
        let _ = writeln!(out, "{},{}", fmt_f64(*x), fmt_f64(*v));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a spectrum written by [`write_spectrum_csv`].
pub fn read_spectrum_csv(path: &Path) -> Result<Spectrum> {
    let text = fs::read_to_string(path)?;
    let perr = |message: String| Error::Parse {
        path: path.display().to_string(),
        message,
    };
    let mut provenance: Option<Provenance> = None;
    let mut params: Option<ModelParams> = None;
    let mut grid = Vec::new();
    let mut values = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(p) = rest.strip_prefix("provenance:") {
                provenance = Some(
                    serde_json::from_value(serde_json::Value::String(p.trim().to_string()))
                        .map_err(|e| perr(format!("bad provenance: {e}")))?,
                );
            } else if let Some(p) = rest.strip_prefix("params:") {
                params = Some(
                    serde_json::from_str(p.trim())
                        .map_err(|e| perr(format!("bad params: {e}")))?,
                );
            }
            continue;
        }
        let (xs, vs) = line
            .split_once(',')
            .ok_or_else(|| perr(format!("line {}: expected two columns", lineno + 1)))?;
        let x: f64 = xs
            .trim()
            .parse()
            .map_err(|e| perr(format!("line {}: {e}", lineno + 1)))?;
        let v: f64 = vs
            .trim()
            .parse()
            .map_err(|e| perr(format!("line {}: {e}", lineno + 1)))?;
        grid.push(x);
        values.push(v);
    }
    let params = params.ok_or_else(|| perr("missing '# params:' header".into()))?;
    let provenance = provenance.ok_or_else(|| perr("missing '# provenance:' header".into()))?;
    Spectrum::new(grid, values, params, provenance)
}

/// Writes sweep rows as CSV.
pub fn write_sweep_csv(rows: &[SweepRow], manifest_hash: &str, path: &Path) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "# phonon-readout sweep v1");
    let _ = writeln!(out, "# manifest_sha256: {manifest_hash}");
    let _ = writeln!(out, "# columns: gamma,mean_delta_read,mean_sigma,n_fail");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            fmt_f64(r.gamma),
            fmt_f64(r.mean_delta_read),
            fmt_f64(r.mean_sigma),
            r.n_fail
        );
    }
    fs::write(path, out)?;
    Ok(())
}

/// Writes a Wigner matrix plus its two axis files.
///
/// Matrix rows follow the imaginary axis, columns the real axis.
pub fn write_wigner_csv(
    grid: &WignerGrid,
    manifest_hash: &str,
    matrix_path: &Path,
    re_axis_path: &Path,
    im_axis_path: &Path,
) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "# phonon-readout wigner v1");
    let _ = writeln!(out, "# manifest_sha256: {manifest_hash}");
    let _ = writeln!(out, "# rows: im axis, columns: re axis");
    for row in grid.values().rows() {
        let line: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        let _ = writeln!(out, "{}", line.join(","));
    }
    fs::write(matrix_path, out)?;
    for (axis, path, name) in [
        (grid.re_axis(), re_axis_path, "re_alpha"),
        (grid.im_axis(), im_axis_path, "im_alpha"),
    ] {
        let mut out = String::new();
        let _ = writeln!(out, "# phonon-readout wigner axis v1");
        let _ = writeln!(out, "# manifest_sha256: {manifest_hash}");
        let _ = writeln!(out, "# columns: {name}");
        for v in axis {
            let _ = writeln!(out, "{}", fmt_f64(*v));
        }
        fs::write(path, out)?;
    }
    Ok(())
}

/// Output path helper: `<out_dir>/<prefix><suffix>`.
pub fn out_path(out_dir: &Path, prefix: &str, suffix: &str) -> PathBuf {
    out_dir.join(format!("{prefix}{suffix}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64 as C64;

    #[test]
    fn spectrum_round_trips_bit_exactly() {
        let p = ModelParams::new(C64::new(0.5, 0.0), 0.05, 0.05, 0.05, 0.25).unwrap();
        let grid: Vec<f64> = (0..50).map(|i| -1.0 + i as f64 * 0.06180339887498949).collect();
        let values: Vec<f64> = grid.iter().map(|x| (x * 12.9898).sin().abs() * 1e-3).collect();
        let s = Spectrum::new(grid, values, p, Provenance::Full).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("spec.csv");
        write_spectrum_csv(&s, "deadbeef", &path).unwrap();
        let back = read_spectrum_csv(&path).unwrap();
        assert_eq!(back.grid(), s.grid());
        assert_eq!(back.values(), s.values());
        assert_eq!(back.provenance(), s.provenance());
        assert_eq!(back.params().kappa, s.params().kappa);
    }

    #[test]
    fn malformed_csv_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "# phonon-readout spectrum v1\n0.0;1.0\n").unwrap();
        assert!(matches!(
            read_spectrum_csv(&path),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            read_spectrum_csv(Path::new("/nonexistent/file.csv")),
            Err(Error::Io(_))
        ));
    }

    #[test]
    fn manifest_hash_depends_on_config_and_seed() {
        let m1 = Manifest::new("spectrum", Some(1), serde_json::json!({"a": 1}));
        let m2 = Manifest::new("spectrum", Some(2), serde_json::json!({"a": 1}));
        let m3 = Manifest::new("spectrum", Some(1), serde_json::json!({"a": 2}));
        assert_ne!(m1.hash(), m2.hash());
        assert_ne!(m1.hash(), m3.hash());
        assert_eq!(m1.hash(), m1.hash());
    }
}
