use std::fs;
use std::path::{Path, PathBuf};

use mweyl_core::experiments::MinusSeed;
use mweyl_core::{CMatrix, IntervalUnion, PotentialSpec};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// A potential given inline or as a path to a JSON file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpecSource {
    Inline(PotentialSpec),
    Path(PathBuf),
}

impl SpecSource {
    pub fn load(&self, base: &Path) -> Result<PotentialSpec, CliError> {
        match self {
            SpecSource::Inline(s) => Ok(s.clone()),
            SpecSource::Path(p) => {
                let path = if p.is_absolute() { p.clone() } else { base.join(p) };
                let text = fs::read_to_string(&path)
                    .map_err(|e| CliError::Config(format!("cannot read spec {}: {e}", path.display())))?;
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("spec {}: {e}", path.display())))
            }
        }
    }
}

/// Complex square matrix as separate real and imaginary row lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub re: Vec<Vec<f64>>,
    #[serde(default)]
    pub im: Vec<Vec<f64>>,
}

impl MatrixJson {
    pub fn to_matrix(&self) -> Result<CMatrix, CliError> {
        let n = self.re.len();
        let im = if self.im.is_empty() { vec![vec![0.0; n]; n] } else { self.im.clone() };
        if im.len() != n || self.re.iter().chain(&im).any(|r| r.len() != n) {
            return Err(CliError::Config("matrix must be square with matching re/im shapes".into()));
        }
        let rows: Vec<Vec<Complex64>> = self
            .re
            .iter()
            .zip(&im)
            .map(|(r, i)| r.iter().zip(i).map(|(&a, &b)| Complex64::new(a, b)).collect())
            .collect();
        CMatrix::from_rows(&rows).map_err(|e| CliError::Config(e.to_string()))
    }
}

/// Every tunable of every subcommand. Fields absent from both the config
/// file and the command line fall back to per-command defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<SpecSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub site: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<IntervalUnion>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<IntervalUnion>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minus_seed: Option<MinusSeed>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points_per_unit: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z1: Option<MatrixJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z2: Option<MatrixJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))
    }

    /// Canonical JSON with the spec inlined; this is what gets hashed.
    pub fn canonical(&self, spec: Option<&PotentialSpec>) -> String {
        let mut c = self.clone();
        if let Some(s) = spec {
            c.spec = Some(SpecSource::Inline(s.clone()));
        }
        serde_json::to_string(&c).expect("config serializes")
    }
}

/// Parse `a+bi`, `a-bi`, `bi`, `a`, with `j` accepted for `i`.
pub fn parse_complex(text: &str) -> Result<Complex64, CliError> {
    let bad = || CliError::Config(format!("cannot parse complex number '{text}'"));
    let t: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    if t.is_empty() {
        return Err(bad());
    }
    let Some(body) = t.strip_suffix('i').or_else(|| t.strip_suffix('j')) else {
        return t.parse::<f64>().map(|x| Complex64::new(x, 0.0)).map_err(|_| bad());
    };
    // Split at the last sign that is not part of an exponent or the leading sign.
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let (re, im) = match split {
        Some(k) => (&body[..k], &body[k..]),
        None => ("0", body),
    };
    let im = match im {
        "" | "+" => "1",
        "-" => "-1",
        s => s,
    };
    let re: f64 = re.parse().map_err(|_| bad())?;
    let im: f64 = im.parse().map_err(|_| bad())?;
    Ok(Complex64::new(re, im))
}

/// `lo:hi` pieces separated by commas; `inf` and `-inf` allowed.
pub fn parse_intervals(text: &str) -> Result<IntervalUnion, CliError> {
    let pieces = text
        .split(',')
        .map(|p| {
            let (lo, hi) = p
                .split_once(':')
                .ok_or_else(|| CliError::Config(format!("interval '{p}' must look like lo:hi")))?;
            let num = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::Config(format!("bad interval endpoint '{s}'")))
            };
            Ok((num(lo)?, num(hi)?))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    IntervalUnion::new(pieces).map_err(|e| CliError::Config(e.to_string()))
}
