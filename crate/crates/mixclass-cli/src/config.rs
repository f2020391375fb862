//! TOML experiment configuration and the small pattern DSL for means and
//! covariances.
//!
//! A config names a model through patterns rather than literal matrices:
//! `mu = "ones" | "unit:K" | "block:A,B"` optionally rescaled, and
//! `cov = "identity" | "scaled:C" | "toeplitz:RHO" | "rank1:BASE,COEFF" |
//! "file:PATH"`. Explicit covariances loaded from CSV are symmetrized; the
//! loader records whether that changed anything so callers can report it.

use std::fmt;
use std::path::{Path, PathBuf};

use mixclass::{builtin_loss, LossSpec, MixtureModel, ModelError, NoiseLaw};
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid TOML: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unknown noise law {0:?} (expected gaussian, rademacher, or uniform)")]
    UnknownNoise(String),
    #[error("unknown loss {0:?}")]
    UnknownLoss(String),
    #[error("bad {what} pattern {pattern:?}: {reason}")]
    BadPattern {
        what: &'static str,
        pattern: String,
        reason: String,
    },
    #[error("mu_scale and mu_norm2 are mutually exclusive")]
    ConflictingScales,
    #[error("mu_norm2 requires a nonzero mu pattern")]
    UnscalableMean,
    #[error("{0} grid is empty")]
    EmptyGrid(&'static str),
    #[error("lambda must be nonnegative, got {0}")]
    NegativeLambda(f64),
    #[error("sample size must be positive")]
    ZeroSampleSize,
    #[error("replications must be at least 1")]
    ZeroReplications,
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("covariance file {path}: {reason}")]
    BadCovarianceFile { path: PathBuf, reason: String },
    #[error("covariance is not positive definite (eigenvalue {0:.3e})")]
    NotPositiveDefinite(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: RawModel,
    data: RawData,
    fit: RawFit,
    run: RawRun,
    output: RawOutput,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    p: usize,
    mu: String,
    #[serde(default)]
    mu_scale: Option<f64>,
    #[serde(default)]
    mu_norm2: Option<f64>,
    cov: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawData {
    noise: String,
    n: Vec<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFit {
    losses: Vec<String>,
    lambda: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    replications: usize,
    base_seed: u64,
    #[serde(default)]
    measure_time: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    csv: PathBuf,
    #[serde(default)]
    plot: Option<PathBuf>,
    #[serde(default)]
    histogram_bins: Option<usize>,
}

/// A validated experiment description, ready to run.
pub struct Experiment {
    pub model: MixtureModel,
    pub noise: NoiseLaw,
    pub losses: Vec<LossSpec>,
    pub lambdas: Vec<f64>,
    pub ns: Vec<usize>,
    pub replications: usize,
    pub base_seed: u64,
    /// Fill the `ms` column with wall time instead of 0 (breaks byte-identity
    /// of repeated runs, so it is opt-in).
    pub measure_time: bool,
    pub csv_path: PathBuf,
    pub plot_path: Option<PathBuf>,
    pub histogram_bins: usize,
    /// True when an explicit covariance was asymmetric and got replaced by
    /// its symmetric part.
    pub symmetrized: bool,
}

impl fmt::Debug for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Experiment")
            .field("p", &self.model.p())
            .field("noise", &self.noise.name())
            .field(
                "losses",
                &self.losses.iter().map(|l| l.name()).collect::<Vec<_>>(),
            )
            .field("lambdas", &self.lambdas)
            .field("ns", &self.ns)
            .field("replications", &self.replications)
            .field("base_seed", &self.base_seed)
            .finish_non_exhaustive()
    }
}

impl Experiment {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Parses and validates a config; `base_dir` anchors relative file paths.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text)?;

        if raw.model.p == 0 {
            return Err(ConfigError::ZeroDimension);
        }
        let noise = NoiseLaw::parse(&raw.data.noise)
            .ok_or_else(|| ConfigError::UnknownNoise(raw.data.noise.clone()))?;
        if raw.fit.losses.is_empty() {
            return Err(ConfigError::EmptyGrid("loss"));
        }
        let losses = raw
            .fit
            .losses
            .iter()
            .map(|name| builtin_loss(name).map_err(|_| ConfigError::UnknownLoss(name.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        if raw.fit.lambda.is_empty() {
            return Err(ConfigError::EmptyGrid("lambda"));
        }
        if let Some(&bad) = raw.fit.lambda.iter().find(|&&l| !(l >= 0.0)) {
            return Err(ConfigError::NegativeLambda(bad));
        }
        if raw.data.n.is_empty() {
            return Err(ConfigError::EmptyGrid("n"));
        }
        if raw.data.n.contains(&0) {
            return Err(ConfigError::ZeroSampleSize);
        }
        if raw.run.replications == 0 {
            return Err(ConfigError::ZeroReplications);
        }

        let mu = build_mean(
            &raw.model.mu,
            raw.model.p,
            raw.model.mu_scale,
            raw.model.mu_norm2,
        )?;
        let (eigvecs, eigvals_sqrt, symmetrized) =
            build_covariance(&raw.model.cov, raw.model.p, base_dir)?;
        let model = MixtureModel::new(mu, eigvecs, eigvals_sqrt)?;

        Ok(Experiment {
            model,
            noise,
            losses,
            lambdas: raw.fit.lambda,
            ns: raw.data.n,
            replications: raw.run.replications,
            base_seed: raw.run.base_seed,
            measure_time: raw.run.measure_time,
            csv_path: raw.output.csv,
            plot_path: raw.output.plot,
            histogram_bins: raw.output.histogram_bins.unwrap_or(40),
            symmetrized,
        })
    }
}

fn bad_pattern(what: &'static str, pattern: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::BadPattern {
        what,
        pattern: pattern.to_string(),
        reason: reason.into(),
    }
}

/// `ones`, `unit:K` (1-based coordinate K), or `block:A,B` (A on the first
/// half, B on the second, odd middle index joining the first half).
fn build_mean(
    pattern: &str,
    p: usize,
    scale: Option<f64>,
    norm2: Option<f64>,
) -> Result<DVector<f64>, ConfigError> {
    let mut mu = if pattern == "ones" {
        DVector::from_element(p, 1.0)
    } else if let Some(arg) = pattern.strip_prefix("unit:") {
        let k: usize = arg
            .parse()
            .map_err(|_| bad_pattern("mu", pattern, "coordinate must be an integer"))?;
        if k == 0 || k > p {
            return Err(bad_pattern(
                "mu",
                pattern,
                format!("coordinate out of 1..={p}"),
            ));
        }
        let mut v = DVector::zeros(p);
        v[k - 1] = 1.0;
        v
    } else if let Some(args) = pattern.strip_prefix("block:") {
        let (a, b) = parse_two_floats(args)
            .ok_or_else(|| bad_pattern("mu", pattern, "expected block:A,B"))?;
        let half = p.div_ceil(2);
        DVector::from_fn(p, |i, _| if i < half { a } else { b })
    } else {
        return Err(bad_pattern("mu", pattern, "unknown pattern"));
    };

    match (scale, norm2) {
        (Some(_), Some(_)) => return Err(ConfigError::ConflictingScales),
        (Some(s), None) => mu *= s,
        (None, Some(t)) => {
            if !(t > 0.0) {
                return Err(bad_pattern("mu", pattern, "mu_norm2 must be positive"));
            }
            let norm = mu.norm();
            if norm == 0.0 {
                return Err(ConfigError::UnscalableMean);
            }
            mu *= (t / (norm * norm)).sqrt();
        }
        (None, None) => {}
    }
    Ok(mu)
}

fn parse_two_floats(args: &str) -> Option<(f64, f64)> {
    let (a, b) = args.split_once(',')?;
    Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
}

/// Returns `(eigenvectors, sqrt eigenvalues, symmetrized)` for a covariance
/// pattern. Patterns with known spectra skip the dense eigendecomposition.
fn build_covariance(
    pattern: &str,
    p: usize,
    base_dir: &Path,
) -> Result<(DMatrix<f64>, DVector<f64>, bool), ConfigError> {
    if pattern == "identity" {
        return Ok((
            DMatrix::identity(p, p),
            DVector::from_element(p, 1.0),
            false,
        ));
    }
    if let Some(arg) = pattern.strip_prefix("scaled:") {
        let c: f64 = arg
            .parse()
            .map_err(|_| bad_pattern("cov", pattern, "scale must be a number"))?;
        if !(c > 0.0) {
            return Err(bad_pattern("cov", pattern, "scale must be positive"));
        }
        return Ok((
            DMatrix::identity(p, p),
            DVector::from_element(p, c.sqrt()),
            false,
        ));
    }
    if let Some(arg) = pattern.strip_prefix("toeplitz:") {
        let rho: f64 = arg
            .parse()
            .map_err(|_| bad_pattern("cov", pattern, "rho must be a number"))?;
        if !(rho.abs() < 1.0) {
            return Err(bad_pattern("cov", pattern, "need |rho| < 1"));
        }
        let c = DMatrix::from_fn(p, p, |i, j| rho.powi((i as i32 - j as i32).abs()));
        let (vecs, vals_sqrt) = eigendecompose(c)?;
        return Ok((vecs, vals_sqrt, false));
    }
    if let Some(args) = pattern.strip_prefix("rank1:") {
        // base*I + (coeff/p) * v v^T with v the second-half indicator.
        let (base, coeff) = parse_two_floats(args)
            .ok_or_else(|| bad_pattern("cov", pattern, "expected rank1:BASE,COEFF"))?;
        if !(base > 0.0) {
            return Err(bad_pattern("cov", pattern, "base must be positive"));
        }
        let half = p.div_ceil(2);
        let v = DVector::from_fn(p, |i, _| if i < half { 0.0 } else { 1.0 });
        let mut c = DMatrix::identity(p, p) * base;
        c.ger(coeff / p as f64, &v, &v, 1.0);
        let (vecs, vals_sqrt) = eigendecompose(c)?;
        return Ok((vecs, vals_sqrt, false));
    }
    if let Some(arg) = pattern.strip_prefix("file:") {
        let path = base_dir.join(arg);
        let text = std::fs::read_to_string(&path).map_err(|source| ConfigError::Io {
            path: path.clone(),
            source,
        })?;
        let c = parse_matrix_csv(&text, p).map_err(|reason| ConfigError::BadCovarianceFile {
            path: path.clone(),
            reason,
        })?;
        let symmetric = 0.5 * (&c + c.transpose());
        let asymmetry = (&c - &symmetric).abs().max();
        let scale = symmetric.abs().max().max(1.0);
        let symmetrized = asymmetry > 1e-12 * scale;
        let (vecs, vals_sqrt) = eigendecompose(symmetric)?;
        return Ok((vecs, vals_sqrt, symmetrized));
    }
    Err(bad_pattern("cov", pattern, "unknown pattern"))
}

/// Eigendecomposition sorted by ascending eigenvalue; rejects non-PD input.
fn eigendecompose(c: DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>), ConfigError> {
    let p = c.nrows();
    let eig = c.symmetric_eigen();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    if eig.eigenvalues[order[0]] <= 0.0 {
        return Err(ConfigError::NotPositiveDefinite(eig.eigenvalues[order[0]]));
    }
    let vecs = DMatrix::from_fn(p, p, |i, j| eig.eigenvectors[(i, order[j])]);
    let vals_sqrt = DVector::from_fn(p, |j, _| eig.eigenvalues[order[j]].sqrt());
    Ok((vecs, vals_sqrt))
}

fn parse_matrix_csv(text: &str, p: usize) -> Result<DMatrix<f64>, String> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|cell| cell.trim().parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|_| format!("line {}: not a number", lineno + 1))?;
        if row.len() != p {
            return Err(format!(
                "line {}: expected {} columns, found {}",
                lineno + 1,
                p,
                row.len()
            ));
        }
        rows.push(row);
    }
    if rows.len() != p {
        return Err(format!("expected {} rows, found {}", p, rows.len()));
    }
    Ok(DMatrix::from_fn(p, p, |i, j| rows[i][j]))
}
