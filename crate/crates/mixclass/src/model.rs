//! Two-class mixture data model: sampling and exact population error.
//!
//! A sample is `x = y*mu + V*Lambda*z` with label `y` a fair coin over {-1,+1}
//! and `z` i.i.d. zero-mean unit-variance noise. The covariance is carried in
//! factored form `C = V Lambda^2 V^T` so that sampling, trace functionals and
//! resolvents all share one eigendecomposition.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: mu has length l{mu}, eigvecs are {rows}x{cols}, eigvals_sqrt has length {vals}")]
    DimensionMismatch {
        mu: usize,
        rows: usize,
        cols: usize,
        vals: usize,
    },
    #[error("eigenvector matrix is not orthonormal (max deviation {deviation:.3e})")]
    NotOrthonormal { deviation: f64 },
    #[error("covariance eigenvalue {index} is not strictly positive ({value:.3e})")]
    NonPositiveEigenvalue { index: usize, value: f64 },
    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error("non-finite entry in model parameters")]
    NonFinite,
    #[error("dataset must contain at least one sample")]
    EmptySample,
    #[error("zero weight vector has no classification direction")]
    ZeroDirection,
}

/// Noise law for the generic mixture: i.i.d. entries with mean 0, variance 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseLaw {
    Gaussian,
    Rademacher,
    /// Uniform on `[-sqrt(3), sqrt(3)]`.
    UniformUnitVariance,
}

impl NoiseLaw {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "gaussian" => Some(Self::Gaussian),
            "rademacher" => Some(Self::Rademacher),
            "uniform" | "uniform_unit_variance" => Some(Self::UniformUnitVariance),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Gaussian => "gaussian",
            Self::Rademacher => "rademacher",
            Self::UniformUnitVariance => "uniform",
        }
    }
}

/// Mixture model with class mean `mu` and covariance `C = V Lambda^2 V^T`.
#[derive(Debug, Clone)]
pub struct MixtureModel {
    mu: DVector<f64>,
    cov_eigvecs: DMatrix<f64>,
    cov_eigvals_sqrt: DVector<f64>,
    p: usize,
}

/// Training set: feature columns `X` (p x n) and labels in {-1, +1}.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: DMatrix<f64>,
    pub labels: DVector<f64>,
}

const ORTHONORMALITY_TOL: f64 = 1e-10;

impl MixtureModel {
    /// Builds a model from an explicit eigendecomposition of the covariance.
    pub fn new(
        mu: DVector<f64>,
        cov_eigvecs: DMatrix<f64>,
        cov_eigvals_sqrt: DVector<f64>,
    ) -> Result<Self, ModelError> {
        let p = mu.len();
        if cov_eigvecs.nrows() != p || cov_eigvecs.ncols() != p || cov_eigvals_sqrt.len() != p {
            return Err(ModelError::DimensionMismatch {
                mu: p,
                rows: cov_eigvecs.nrows(),
                cols: cov_eigvecs.ncols(),
                vals: cov_eigvals_sqrt.len(),
            });
        }
        if !mu.iter().all(|v| v.is_finite())
            || !cov_eigvecs.iter().all(|v| v.is_finite())
            || !cov_eigvals_sqrt.iter().all(|v| v.is_finite())
        {
            return Err(ModelError::NonFinite);
        }
        for (index, &value) in cov_eigvals_sqrt.iter().enumerate() {
            if value <= 0.0 {
                return Err(ModelError::NonPositiveEigenvalue { index, value });
            }
        }
        let gram = cov_eigvecs.transpose() * &cov_eigvecs;
        let deviation = (0..p)
            .flat_map(|i| (0..p).map(move |j| (i, j)))
            .map(|(i, j)| (gram[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs())
            .fold(0.0_f64, f64::max);
        if deviation > ORTHONORMALITY_TOL {
            return Err(ModelError::NotOrthonormal { deviation });
        }
        Ok(Self {
            mu,
            cov_eigvecs,
            cov_eigvals_sqrt,
            p,
        })
    }

    /// Model with `C = scale * I`.
    pub fn isotropic(mu: DVector<f64>, scale: f64) -> Result<Self, ModelError> {
        let p = mu.len();
        if scale <= 0.0 {
            return Err(ModelError::NonPositiveEigenvalue {
                index: 0,
                value: scale,
            });
        }
        Self::new(
            mu,
            DMatrix::identity(p, p),
            DVector::from_element(p, scale.sqrt()),
        )
    }

    /// Builds a model from a raw SPD covariance, eigendecomposing it once.
    ///
    /// An asymmetric input is replaced by `(A + A^T)/2`; the returned flag
    /// says whether that symmetrization changed anything.
    pub fn from_covariance(
        mu: DVector<f64>,
        covariance: DMatrix<f64>,
    ) -> Result<(Self, bool), ModelError> {
        let p = mu.len();
        if covariance.nrows() != p || covariance.ncols() != p {
            return Err(ModelError::DimensionMismatch {
                mu: p,
                rows: covariance.nrows(),
                cols: covariance.ncols(),
                vals: p,
            });
        }
        if !covariance.iter().all(|v| v.is_finite()) {
            return Err(ModelError::NonFinite);
        }
        let asymmetry = (&covariance - covariance.transpose()).abs().max();
        let symmetrized = asymmetry > 1e-12 * covariance.abs().max().max(1.0);
        let sym = (&covariance + covariance.transpose()) * 0.5;
        let eig = sym.symmetric_eigen();
        // Sort ascending so the factored representation is deterministic.
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let mut vecs = DMatrix::zeros(p, p);
        let mut vals_sqrt = DVector::zeros(p);
        for (k, &j) in order.iter().enumerate() {
            let value = eig.eigenvalues[j];
            if value <= 0.0 {
                return Err(ModelError::NotPositiveDefinite);
            }
            vals_sqrt[k] = value.sqrt();
            vecs.set_column(k, &eig.eigenvectors.column(j));
        }
        Ok((Self::new(mu, vecs, vals_sqrt)?, symmetrized))
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn cov_eigvecs(&self) -> &DMatrix<f64> {
        &self.cov_eigvecs
    }

    pub fn cov_eigvals_sqrt(&self) -> &DVector<f64> {
        &self.cov_eigvals_sqrt
    }

    /// Eigenvalues of `C` (squares of the stored square roots), ascending.
    pub fn cov_eigvals(&self) -> DVector<f64> {
        self.cov_eigvals_sqrt.map(|s| s * s)
    }

    /// Dense covariance `V Lambda^2 V^T`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let mut scaled = self.cov_eigvecs.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            let d = self.cov_eigvals_sqrt[j] * self.cov_eigvals_sqrt[j];
            col *= d;
        }
        scaled * self.cov_eigvecs.transpose()
    }

    /// Mean expressed in the covariance eigenbasis, `V^T mu`.
    pub fn mu_in_eigenbasis(&self) -> DVector<f64> {
        self.cov_eigvecs.transpose() * &self.mu
    }

    /// `C * x` without forming the dense covariance.
    pub fn apply_covariance(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut u = self.cov_eigvecs.transpose() * x;
        for (j, v) in u.iter_mut().enumerate() {
            *v *= self.cov_eigvals_sqrt[j] * self.cov_eigvals_sqrt[j];
        }
        &self.cov_eigvecs * u
    }

    /// Oracle direction `2 C^{-1} mu`, via the eigendecomposition.
    pub fn oracle_direction(&self) -> DVector<f64> {
        let mut u = self.mu_in_eigenbasis();
        for (j, v) in u.iter_mut().enumerate() {
            *v /= self.cov_eigvals_sqrt[j] * self.cov_eigvals_sqrt[j];
        }
        &self.cov_eigvecs * u * 2.0
    }

    /// Draws `n` samples `x = y*mu + V*Lambda*z`, deterministic in `seed`.
    ///
    /// Labels are independent fair coins rather than a forced even split.
    pub fn sample_dataset(
        &self,
        law: NoiseLaw,
        n: usize,
        seed: u64,
    ) -> Result<Dataset, ModelError> {
        if n == 0 {
            return Err(ModelError::EmptySample);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let uniform = Uniform::new(-(3.0_f64.sqrt()), 3.0_f64.sqrt()).expect("static bounds");
        let mut labels = DVector::zeros(n);
        let mut scaled_noise = DMatrix::zeros(self.p, n);
        for i in 0..n {
            labels[i] = if rng.random::<bool>() { 1.0 } else { -1.0 };
            for k in 0..self.p {
                let z: f64 = match law {
                    NoiseLaw::Gaussian => StandardNormal.sample(&mut rng),
                    NoiseLaw::Rademacher => {
                        if rng.random::<bool>() {
                            1.0
                        } else {
                            -1.0
                        }
                    }
                    NoiseLaw::UniformUnitVariance => uniform.sample(&mut rng),
                };
                scaled_noise[(k, i)] = self.cov_eigvals_sqrt[k] * z;
            }
        }
        let mut features = &self.cov_eigvecs * scaled_noise;
        for (i, mut col) in features.column_iter_mut().enumerate() {
            col.axpy(labels[i], &self.mu, 1.0);
        }
        Ok(Dataset { features, labels })
    }

    /// Population misclassification probability `Q(beta^T mu / sqrt(beta^T C beta))`.
    ///
    /// The direction is pre-normalized by its max-abs entry, so rescaling
    /// `beta` by a power of two reproduces the result bit for bit.
    pub fn classification_error(&self, beta: &DVector<f64>) -> Result<f64, ModelError> {
        let scale = beta.amax();
        if scale == 0.0 || !scale.is_finite() {
            return Err(ModelError::ZeroDirection);
        }
        let unit = beta.map(|v| v / scale);
        let mut u = self.cov_eigvecs.transpose() * &unit;
        for (j, v) in u.iter_mut().enumerate() {
            *v *= self.cov_eigvals_sqrt[j];
        }
        let variance = u.norm_squared();
        Ok(q_function(unit.dot(&self.mu) / variance.sqrt()))
    }
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn p(&self) -> usize {
        self.features.nrows()
    }

    /// Class-weighted sample mean `X y / n`.
    pub fn weighted_mean(&self) -> DVector<f64> {
        (&self.features * &self.labels) / self.n() as f64
    }

    /// Label-signed margins `y_i * x_i^T beta`.
    pub fn margins(&self, beta: &DVector<f64>) -> DVector<f64> {
        let mut m = self.features.transpose() * beta;
        for (i, v) in m.iter_mut().enumerate() {
            *v *= self.labels[i];
        }
        m
    }

    /// Writes the dataset as CSV with header `y,x1,..,xp`.
    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> std::io::Result<()> {
        write!(out, "y")?;
        for j in 1..=self.p() {
            write!(out, ",x{j}")?;
        }
        writeln!(out)?;
        for i in 0..self.n() {
            write!(out, "{}", self.labels[i])?;
            for k in 0..self.p() {
                write!(out, ",{}", self.features[(k, i)])?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Standard Gaussian upper tail `Q(t) = erfc(t/sqrt(2))/2`.
///
/// The erfc form stays accurate deep in the tail where `1 - Phi(t)` cancels.
pub fn q_function(t: f64) -> f64 {
    0.5 * libm::erfc(t / std::f64::consts::SQRT_2)
}
