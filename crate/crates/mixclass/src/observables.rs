//! Plug-in observables of a fitted classifier.
//!
//! From one `(data, solution)` pair these functions compute the dual weights
//! `c_i = -l'(margin_i)`, the leverage scalar `kappa_hat`, the de-fitted
//! margins `r_i = margin_i - kappa_hat*c_i`, and the scalar estimates
//! `(theta_hat, eta_hat, gamma_hat)` that feed the stochastic error
//! prediction. Everything here is consistent in the large-n,p limit with the
//! deterministic fixed point solved by the theory module.

use crate::loss::LossSpec;
use crate::model::{q_function, Dataset, MixtureModel};
use crate::solver::ErmSolution;
use nalgebra::{Cholesky, DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ObservablesError {
    #[error("solution was fitted with loss {solution}, observables requested for {requested}")]
    LossMismatch {
        solution: &'static str,
        requested: &'static str,
    },
    #[error("regularized Hessian is not positive definite")]
    HessianNotPd,
    #[error("leverage denominator 1 - l''*t at sample {index} is {value:.3e} (< 1e-8); instance too ill-conditioned")]
    IllConditionedLeverage { index: usize, value: f64 },
    #[error("de-fitted margins have zero variance; theta_hat is undefined")]
    DegenerateResiduals,
    #[error("theta_hat must be positive for the error prediction, got {0}")]
    NonPositiveTheta(f64),
    #[error("resolvent lambda I + theta_hat C is not positive definite")]
    ResolventNotPd,
    #[error("observables were computed on datasets of different sizes ({0} vs {1})")]
    SampleCountMismatch(usize, usize),
    #[error("at least one set of observables is required")]
    Empty,
}

/// Empirical counterparts of the fixed-point quantities, from one fit.
#[derive(Debug, Clone)]
pub struct EmpiricalObservables {
    /// Dual weights `c_i = -l'(y_i x_i^T beta)`.
    pub c: DVector<f64>,
    /// De-fitted margins `r_i = y_i x_i^T beta - kappa_hat * c_i`.
    pub r: DVector<f64>,
    pub kappa_hat: f64,
    pub theta_hat: f64,
    pub eta_hat: f64,
    pub gamma_hat: f64,
}

impl EmpiricalObservables {
    pub fn n(&self) -> usize {
        self.c.len()
    }
}

/// Computes `(c, r, kappa_hat, theta_hat, eta_hat, gamma_hat)` from a fit.
pub fn compute_observables(
    data: &Dataset,
    sol: &ErmSolution,
    loss: LossSpec,
) -> Result<EmpiricalObservables, ObservablesError> {
    if sol.loss_name != loss.name() {
        return Err(ObservablesError::LossMismatch {
            solution: sol.loss_name,
            requested: loss.name(),
        });
    }
    let (p, n) = (data.p(), data.n());
    let nf = n as f64;

    let c = sol.margins.map(|t| -loss.deriv1(t));
    let curvatures = sol.margins.map(|t| loss.deriv2(t));

    // One p x p solve gives every leverage t_i = x_i^T Q x_i / n.
    let mut scaled = data.features.clone();
    for (i, mut col) in scaled.column_iter_mut().enumerate() {
        col *= curvatures[i] / nf;
    }
    let mut hessian = &scaled * data.features.transpose();
    for k in 0..p {
        hessian[(k, k)] += sol.lambda;
    }
    let ch = Cholesky::new(hessian).ok_or(ObservablesError::HessianNotPd)?;
    let solved = ch.solve(&data.features);
    let mut kappa_hat = 0.0;
    for i in 0..n {
        let t = data.features.column(i).dot(&solved.column(i)) / nf;
        let denominator = 1.0 - curvatures[i] * t;
        if denominator < 1e-8 {
            return Err(ObservablesError::IllConditionedLeverage {
                index: i,
                value: denominator,
            });
        }
        kappa_hat += t / denominator;
    }
    kappa_hat /= nf;

    let r = &sol.margins - &c * kappa_hat;
    let r_mean = r.mean();
    let centered = r.map(|v| v - r_mean);
    let sum_squares = centered.norm_squared();
    if sum_squares <= 1e-14 * nf {
        return Err(ObservablesError::DegenerateResiduals);
    }
    let theta_hat = -c.dot(&centered) / sum_squares;
    let eta_hat = c.mean();
    let gamma_hat = (p as f64).sqrt() * c.norm() / nf;

    Ok(EmpiricalObservables {
        c,
        r,
        kappa_hat,
        theta_hat,
        eta_hat,
        gamma_hat,
    })
}

/// Plug-in prediction `Q(m_hat / sigma_hat)` of the population error.
///
/// Uses the true model parameters (mu, C) and the estimated scalars, with
/// `m_hat = eta_hat * mu^T (lambda I + theta_hat C)^{-1} mu` and
/// `sigma_hat^2 = eta_hat^2 * mu^T (...)^{-1} C (...)^{-1} mu
///              + gamma_hat^2 * tr[((...)^{-1} C)^2] / p`.
pub fn stochastic_error_prediction(
    obs: &EmpiricalObservables,
    model: &MixtureModel,
    lambda: f64,
) -> Result<f64, ObservablesError> {
    if obs.theta_hat <= 0.0 {
        return Err(ObservablesError::NonPositiveTheta(obs.theta_hat));
    }
    let p = model.p() as f64;
    let d = model.cov_eigvals();
    let w = model.mu_in_eigenbasis();
    let mut m_hat = 0.0;
    let mut signal_var = 0.0;
    let mut trace_term = 0.0;
    for j in 0..model.p() {
        let a = lambda + obs.theta_hat * d[j];
        if a <= 0.0 {
            return Err(ObservablesError::ResolventNotPd);
        }
        let w2 = w[j] * w[j];
        m_hat += w2 / a;
        signal_var += w2 * d[j] / (a * a);
        let ratio = d[j] / a;
        trace_term += ratio * ratio;
    }
    m_hat *= obs.eta_hat;
    let sigma_sq =
        obs.eta_hat * obs.eta_hat * signal_var + obs.gamma_hat * obs.gamma_hat * trace_term / p;
    Ok(q_function(m_hat / sigma_sq.sqrt()))
}

/// Pairwise correlations `rho_ij = c_i^T c_j / (|c_i| |c_j|)` of dual weights.
pub fn cross_correlation(
    obs_list: &[EmpiricalObservables],
) -> Result<DMatrix<f64>, ObservablesError> {
    if obs_list.is_empty() {
        return Err(ObservablesError::Empty);
    }
    let n = obs_list[0].n();
    for obs in obs_list {
        if obs.n() != n {
            return Err(ObservablesError::SampleCountMismatch(n, obs.n()));
        }
    }
    let m = obs_list.len();
    let mut rho = DMatrix::identity(m, m);
    for i in 0..m {
        for j in (i + 1)..m {
            let value =
                obs_list[i].c.dot(&obs_list[j].c) / (obs_list[i].c.norm() * obs_list[j].c.norm());
            rho[(i, j)] = value;
            rho[(j, i)] = value;
        }
    }
    Ok(rho)
}
