//! Optimal linear combination of classifiers fit on the same sample.
//!
//! Each fit contributes its score vector `c_i` and bias scale `theta_i`.
//! Among combinations sharing one bias ratio, the error-minimizing mixture
//! is a least-squares projection of the all-ones vector onto span{c_i}: the
//! predicted error of `v = sum_i (a_i/theta_i) c_i` depends on the weights
//! only through `||v||^2 / (1^T v)^2`, which the projection minimizes.

use crate::model::{q_function, MixtureModel};
use crate::observables::EmpiricalObservables;
use crate::solver::ErmSolution;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CombineError {
    #[error("combination needs at least one classifier")]
    Empty,
    #[error("mismatched inputs: {context} ({left} vs {right})")]
    LengthMismatch {
        context: &'static str,
        left: usize,
        right: usize,
    },
    #[error("classifiers must share one bias ratio: lambda/theta ranges over [{omega_min:.6e}, {omega_max:.6e}]")]
    MixedBias { omega_min: f64, omega_max: f64 },
    #[error("score vectors are numerically collinear (condition number {condition:.3e})")]
    Collinear { condition: f64 },
    #[error("combined score has nonpositive mass 1^T v = {0:.3e}; no valid classifier direction")]
    Infeasible(f64),
    #[error("nonpositive theta estimate {0:.3e} cannot scale a combination")]
    NonPositiveTheta(f64),
}

/// Weights and error prediction for a combined classifier.
#[derive(Debug, Clone)]
pub struct CombinationResult {
    /// Combination weights `a_i`, normalized so `sum_i |a_i| = 1`.
    pub weights: Vec<f64>,
    /// Signal amplitude `1^T v / n` of the combined score.
    pub tau: f64,
    /// Noise amplitude `sqrt(p) ||v|| / n` of the combined score.
    pub omega_amp: f64,
    /// Predicted classification error of the combination.
    pub predicted_error: f64,
    /// The combined parameter vector `sum_i (a_i/theta_i) beta_i`.
    pub combined_beta: DVector<f64>,
}

/// Resolvent sums of the model at the shared bias ratio `omega`:
/// `P = mu^T (omega I + C)^{-1} mu` and its `C`-weighted companions.
fn resolvent_sums(model: &MixtureModel, omega: f64) -> (f64, f64, f64) {
    let mut p_sum = 0.0;
    let mut s_sum = 0.0;
    let mut t_sum = 0.0;
    for (&d, &w) in model
        .cov_eigvals()
        .iter()
        .zip(model.mu_in_eigenbasis().iter())
    {
        let a = omega + d;
        p_sum += w * w / a;
        s_sum += w * w * d / (a * a);
        t_sum += (d / a) * (d / a);
    }
    (p_sum, s_sum, t_sum)
}

fn prediction_from_amplitudes(model: &MixtureModel, omega: f64, tau: f64, omega_amp: f64) -> f64 {
    let (p_sum, s_sum, t_sum) = resolvent_sums(model, omega);
    let p = model.p() as f64;
    let m = tau * p_sum;
    let sigma_sq = tau * tau * s_sum + omega_amp * omega_amp * t_sum / p;
    q_function(m / sigma_sq.sqrt())
}

fn shared_bias_ratio(
    observables: &[EmpiricalObservables],
    lambdas: &[f64],
) -> Result<f64, CombineError> {
    let mut omegas = Vec::with_capacity(observables.len());
    for (obs, &lambda) in observables.iter().zip(lambdas) {
        if obs.theta_hat <= 0.0 {
            return Err(CombineError::NonPositiveTheta(obs.theta_hat));
        }
        omegas.push(lambda / obs.theta_hat);
    }
    let omega_min = omegas.iter().copied().fold(f64::INFINITY, f64::min);
    let omega_max = omegas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if omega_max - omega_min > 1e-6 * omega_max.abs().max(1.0) {
        return Err(CombineError::MixedBias {
            omega_min,
            omega_max,
        });
    }
    Ok(0.5 * (omega_min + omega_max))
}

/// Predicted error of a user-specified combination with weights `a_i`,
/// evaluated at the given shared bias ratio. Weights are normalized to
/// `sum |a_i| = 1` internally, so any positive rescaling is equivalent.
pub fn predicted_combination_error(
    observables: &[EmpiricalObservables],
    weights: &[f64],
    model: &MixtureModel,
    shared_bias: f64,
) -> Result<f64, CombineError> {
    if observables.is_empty() {
        return Err(CombineError::Empty);
    }
    if observables.len() != weights.len() {
        return Err(CombineError::LengthMismatch {
            context: "observables vs weights",
            left: observables.len(),
            right: weights.len(),
        });
    }
    let n = observables[0].n();
    let scale: f64 = weights.iter().map(|a| a.abs()).sum();
    if scale <= 0.0 {
        return Err(CombineError::Infeasible(0.0));
    }
    let mut v = DVector::zeros(n);
    for (obs, &a) in observables.iter().zip(weights) {
        if obs.n() != n {
            return Err(CombineError::LengthMismatch {
                context: "score vector lengths",
                left: n,
                right: obs.n(),
            });
        }
        if obs.theta_hat <= 0.0 {
            return Err(CombineError::NonPositiveTheta(obs.theta_hat));
        }
        v.axpy(a / (scale * obs.theta_hat), &obs.c, 1.0);
    }
    let mass = v.sum();
    if mass <= 0.0 {
        return Err(CombineError::Infeasible(mass));
    }
    let tau = mass / n as f64;
    let omega_amp = (model.p() as f64).sqrt() * v.norm() / n as f64;
    Ok(prediction_from_amplitudes(
        model,
        shared_bias,
        tau,
        omega_amp,
    ))
}

/// Error-minimizing combination of classifiers that share one bias ratio.
///
/// Requires every fit to be unregularized, or all bias ratios
/// `lambda_i/theta_i` to agree to relative 1e-6. The optimal coefficients
/// solve the Gram system `G b = C^T 1` over the score vectors; reported
/// weights are `a_i = theta_i b_i` normalized to unit absolute sum.
pub fn optimal_combination(
    observables: &[EmpiricalObservables],
    solutions: &[ErmSolution],
    model: &MixtureModel,
) -> Result<CombinationResult, CombineError> {
    if observables.is_empty() {
        return Err(CombineError::Empty);
    }
    if observables.len() != solutions.len() {
        return Err(CombineError::LengthMismatch {
            context: "observables vs solutions",
            left: observables.len(),
            right: solutions.len(),
        });
    }
    let count = observables.len();
    let n = observables[0].n();
    for (obs, sol) in observables.iter().zip(solutions) {
        if obs.n() != n || sol.margins.len() != n {
            return Err(CombineError::LengthMismatch {
                context: "score vector lengths",
                left: n,
                right: obs.n().min(sol.margins.len()),
            });
        }
    }
    let lambdas: Vec<f64> = solutions.iter().map(|s| s.lambda).collect();
    let omega = shared_bias_ratio(observables, &lambdas)?;

    // Gram system over the score vectors, jittered for scale-free stability.
    let mut gram = DMatrix::zeros(count, count);
    let mut rhs = DVector::zeros(count);
    for i in 0..count {
        for j in i..count {
            let dot = observables[i].c.dot(&observables[j].c);
            gram[(i, j)] = dot;
            gram[(j, i)] = dot;
        }
        rhs[i] = observables[i].c.sum();
    }
    let jitter = 1e-12 * gram.trace() / count as f64;
    for i in 0..count {
        gram[(i, i)] += jitter;
    }
    let eigen = gram.clone().symmetric_eigen();
    let eig_max = eigen.eigenvalues.max();
    let eig_min = eigen.eigenvalues.min();
    if eig_min <= 0.0 || eig_max / eig_min > 1e12 {
        let condition = if eig_min > 0.0 {
            eig_max / eig_min
        } else {
            f64::INFINITY
        };
        return Err(CombineError::Collinear { condition });
    }
    let mut b = DVector::zeros(count);
    for k in 0..count {
        let column = eigen.eigenvectors.column(k);
        b.axpy(
            column.dot(&rhs) / eigen.eigenvalues[k],
            &column.into_owned(),
            1.0,
        );
    }

    let mut weights: Vec<f64> = observables
        .iter()
        .zip(b.iter())
        .map(|(obs, &b_i)| obs.theta_hat * b_i)
        .collect();
    let scale: f64 = weights.iter().map(|a| a.abs()).sum();
    if scale <= 0.0 {
        return Err(CombineError::Infeasible(0.0));
    }
    for a in &mut weights {
        *a /= scale;
    }

    let mut v = DVector::zeros(n);
    let p = model.p();
    let mut combined_beta = DVector::zeros(solutions[0].beta.len());
    for ((obs, sol), &a) in observables.iter().zip(solutions).zip(&weights) {
        if sol.beta.len() != p {
            return Err(CombineError::LengthMismatch {
                context: "beta dimension vs model",
                left: sol.beta.len(),
                right: p,
            });
        }
        v.axpy(a / obs.theta_hat, &obs.c, 1.0);
        combined_beta.axpy(a / obs.theta_hat, &sol.beta, 1.0);
    }
    let mass = v.sum();
    if mass <= 0.0 {
        return Err(CombineError::Infeasible(mass));
    }
    let tau = mass / n as f64;
    let omega_amp = (p as f64).sqrt() * v.norm() / n as f64;
    let predicted_error = prediction_from_amplitudes(model, omega, tau, omega_amp);
    Ok(CombinationResult {
        weights,
        tau,
        omega_amp,
        predicted_error,
        combined_beta,
    })
}
