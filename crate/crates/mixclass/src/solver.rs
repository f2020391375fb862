//! Ridge-regularized and unregularized ERM solvers.
//!
//! The generic path is a damped Newton method on the full objective; the
//! square loss and LDA have direct linear-solve forms. For `lambda = 0` the
//! solver refuses underdetermined problems outright and certifies linearly
//! separable ones after the fact, since for a strictly decreasing loss the
//! unregularized minimizer exists iff the data are not separable.

use crate::loss::{LossError, LossSpec};
use crate::model::Dataset;
use nalgebra::{Cholesky, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("lambda must be nonnegative, got {0}")]
    NegativeLambda(f64),
    #[error("unregularized fit needs n > p (got n={n}, p={p}); the interpolating problem has infinitely many solutions")]
    NeedsOverdetermined { n: usize, p: usize },
    #[error("training data are linearly separable: the unregularized problem has no minimizer (min margin {min_margin:.3e}, |beta| {beta_norm:.3e})")]
    Separable { min_margin: f64, beta_norm: f64 },
    #[error("linear system is singular at lambda = 0")]
    SingularSystem,
    #[error("Newton did not converge after {iterations} iterations (gradient norm {grad_norm:.3e}, tolerance {tolerance:.3e})")]
    NonConvergence {
        iterations: usize,
        grad_norm: f64,
        tolerance: f64,
    },
    #[error(transparent)]
    Loss(#[from] LossError),
}

/// A fitted classifier together with its optimality diagnostics.
#[derive(Debug, Clone)]
pub struct ErmSolution {
    pub beta: DVector<f64>,
    pub lambda: f64,
    pub loss_name: &'static str,
    /// Euclidean norm of the objective gradient at `beta`.
    pub grad_residual: f64,
    /// `y_i * x_i^T beta` for every training sample.
    pub margins: DVector<f64>,
}

const MAX_NEWTON_ITERATIONS: usize = 500;
const ARMIJO_C: f64 = 1e-4;
const DIVERGENCE_NORM: f64 = 1e6;

/// Minimizes `(1/n) sum l(y_i x_i^T beta) + (lambda/2)|beta|^2` from a cold start.
pub fn solve_erm(data: &Dataset, loss: LossSpec, lambda: f64) -> Result<ErmSolution, SolverError> {
    let p = data.p();
    solve_erm_warm(data, loss, lambda, &DVector::zeros(p))
}

/// Same problem, started from `initial` (e.g. a solution at a nearby lambda).
pub fn solve_erm_warm(
    data: &Dataset,
    loss: LossSpec,
    lambda: f64,
    initial: &DVector<f64>,
) -> Result<ErmSolution, SolverError> {
    if lambda < 0.0 {
        return Err(SolverError::NegativeLambda(lambda));
    }
    let (p, n) = (data.p(), data.n());
    if lambda == 0.0 && n <= p {
        return Err(SolverError::NeedsOverdetermined { n, p });
    }
    let nf = n as f64;

    let objective = |margins: &DVector<f64>, beta: &DVector<f64>| -> f64 {
        margins.iter().map(|&t| loss.value(t)).sum::<f64>() / nf
            + 0.5 * lambda * beta.norm_squared()
    };

    let mut beta = initial.clone();
    let mut margins = data.margins(&beta);
    let mut obj = objective(&margins, &beta);
    let tolerance = 1e-9 * data.weighted_mean().norm().max(1.0);

    let mut grad = DVector::zeros(p);
    let mut iterations = 0;
    loop {
        // grad = lambda*beta - (1/n) X (c .* y), with c_i = -l'(margin_i).
        let mut signed_c = DVector::zeros(n);
        for i in 0..n {
            signed_c[i] = -loss.deriv1(margins[i]) * data.labels[i];
        }
        grad.copy_from(&beta);
        grad *= lambda;
        grad.gemv(-1.0 / nf, &data.features, &signed_c, 1.0);
        let grad_norm = grad.norm();
        if grad_norm <= tolerance {
            break;
        }
        if iterations >= MAX_NEWTON_ITERATIONS {
            return Err(SolverError::NonConvergence {
                iterations,
                grad_norm,
                tolerance,
            });
        }

        // Hessian (1/n) X diag(l'') X^T + lambda I; PD whenever lambda > 0.
        let mut scaled = data.features.clone();
        for (i, mut col) in scaled.column_iter_mut().enumerate() {
            col *= loss.deriv2(margins[i]) / nf;
        }
        let mut hessian = &scaled * data.features.transpose();
        for k in 0..p {
            hessian[(k, k)] += lambda;
        }
        let direction = match Cholesky::new(hessian) {
            Some(ch) => -ch.solve(&grad),
            // Semidefinite corner at lambda = 0: fall back to steepest descent.
            None => -&grad,
        };

        let slope = grad.dot(&direction);
        let mut step = 1.0;
        let mut accepted = false;
        // The decrease demanded near the optimum can drop below the roundoff
        // floor of the objective itself; allow that much slack so the full
        // Newton step is not rejected by cancellation noise.
        let roundoff = 4.0 * f64::EPSILON * obj.abs();
        for _ in 0..60 {
            let candidate = &beta + &direction * step;
            let candidate_margins = data.margins(&candidate);
            let candidate_obj = objective(&candidate_margins, &candidate);
            if candidate_obj <= obj + ARMIJO_C * step * slope + roundoff {
                beta = candidate;
                margins = candidate_margins;
                obj = candidate_obj;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // Line search exhausted: gradient is numerically stationary.
            break;
        }
        iterations += 1;

        if beta.norm() > DIVERGENCE_NORM {
            return Err(SolverError::Separable {
                min_margin: margins.min(),
                beta_norm: beta.norm(),
            });
        }
    }

    // Certificate: at lambda = 0 a strictly decreasing loss has a stationary
    // "solution" with every margin positive only when the objective can keep
    // shrinking along beta's ray, i.e. the data are separable.
    if lambda == 0.0 && loss.strictly_decreasing() {
        let min_margin = margins.min();
        if min_margin > 0.0 {
            return Err(SolverError::Separable {
                min_margin,
                beta_norm: beta.norm(),
            });
        }
    }

    let mut signed_c = DVector::zeros(n);
    for i in 0..n {
        signed_c[i] = -loss.deriv1(margins[i]) * data.labels[i];
    }
    grad.copy_from(&beta);
    grad *= lambda;
    grad.gemv(-1.0 / nf, &data.features, &signed_c, 1.0);

    Ok(ErmSolution {
        beta,
        lambda,
        loss_name: loss.name(),
        grad_residual: grad.norm(),
        margins,
    })
}

/// Ridge least squares `(lambda I + X X^T / n)^{-1} X y / n`.
pub fn solve_least_squares(data: &Dataset, lambda: f64) -> Result<ErmSolution, SolverError> {
    if lambda < 0.0 {
        return Err(SolverError::NegativeLambda(lambda));
    }
    let (p, n) = (data.p(), data.n());
    let nf = n as f64;
    let mut gram = &data.features * data.features.transpose() / nf;
    for k in 0..p {
        gram[(k, k)] += lambda;
    }
    let rhs = data.weighted_mean();
    let ch = Cholesky::new(gram.clone()).ok_or(SolverError::SingularSystem)?;
    let beta = ch.solve(&rhs);
    let grad_residual = (&gram * &beta - &rhs).norm();
    Ok(ErmSolution {
        margins: data.margins(&beta),
        beta,
        lambda,
        loss_name: "square",
        grad_residual,
    })
}

/// Regularized LDA direction `2 (lambda I + C_hat)^{-1} mu_hat`.
pub fn solve_lda(data: &Dataset, lambda: f64) -> Result<ErmSolution, SolverError> {
    if lambda < 0.0 {
        return Err(SolverError::NegativeLambda(lambda));
    }
    let (p, n) = (data.p(), data.n());
    let nf = n as f64;
    let mu_hat = data.weighted_mean();
    // C_hat = X X^T / n - mu_hat mu_hat^T (within-class scatter).
    let mut scatter = &data.features * data.features.transpose() / nf;
    scatter.ger(-1.0, &mu_hat, &mu_hat, 1.0);
    let mut regularized = scatter;
    for k in 0..p {
        regularized[(k, k)] += lambda;
    }
    let ch = Cholesky::new(regularized.clone()).ok_or(SolverError::SingularSystem)?;
    let beta = ch.solve(&mu_hat) * 2.0;
    let grad_residual = (&regularized * &beta - &mu_hat * 2.0).norm();
    Ok(ErmSolution {
        margins: data.margins(&beta),
        beta,
        lambda,
        loss_name: "lda",
        grad_residual,
    })
}
