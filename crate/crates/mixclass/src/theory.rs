//! Deterministic self-consistent characterization of the fitted classifier.
//!
//! In the proportional regime the margins of a ridge ERM fit behave like
//! `r ~ N(m, sigma^2)` coupled to scalars `(theta, eta, gamma, kappa)` through
//! a three-equation fixed point driven by the residual map `h`. This module
//! solves that system by damped Picard iteration, turns the state into the
//! error prediction `Q(m/sigma)`, evaluates the bias-fixed error bound
//! `Q(sqrt(e(omega)))`, and calibrates `lambda` so that a loss reaches a
//! prescribed bias ratio `omega = lambda/theta`.

use crate::loss::{LossError, LossSpec};
use crate::model::{q_function, MixtureModel};
use crate::quad::gh127;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TheoryError {
    #[error("lambda must be nonnegative, got {0}")]
    NegativeLambda(f64),
    #[error("target bias ratio must be nonnegative, got {0}")]
    NegativeTarget(f64),
    #[error("model mean is zero; the fixed point has no signal direction")]
    ZeroMean,
    #[error("unregularized fixed point needs n/p > 1 (got n={n}, p={p})")]
    UnderdeterminedUnregularized { n: usize, p: usize },
    #[error("fixed point for {loss} at lambda={lambda:.3e} did not converge after {iterations} sweeps (relative residuals {residuals:?})")]
    NonConvergence {
        loss: &'static str,
        lambda: f64,
        iterations: usize,
        residuals: [f64; 3],
    },
    #[error("bias-fixed bound is vacuous at omega={omega:.3e}: 1 - tr[((omega I + C)^{{-1}} C)^2]/n = {bracket:.3e} <= 0")]
    VacuousBound { omega: f64, bracket: f64 },
    #[error("bias ratio is not monotone in lambda between {lambda_low:.3e} and {lambda_high:.3e}; calibration refused")]
    NonMonotoneBias { lambda_low: f64, lambda_high: f64 },
    #[error("bias ratio {target:.6e} is not attainable for {loss}; achieved range [{omega_min:.6e}, {omega_max:.6e}]")]
    NotAttainable {
        loss: &'static str,
        target: f64,
        omega_min: f64,
        omega_max: f64,
    },
    #[error(transparent)]
    Loss(#[from] LossError),
}

/// Converged solution of the self-consistent system.
#[derive(Debug, Clone)]
pub struct TheoryState {
    pub theta: f64,
    pub eta: f64,
    pub gamma: f64,
    pub kappa: f64,
    /// Mean of the margin law `r ~ N(m, sigma^2)`.
    pub m: f64,
    pub sigma: f64,
    pub lambda: f64,
    pub loss_name: &'static str,
    pub converged: bool,
    pub iterations: usize,
}

impl TheoryState {
    /// Asymptotic classification error `Q(m/sigma)`.
    pub fn predicted_error(&self) -> f64 {
        q_function(self.m / self.sigma)
    }

    /// Directional bias ratio `omega = lambda/theta`.
    pub fn bias_ratio(&self) -> f64 {
        self.lambda / self.theta
    }
}

/// Spectral data of `(model, n)`: everything the scalar system needs.
struct Spectral {
    /// Eigenvalues of C.
    d: Vec<f64>,
    /// Squared coordinates of mu in the eigenbasis of C.
    w2: Vec<f64>,
    p: f64,
    n: f64,
}

impl Spectral {
    fn new(model: &MixtureModel, n: usize) -> Self {
        let d = model.cov_eigvals().iter().copied().collect();
        let w2 = model.mu_in_eigenbasis().iter().map(|w| w * w).collect();
        Spectral {
            d,
            w2,
            p: model.p() as f64,
            n: n as f64,
        }
    }

    /// `kappa = (1/n) tr C (theta C + lambda I)^{-1}`.
    fn kappa(&self, theta: f64, lambda: f64) -> f64 {
        self.d
            .iter()
            .map(|&d| d / (theta * d + lambda))
            .sum::<f64>()
            / self.n
    }

    /// Resolvent sums at `A = lambda I + theta C`:
    /// `P = mu^T A^{-1} mu`, `S = mu^T A^{-1} C A^{-1} mu`, `T = tr[(A^{-1} C)^2]`.
    fn resolvent_sums(&self, theta: f64, lambda: f64) -> (f64, f64, f64) {
        let mut p_sum = 0.0;
        let mut s_sum = 0.0;
        let mut t_sum = 0.0;
        for (&d, &w2) in self.d.iter().zip(&self.w2) {
            let a = lambda + theta * d;
            p_sum += w2 / a;
            s_sum += w2 * d / (a * a);
            let ratio = d / a;
            t_sum += ratio * ratio;
        }
        (p_sum, s_sum, t_sum)
    }

    /// `(m, sigma^2)` consistent with `(theta, eta, gamma)` at this lambda.
    fn m_sigma_sq(&self, theta: f64, eta: f64, gamma: f64, lambda: f64) -> (f64, f64) {
        let (p_sum, s_sum, t_sum) = self.resolvent_sums(theta, lambda);
        let m = eta * p_sum;
        let sigma_sq = eta * eta * s_sum + gamma * gamma * t_sum / self.p;
        (m, sigma_sq)
    }

    /// Closed-form square-loss state: `kappa` solves a scalar equation and
    /// the rest follows algebraically from `h(r) = (1-r)/(1+kappa)`.
    fn square_state(&self, lambda: f64) -> Option<(f64, f64, f64, f64, f64, f64)> {
        let kappa = if lambda == 0.0 {
            let ratio = self.p / self.n;
            if ratio >= 1.0 {
                return None;
            }
            ratio / (1.0 - ratio)
        } else {
            // kappa = (1/n) sum d (1+kappa) / (d + lambda (1+kappa)); the
            // right side minus kappa is positive at 0 and eventually negative.
            let mut lo = 0.0_f64;
            let mut hi = self.d.iter().sum::<f64>() / (self.n * lambda) + 1.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let value = self
                    .d
                    .iter()
                    .map(|&d| d * (1.0 + mid) / (d + lambda * (1.0 + mid)))
                    .sum::<f64>()
                    / self.n;
                if value > mid {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        let theta = 1.0 / (1.0 + kappa);
        let (p_sum, s_sum, t_sum) = self.resolvent_sums(theta, lambda);
        let one_plus = 1.0 + kappa;
        let m = p_sum / (one_plus + p_sum);
        let denominator = one_plus * one_plus - t_sum / self.n;
        if denominator <= 0.0 {
            return None;
        }
        let sigma_sq = (1.0 - m) * (1.0 - m) * (s_sum + t_sum / self.n) / denominator;
        let eta = (1.0 - m) / one_plus;
        let gamma_sq =
            (self.p / self.n) * ((1.0 - m) * (1.0 - m) + sigma_sq) / (one_plus * one_plus);
        Some((theta, eta, gamma_sq.sqrt(), kappa, m, sigma_sq.sqrt()))
    }
}

/// Contract tolerance: a state counts as converged when one full sweep moves
/// every scalar by less than this, relatively.
const FP_TOLERANCE: f64 = 1e-8;
/// Internal target: polish well past the contract tolerance so that slowly
/// contracting modes (small lambda near the separable phase) cannot leave an
/// error orders of magnitude above the residual.
const FP_TARGET: f64 = 1e-12;
const FP_MAX_SWEEPS: usize = 2000;
const FP_DAMPING: f64 = 0.5;
const THETA_COLLAPSE: f64 = 1e-10;

fn relative_gap(new: f64, old: f64) -> f64 {
    (new - old).abs() / new.abs().max(1e-12)
}

/// Solves the three-scalar fixed point for `(model, loss, lambda, n)`.
pub fn solve_fixed_point(
    model: &MixtureModel,
    loss: LossSpec,
    lambda: f64,
    n: usize,
) -> Result<TheoryState, TheoryError> {
    let spectral = Spectral::new(model, n);
    solve_fixed_point_spectral(&spectral, loss, lambda, None)
}

/// One application of the fixed-point map at `(theta, eta, gamma)`.
/// `None` signals the map left its domain (nonpositive theta or variance).
fn apply_map(
    spectral: &Spectral,
    loss: LossSpec,
    lambda: f64,
    x: [f64; 3],
) -> Result<Option<[f64; 3]>, LossError> {
    let [theta, eta, gamma] = x;
    if theta <= 0.0 {
        return Ok(None);
    }
    let kappa = spectral.kappa(theta, lambda);
    let (m, sigma_sq) = spectral.m_sigma_sq(theta, eta, gamma, lambda);
    if !(sigma_sq > 0.0 && sigma_sq.is_finite() && kappa.is_finite() && m.is_finite()) {
        return Ok(None);
    }
    let sigma = sigma_sq.sqrt();
    let rule = gh127();
    let sqrt2 = std::f64::consts::SQRT_2;
    // One prox solve per node yields all three Gaussian expectations.
    let mut e_h = 0.0;
    let mut e_h_sq = 0.0;
    let mut e_h_centered = 0.0;
    for (&node, &weight) in rule.nodes().iter().zip(rule.weights()) {
        let r = m + sigma * sqrt2 * node;
        let h = loss.h_map(kappa, r)?;
        e_h += weight * h;
        e_h_sq += weight * h * h;
        e_h_centered += weight * h * (r - m);
    }
    let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
    e_h *= inv_sqrt_pi;
    e_h_sq *= inv_sqrt_pi;
    e_h_centered *= inv_sqrt_pi;
    Ok(Some([
        -e_h_centered / sigma_sq,
        e_h,
        ((spectral.p / spectral.n) * e_h_sq).sqrt(),
    ]))
}

fn residuals_of(x: [f64; 3], image: [f64; 3]) -> [f64; 3] {
    [
        relative_gap(image[0], x[0]),
        relative_gap(image[1], x[1]),
        relative_gap(image[2], x[2]),
    ]
}

fn max_residual(r: [f64; 3]) -> f64 {
    r.iter().copied().fold(0.0, f64::max)
}

fn solve_fixed_point_spectral(
    spectral: &Spectral,
    loss: LossSpec,
    lambda: f64,
    init: Option<[f64; 3]>,
) -> Result<TheoryState, TheoryError> {
    if lambda < 0.0 {
        return Err(TheoryError::NegativeLambda(lambda));
    }
    if spectral.w2.iter().sum::<f64>() <= 0.0 {
        return Err(TheoryError::ZeroMean);
    }
    if lambda == 0.0 && spectral.n <= spectral.p {
        return Err(TheoryError::UnderdeterminedUnregularized {
            n: spectral.n as usize,
            p: spectral.p as usize,
        });
    }

    let warm_start = init.is_some();
    let mut x = init.unwrap_or_else(|| match spectral.square_state(lambda) {
        Some((theta, eta, gamma, ..)) => [theta, eta, gamma],
        None => [1.0, 1.0, (spectral.p / spectral.n).sqrt()],
    });

    let mut sweeps = 0usize;
    let mut residuals = [f64::INFINITY; 3];
    let fail = |sweeps: usize, residuals: [f64; 3]| TheoryError::NonConvergence {
        loss: loss.name(),
        lambda,
        iterations: sweeps,
        residuals,
    };

    // Phase one: damped Picard. Robust far from the solution and enough on
    // its own when the map contracts quickly.
    let warmup = if warm_start { 10 } else { 40 };
    let picard = |x: &mut [f64; 3],
                  residuals: &mut [f64; 3],
                  sweeps: &mut usize,
                  count: usize|
     -> Result<bool, TheoryError> {
        for _ in 0..count {
            if *sweeps >= FP_MAX_SWEEPS {
                return Ok(false);
            }
            *sweeps += 1;
            let image =
                apply_map(spectral, loss, lambda, *x)?.ok_or_else(|| fail(*sweeps, *residuals))?;
            *residuals = residuals_of(*x, image);
            for (xi, fi) in x.iter_mut().zip(image) {
                *xi += FP_DAMPING * (fi - *xi);
            }
            // At lambda = 0 a strong signal drives theta to zero: the
            // unregularized solution stops existing (separable phase).
            if lambda == 0.0 && x[0] < THETA_COLLAPSE {
                return Err(fail(*sweeps, *residuals));
            }
            if max_residual(*residuals) <= FP_TARGET {
                return Ok(true);
            }
        }
        Ok(true)
    };
    picard(&mut x, &mut residuals, &mut sweeps, warmup)?;

    // Phase two: Newton on G(x) = F(x) - x with a finite-difference Jacobian.
    // Slowly contracting modes make pure Picard stop with a residual far
    // smaller than the actual error; Newton squeezes the residual to the
    // internal target in a handful of steps.
    while sweeps < FP_MAX_SWEEPS {
        let base = match apply_map(spectral, loss, lambda, x)? {
            Some(image) => image,
            None => return Err(fail(sweeps, residuals)),
        };
        sweeps += 1;
        residuals = residuals_of(x, base);
        if max_residual(residuals) <= FP_TARGET {
            break;
        }
        let g = [base[0] - x[0], base[1] - x[1], base[2] - x[2]];
        let mut jacobian = [[0.0f64; 3]; 3];
        let mut fd_ok = true;
        for j in 0..3 {
            let step = 1e-6 * x[j].abs().max(1e-3);
            let mut shifted = x;
            shifted[j] += step;
            sweeps += 1;
            match apply_map(spectral, loss, lambda, shifted)? {
                Some(image) => {
                    for i in 0..3 {
                        let gi = image[i] - shifted[i];
                        jacobian[i][j] = (gi - g[i]) / step;
                    }
                }
                None => {
                    fd_ok = false;
                    break;
                }
            }
        }
        let delta = if fd_ok { solve_3x3(jacobian, g) } else { None };
        let mut advanced = false;
        if let Some(delta) = delta {
            let g_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut scale = 1.0;
            for _ in 0..8 {
                let candidate = [
                    x[0] - scale * delta[0],
                    x[1] - scale * delta[1],
                    x[2] - scale * delta[2],
                ];
                if candidate[0] > 0.0 && candidate[1] > 0.0 && candidate[2] > 0.0 {
                    if sweeps >= FP_MAX_SWEEPS {
                        break;
                    }
                    sweeps += 1;
                    if let Some(image) = apply_map(spectral, loss, lambda, candidate)? {
                        let g_new = [
                            image[0] - candidate[0],
                            image[1] - candidate[1],
                            image[2] - candidate[2],
                        ];
                        let g_new_norm = g_new.iter().map(|v| v * v).sum::<f64>().sqrt();
                        if g_new_norm <= 0.9 * g_norm {
                            x = candidate;
                            residuals = residuals_of(x, image);
                            advanced = true;
                            break;
                        }
                    }
                }
                scale *= 0.5;
            }
        }
        if !advanced {
            // Newton stalled; grind with Picard and try again.
            picard(&mut x, &mut residuals, &mut sweeps, 50)?;
        }
        if max_residual(residuals) <= FP_TARGET {
            break;
        }
        if lambda == 0.0 && x[0] < THETA_COLLAPSE {
            return Err(fail(sweeps, residuals));
        }
    }

    if max_residual(residuals) > FP_TOLERANCE {
        return Err(fail(sweeps, residuals));
    }
    let [theta, eta, gamma] = x;
    let kappa = spectral.kappa(theta, lambda);
    let (m, sigma_sq) = spectral.m_sigma_sq(theta, eta, gamma, lambda);
    if !(theta > 0.0 && eta > 0.0 && gamma > 0.0 && sigma_sq > 0.0) {
        return Err(fail(sweeps, residuals));
    }
    Ok(TheoryState {
        theta,
        eta,
        gamma,
        kappa,
        m,
        sigma: sigma_sq.sqrt(),
        lambda,
        loss_name: loss.name(),
        converged: true,
        iterations: sweeps,
    })
}

/// Gaussian elimination with partial pivoting; `None` on a singular system.
fn solve_3x3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let mut m = [[0.0f64; 4]; 3];
    for i in 0..3 {
        m[i][..3].copy_from_slice(&a[i]);
        m[i][3] = b[i];
    }
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| {
            m[i][col]
                .abs()
                .partial_cmp(&m[j][col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        m.swap(col, pivot);
        if m[col][col].abs() < 1e-300 {
            return None;
        }
        for row in (col + 1)..3 {
            let factor = m[row][col] / m[col][col];
            for k in col..4 {
                m[row][k] -= factor * m[col][k];
            }
        }
    }
    let mut out = [0.0f64; 3];
    for i in (0..3).rev() {
        let mut sum = m[i][3];
        for k in (i + 1)..3 {
            sum -= m[i][k] * out[k];
        }
        out[i] = sum / m[i][i];
        if !out[i].is_finite() {
            return None;
        }
    }
    Some(out)
}

/// Bias-fixed error bound `Q(sqrt(e(omega)))`: no classifier whose bias
/// ratio equals `omega` beats this error; the square loss attains it.
pub fn bias_fixed_lower_bound(
    model: &MixtureModel,
    n: usize,
    omega: f64,
) -> Result<f64, TheoryError> {
    if omega < 0.0 {
        return Err(TheoryError::NegativeTarget(omega));
    }
    let spectral = Spectral::new(model, n);
    let (p_sum, s_sum, t_sum) = spectral.resolvent_sums(1.0, omega);
    let bracket = 1.0 - t_sum / spectral.n;
    if bracket <= 0.0 {
        return Err(TheoryError::VacuousBound { omega, bracket });
    }
    let e = bracket * p_sum * p_sum / (s_sum + t_sum / spectral.n);
    Ok(q_function(e.sqrt()))
}

/// The largest signal-to-noise ratio `m^2/sigma^2` attainable at bias `omega`.
pub fn bias_fixed_snr_bound(
    model: &MixtureModel,
    n: usize,
    omega: f64,
) -> Result<f64, TheoryError> {
    if omega < 0.0 {
        return Err(TheoryError::NegativeTarget(omega));
    }
    let spectral = Spectral::new(model, n);
    let (p_sum, s_sum, t_sum) = spectral.resolvent_sums(1.0, omega);
    let bracket = 1.0 - t_sum / spectral.n;
    if bracket <= 0.0 {
        return Err(TheoryError::VacuousBound { omega, bracket });
    }
    Ok(bracket * p_sum * p_sum / (s_sum + t_sum / spectral.n))
}

const CALIBRATION_LAMBDA_LO: f64 = 1e-8;
const CALIBRATION_LAMBDA_HI: f64 = 1e8;
const CALIBRATION_GRID: usize = 41;

/// Finds `lambda` with `lambda/theta(lambda) = target_omega` for this loss.
///
/// Scans a log grid over `[1e-8, 1e8]` with warm-started continuation,
/// verifies monotonicity of the bias ratio along the grid, then bisects.
/// Targets outside the attained range are reported, not extrapolated.
pub fn calibrate_lambda_for_bias(
    model: &MixtureModel,
    loss: LossSpec,
    n: usize,
    target_omega: f64,
) -> Result<f64, TheoryError> {
    if target_omega < 0.0 {
        return Err(TheoryError::NegativeTarget(target_omega));
    }
    let spectral = Spectral::new(model, n);

    if target_omega == 0.0 {
        // Only an existing unregularized solution realizes omega = 0.
        if solve_fixed_point_spectral(&spectral, loss, 0.0, None).is_ok() {
            return Ok(0.0);
        }
    }

    let log_lo = CALIBRATION_LAMBDA_LO.ln();
    let log_hi = CALIBRATION_LAMBDA_HI.ln();
    let mut grid: Vec<(f64, f64)> = Vec::with_capacity(CALIBRATION_GRID);
    let mut warm: Option<[f64; 3]> = None;
    let mut last_error = None;
    for k in 0..CALIBRATION_GRID {
        let lambda = (log_lo + (log_hi - log_lo) * k as f64 / (CALIBRATION_GRID - 1) as f64).exp();
        match solve_fixed_point_spectral(&spectral, loss, lambda, warm) {
            Ok(state) => {
                warm = Some([state.theta, state.eta, state.gamma]);
                grid.push((lambda, state.bias_ratio()));
            }
            Err(e) => last_error = Some(e),
        }
    }
    if grid.is_empty() {
        return Err(last_error.expect("empty grid implies at least one failure"));
    }
    for pair in grid.windows(2) {
        if pair[1].1 < pair[0].1 - 1e-9 * pair[0].1.abs().max(1.0) {
            return Err(TheoryError::NonMonotoneBias {
                lambda_low: pair[0].0,
                lambda_high: pair[1].0,
            });
        }
    }
    let omega_min = grid.first().expect("nonempty").1;
    let omega_max = grid.last().expect("nonempty").1;
    if target_omega < omega_min || target_omega > omega_max {
        return Err(TheoryError::NotAttainable {
            loss: loss.name(),
            target: target_omega,
            omega_min,
            omega_max,
        });
    }

    let tolerance = 1e-6 * target_omega.max(1.0);
    let bracket_index = grid
        .windows(2)
        .position(|pair| pair[0].1 <= target_omega && target_omega <= pair[1].1)
        .expect("target inside attained range");
    let (mut lo, omega_lo) = grid[bracket_index];
    let (mut hi, _) = grid[bracket_index + 1];
    if (omega_lo - target_omega).abs() <= tolerance {
        return Ok(lo);
    }
    let mut warm = None;
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        let state = solve_fixed_point_spectral(&spectral, loss, mid, warm)?;
        warm = Some([state.theta, state.eta, state.gamma]);
        let omega = state.bias_ratio();
        if (omega - target_omega).abs() <= tolerance {
            return Ok(mid);
        }
        if omega < target_omega {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(TheoryError::NotAttainable {
        loss: loss.name(),
        target: target_omega,
        omega_min,
        omega_max,
    })
}
