//! Smooth convex margin losses, their proximal mapping, and the residual map.
//!
//! The proximal mapping `g_{k}(t)` inverts `a -> a + k*l'(a)`; since the
//! derivative of that map is `1 + k*l''(a) >= 1`, the inverse is well defined
//! for every `k > 0` and a bracketed Newton solve is globally safe. The
//! residual map is `h(t) = (g(t) - t)/k = -l'(g(t))`; the second form is used
//! internally because it stays exact as `k -> 0`.
//!
//! Smoothed variants of non-differentiable losses can be added as new
//! variants without touching the solver or theory code; only value/deriv
//! evaluations and an optional closed-form prox are required.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("unknown loss name {0:?} (expected logistic, square, exponential or square_root)")]
    UnknownName(String),
    #[error("prox requires kappa > 0, got {0}")]
    NonPositiveKappa(f64),
    #[error("prox solve did not reach tolerance for {loss} at kappa={kappa}, t={t} (residual {residual:.3e})")]
    ProxNoConvergence {
        loss: &'static str,
        kappa: f64,
        t: f64,
        residual: f64,
    },
}

/// A built-in smooth convex loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossSpec {
    /// `ln(1 + e^{-t})`
    Logistic,
    /// `(t - 1)^2 / 2`
    Square,
    /// `e^{-t}`
    Exponential,
    /// `sqrt((t - 1)^2 + 1)`
    SquareRoot,
}

/// Looks up a loss by its config-file name.
pub fn builtin_loss(name: &str) -> Result<LossSpec, LossError> {
    match name {
        "logistic" => Ok(LossSpec::Logistic),
        "square" => Ok(LossSpec::Square),
        "exponential" => Ok(LossSpec::Exponential),
        "square_root" => Ok(LossSpec::SquareRoot),
        other => Err(LossError::UnknownName(other.to_string())),
    }
}

impl LossSpec {
    pub fn name(self) -> &'static str {
        match self {
            Self::Logistic => "logistic",
            Self::Square => "square",
            Self::Exponential => "exponential",
            Self::SquareRoot => "square_root",
        }
    }

    pub const ALL: [LossSpec; 4] = [
        Self::Logistic,
        Self::Square,
        Self::Exponential,
        Self::SquareRoot,
    ];

    pub fn value(self, t: f64) -> f64 {
        match self {
            // ln(1+e^-t) without overflow on either side.
            Self::Logistic => {
                if t >= 0.0 {
                    (-t).exp().ln_1p()
                } else {
                    -t + t.exp().ln_1p()
                }
            }
            Self::Square => 0.5 * (t - 1.0) * (t - 1.0),
            Self::Exponential => (-t).exp(),
            Self::SquareRoot => ((t - 1.0) * (t - 1.0) + 1.0).sqrt(),
        }
    }

    pub fn deriv1(self, t: f64) -> f64 {
        match self {
            Self::Logistic => {
                if t >= 0.0 {
                    let e = (-t).exp();
                    -e / (1.0 + e)
                } else {
                    -1.0 / (1.0 + t.exp())
                }
            }
            Self::Square => t - 1.0,
            Self::Exponential => -(-t).exp(),
            Self::SquareRoot => (t - 1.0) / ((t - 1.0) * (t - 1.0) + 1.0).sqrt(),
        }
    }

    pub fn deriv2(self, t: f64) -> f64 {
        match self {
            Self::Logistic => {
                // sigma(t)(1-sigma(t)) in the underflow-safe |t| form.
                let e = (-t.abs()).exp();
                e / ((1.0 + e) * (1.0 + e))
            }
            Self::Square => 1.0,
            Self::Exponential => (-t).exp(),
            Self::SquareRoot => {
                let s = (t - 1.0) * (t - 1.0) + 1.0;
                1.0 / (s * s.sqrt())
            }
        }
    }

    pub fn has_closed_prox(self) -> bool {
        matches!(self, Self::Square)
    }

    /// Whether the loss keeps decreasing at every margin (`l' < 0` on all of R).
    ///
    /// On separable data the unregularized objective for such a loss has no
    /// minimizer; the ERM solver uses this to certify ill-posedness.
    pub fn strictly_decreasing(self) -> bool {
        matches!(self, Self::Logistic | Self::Exponential)
    }

    /// Proximal mapping: the unique `a` with `a + kappa * l'(a) = t`.
    pub fn prox(self, kappa: f64, t: f64) -> Result<f64, LossError> {
        if !(kappa > 0.0) {
            return Err(LossError::NonPositiveKappa(kappa));
        }
        let tol = 1e-12 * t.abs().max(1.0);
        match self {
            Self::Square => Ok((t + kappa) / (1.0 + kappa)),
            // a - kappa*e^{-a} = t  <=>  a = t + W(kappa*e^{-t}).
            Self::Exponential => Ok(t + lambert_w_of_exp(kappa.ln() - t)),
            // l' in (-1, 0): the root lies in (t, t + kappa).
            Self::Logistic => self.newton_bracketed(kappa, t, t, t + kappa, tol),
            // l' in (-1, 1): the root lies in (t - kappa, t + kappa).
            Self::SquareRoot => self.newton_bracketed(kappa, t, t - kappa, t + kappa, tol),
        }
    }

    /// Residual map `h(t) = (g(t) - t)/kappa = -l'(g(t))`.
    pub fn h_map(self, kappa: f64, t: f64) -> Result<f64, LossError> {
        Ok(-self.deriv1(self.prox(kappa, t)?))
    }

    /// Safeguarded Newton on `f(a) = a + kappa*l'(a) - t` inside `[lo, hi]`.
    fn newton_bracketed(
        self,
        kappa: f64,
        t: f64,
        lo: f64,
        hi: f64,
        tol: f64,
    ) -> Result<f64, LossError> {
        // Cushion the analytic bracket: at extreme arguments f at an endpoint
        // can land on the wrong side of zero by pure roundoff.
        let pad = 1e-6 * (1.0 + t.abs());
        let mut lo = lo - pad;
        let mut hi = hi + pad;
        let f = |a: f64| a + kappa * self.deriv1(a) - t;
        let mut a = t.clamp(lo, hi);
        let mut fa = f(a);
        // Newton with a bisection safeguard: take the Newton point only while
        // it stays inside the bracket and keeps halving the step, otherwise
        // bisect. Guarantees the bracket shrinks geometrically.
        let mut step_old = hi - lo;
        let mut step = step_old;
        for _ in 0..200 {
            if fa.abs() <= tol {
                return Ok(a);
            }
            if fa > 0.0 {
                hi = a;
            } else {
                lo = a;
            }
            let slope = 1.0 + kappa * self.deriv2(a);
            let newton = a - fa / slope;
            let newton_ok =
                newton > lo && newton < hi && (2.0 * fa).abs() <= (step_old * slope).abs();
            step_old = step;
            if newton_ok {
                step = newton - a;
                a = newton;
            } else {
                step = 0.5 * (hi - lo);
                a = lo + step;
            }
            fa = f(a);
        }
        if fa.abs() <= tol * 10.0 {
            return Ok(a);
        }
        Err(LossError::ProxNoConvergence {
            loss: self.name(),
            kappa,
            t,
            residual: fa.abs(),
        })
    }
}

/// Lambert W of `e^z`, valid for any real `z` without forming `e^z`.
///
/// Solves `w + ln w = z` (w > 0). Three regimes keep every intermediate
/// quantity in range: for very negative `z`, `W(e^z) ~ e^z`; for moderate `z`
/// Halley iteration on `w e^w = e^z`; for large `z` Newton on `w + ln w = z`
/// from the asymptotic start `z - ln z`.
fn lambert_w_of_exp(z: f64) -> f64 {
    if z < -36.0 {
        // W(x) = x + O(x^2), and x = e^z < 2e-16.
        return z.exp();
    }
    if z <= 1.0 {
        let x = z.exp();
        // Halley on f(w) = w e^w - x, start on the principal branch.
        let mut w = if x < 1.0 { x * (1.0 - x) } else { 0.5 };
        for _ in 0..50 {
            let ew = w.exp();
            let fw = w * ew - x;
            let denom = ew * (w + 1.0) - (w + 2.0) * fw / (2.0 * w + 2.0);
            let step = fw / denom;
            w -= step;
            if step.abs() <= 1e-15 * w.abs().max(1e-300) {
                break;
            }
        }
        return w;
    }
    // w >= W(e) ~ 0.567, so ln w is tame; phi(w) = w + ln w - z is concave
    // increasing and Newton converges monotonically after the first step.
    let mut w = if z > 3.0 {
        z - z.ln() + z.ln() / z
    } else {
        1.0
    };
    for _ in 0..50 {
        let phi = w + w.ln() - z;
        let step = phi / (1.0 + 1.0 / w);
        w -= step;
        if step.abs() <= 1e-15 * w {
            break;
        }
    }
    w
}
