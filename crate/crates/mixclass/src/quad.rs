//! Gauss-Hermite quadrature for expectations over a scalar Gaussian.
//!
//! Rules are built by the Golub-Welsch eigendecomposition of the Jacobi
//! matrix; the shared 127-node rule integrates the smooth residual maps used
//! by the theory engine to below 1e-10.

use nalgebra::DMatrix;
use std::sync::OnceLock;

/// A Gauss-Hermite rule: integrates `f(x) e^{-x^2}` exactly for polynomials
/// of degree `2n - 1`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Builds the n-point rule from the Jacobi matrix eigensystem.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "quadrature needs at least one node");
        let mut jacobi = DMatrix::zeros(n, n);
        for k in 1..n {
            // Recurrence coefficient for the (physicists') Hermite family.
            let b = (k as f64 / 2.0).sqrt();
            jacobi[(k - 1, k)] = b;
            jacobi[(k, k - 1)] = b;
        }
        let eig = jacobi.symmetric_eigen();
        let sqrt_pi = std::f64::consts::PI.sqrt();
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|j| {
                let first = eig.eigenvectors[(0, j)];
                (eig.eigenvalues[j], sqrt_pi * first * first)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        GaussHermite {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `E[f(R)]` for `R ~ N(m, sigma^2)` via `r = m + sigma*sqrt(2)*x`.
    pub fn expect(&self, m: f64, sigma: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let scale = sigma * std::f64::consts::SQRT_2;
        let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
        let mut acc = 0.0;
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(m + scale * x);
        }
        acc * inv_sqrt_pi
    }
}

/// The shared 127-node rule.
pub fn gh127() -> &'static GaussHermite {
    static RULE: OnceLock<GaussHermite> = OnceLock::new();
    RULE.get_or_init(|| GaussHermite::new(127))
}

/// Reference integrator: composite trapezoid of `f` against the N(m, sigma^2)
/// density over `m +- half_width*sigma`. Converges fast for smooth bounded
/// integrands thanks to the Gaussian tails; used to sanity-check quadrature.
pub fn trapezoid_expect(
    m: f64,
    sigma: f64,
    half_width: f64,
    steps: usize,
    mut f: impl FnMut(f64) -> f64,
) -> f64 {
    assert!(steps >= 2);
    let lo = m - half_width * sigma;
    let hi = m + half_width * sigma;
    let h = (hi - lo) / steps as f64;
    let density = |r: f64| {
        let u = (r - m) / sigma;
        (-0.5 * u * u).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
    };
    let mut acc = 0.5 * (f(lo) * density(lo) + f(hi) * density(hi));
    for k in 1..steps {
        let r = lo + h * k as f64;
        acc += f(r) * density(r);
    }
    acc * h
}
