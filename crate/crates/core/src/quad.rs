//! Composite Gauss-Legendre quadrature with panels split at breakpoints, so
//! integrand kinks at impulse times or at the kernel diagonal never lie
//! inside a panel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gauss-Legendre rule on the reference interval [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Nodes and weights by Newton iteration on the Legendre polynomial.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "quadrature rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = (n + 1) / 2;
        for i in 0..m {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_eval(n, x);
                dp = d;
                let dx = -p / d;
                x += dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x.abs();
            nodes[n - 1 - i] = x.abs();
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
            let (_, d) = legendre_eval(n, 0.0);
            weights[n / 2] = 2.0 / (d * d);
        }
        GaussLegendre { nodes, weights }
    }

    /// Nodes mapped to [a, b] together with scaled weights.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    /// Integrate a scalar function over [a, b] with a single panel.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre_eval(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = if (x * x - 1.0).abs() > f64::EPSILON {
        n as f64 * (x * p1 - p0) / (x * x - 1.0)
    } else {
        // endpoint derivative of P_n
        x.signum().powi(n as i32 + 1) * n as f64 * (n as f64 + 1.0) / 2.0
    };
    (p1, dp)
}

/// Configuration of the composite quadrature used throughout the crate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct QuadratureConfig {
    /// Gauss-Legendre nodes per panel.
    pub nodes_per_panel: usize,
    /// Maximum panel width as a fraction of the period.
    pub max_panel_fraction: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            nodes_per_panel: 8,
            max_panel_fraction: 0.25,
        }
    }
}

/// Split [a, b] into panels bounded by the sorted breakpoints strictly inside
/// (a, b) and further subdivided so no panel exceeds `max_width`.
pub fn panels(a: f64, b: f64, breakpoints: &[f64], max_width: f64) -> Result<Vec<(f64, f64)>> {
    if b < a {
        return Err(Error::ReversedInterval { s: a, t: b });
    }
    if !(max_width > 0.0) {
        return Err(Error::QuadratureFailure {
            detail: format!("non-positive panel width {max_width}"),
        });
    }
    let mut cuts = vec![a];
    for &p in breakpoints {
        if p > a && p < b {
            cuts.push(p);
        }
    }
    cuts.push(b);
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.dedup();
    let mut out = Vec::new();
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let pieces = ((hi - lo) / max_width).ceil().max(1.0) as usize;
        for k in 0..pieces {
            let p0 = lo + (hi - lo) * k as f64 / pieces as f64;
            let p1 = lo + (hi - lo) * (k + 1) as f64 / pieces as f64;
            out.push((p0, p1));
        }
    }
    Ok(out)
}
