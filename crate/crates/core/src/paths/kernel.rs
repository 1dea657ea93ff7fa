//! Time grids and variance-exact kernel weights.
//!
//! The squared kernel `(s-a)^{2(α-1)}` has primitive
//! `Φ(t) = (t-a)^{p}/p` with `p = 2α-1` (or `ln(t-a)` when `p = 0`). The weight
//! of step `n` is `w_n = sqrt(Φ(t_{n+1}) - Φ(t_n))`, so `λ σ(u_n) w_n Z` has
//! exactly the Itô variance of the frozen-coefficient increment.

use serde::{Deserialize, Serialize};

use super::PathError;
use crate::calculus::Alpha;
use crate::reduce::pairwise_sum;

/// How grid points are distributed over the window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridSpacing {
    /// Uniform in `Φ`: every step carries the same kernel variance `w_n²`.
    #[default]
    Isometric,
    /// Uniform in `t`.
    Uniform,
}

/// `Φ(t)`, the primitive of `(s-a)^{2(α-1)}`; `-∞` at `t = a` when `p ≤ 0`.
pub(crate) fn isometry_primitive(alpha: Alpha, a: f64, t: f64) -> f64 {
    let p = alpha.isometry_power();
    let gap = t - a;
    if p == 0.0 {
        gap.ln()
    } else if p == 1.0 {
        gap
    } else {
        gap.powf(p) / p
    }
}

fn isometry_inverse(alpha: Alpha, a: f64, phi: f64) -> f64 {
    let p = alpha.isometry_power();
    if p == 0.0 {
        a + phi.exp()
    } else if p == 1.0 {
        a + phi
    } else {
        a + (p * phi).powf(1.0 / p)
    }
}

/// `n_steps + 1` strictly increasing points from `t0` to `t_end`, endpoints exact.
pub fn build_grid(alpha: Alpha, a: f64, t0: f64, t_end: f64, n_steps: usize, spacing: GridSpacing) -> Vec<f64> {
    let n = n_steps as f64;
    let mut grid: Vec<f64> = match spacing {
        GridSpacing::Uniform => (0..=n_steps).map(|i| t0 + (t_end - t0) * (i as f64 / n)).collect(),
        GridSpacing::Isometric => {
            let lo = isometry_primitive(alpha, a, t0);
            let hi = isometry_primitive(alpha, a, t_end);
            (0..=n_steps)
                .map(|i| isometry_inverse(alpha, a, lo + (hi - lo) * (i as f64 / n)))
                .collect()
        }
    };
    grid[0] = t0;
    grid[n_steps] = t_end;
    grid
}

/// Per-step standard deviations of the kernel integral.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelWeights {
    w: Vec<f64>,
}

impl KernelWeights {
    pub fn new(alpha: Alpha, a: f64, grid: &[f64]) -> Result<Self, PathError> {
        if grid.len() < 2 {
            return Err(PathError::InvalidGrid("need at least two grid points".into()));
        }
        if grid[0] < a || grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(PathError::InvalidGrid("grid must be strictly increasing from a".into()));
        }
        if grid[0] == a && alpha.isometry_power() <= 0.0 {
            return Err(PathError::SingularFirstStep { alpha: alpha.value() });
        }
        let w = grid
            .windows(2)
            .map(|pair| {
                let var = isometry_primitive(alpha, a, pair[1]) - isometry_primitive(alpha, a, pair[0]);
                var.max(0.0).sqrt()
            })
            .collect();
        Ok(KernelWeights { w })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    /// `Σ w_n²`, which telescopes to `Φ(t_N) - Φ(t_0)`.
    pub fn sum_of_squares(&self) -> f64 {
        let sq: Vec<f64> = self.w.iter().map(|w| w * w).collect();
        pairwise_sum(&sq)
    }
}
