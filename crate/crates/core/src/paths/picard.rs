//! Empirical contraction of the Picard map
//! `A u(t) = u₀ + λ ∫_a^t (s-a)^{α-1} σ(u(s)) dW_s`
//! in the weighted mean-square norm `sup_t a(t) E|u(t)|²`,
//! `a(t) = exp(-β (t-a)^{2α-1} / (2α-1))`.

use rayon::prelude::*;
use serde::Serialize;

use super::{KernelWeights, PathError, PathNoise, SigmaSpec, SimulationConfig};
use crate::calculus::{weight_e, Regime, WeightedNormParams};
use crate::reduce::{pairwise_reduce, RunningStats, BLOCK_PATHS};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionTrace {
    /// `d_k = ‖A^{k+1}u₀ - A^k u₀‖²` for `k = 0..n_iterations`.
    pub distances: Vec<f64>,
    /// `(λ Lip_σ)² / β`; below one the map is a contraction.
    pub factor: f64,
    pub beta_norm: f64,
}

impl ContractionTrace {
    pub fn hypothesis_holds(&self) -> bool {
        self.factor < 1.0
    }

    /// `d_{k+1}/d_k`; `None` where `d_k` is zero.
    pub fn ratios(&self) -> Vec<Option<f64>> {
        self.distances
            .windows(2)
            .map(|d| (d[0] > 0.0).then(|| d[1] / d[0]))
            .collect()
    }
}

/// Iterate the Picard map `n_iterations` times from `u⁽⁰⁾ ≡ u₀`, every iterate
/// driven by the same noise array, and estimate the weighted distance between
/// consecutive iterates.
pub fn picard_contraction_demo(
    config: &SimulationConfig,
    sigma: &SigmaSpec,
    beta_norm: f64,
    n_iterations: usize,
) -> Result<ContractionTrace, PathError> {
    config.validate()?;
    if config.alpha.regime() != Regime::Supercritical {
        return Err(PathError::RequiresSupercritical(config.alpha.value()));
    }
    if n_iterations < 2 {
        return Err(PathError::InvalidParameter(format!("n_iterations must be >= 2, got {n_iterations}")));
    }
    let params = WeightedNormParams::new(beta_norm, config.alpha.isometry_power())
        .map_err(|e| PathError::InvalidParameter(e.to_string()))?;

    let grid = config.grid();
    let weights = KernelWeights::new(config.alpha, config.window.start(), &grid)?;
    let n_points = grid.len();
    let n_blocks = config.n_paths.div_ceil(BLOCK_PATHS);

    let blocks: Vec<Vec<RunningStats>> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut stats = vec![RunningStats::default(); n_iterations * n_points];
            let mut z = vec![0.0; weights.len()];
            let mut prev = vec![0.0; n_points];
            let mut next = vec![0.0; n_points];
            let paths = b * BLOCK_PATHS..((b + 1) * BLOCK_PATHS).min(config.n_paths);
            for p in paths {
                let mut noise = PathNoise::new(config.master_seed, p as u64);
                z.iter_mut().for_each(|zn| *zn = noise.next_normal());
                prev.fill(config.u0);
                for k in 0..n_iterations {
                    let mut integral = 0.0;
                    next[0] = config.u0;
                    for n in 0..weights.len() {
                        integral += sigma.eval(prev[n]) * weights.as_slice()[n] * z[n];
                        next[n + 1] = config.u0 + config.lambda * integral;
                    }
                    let row = &mut stats[k * n_points..(k + 1) * n_points];
                    for ((s, &x), &y) in row.iter_mut().zip(&next).zip(&prev) {
                        s.push((x - y) * (x - y));
                    }
                    std::mem::swap(&mut prev, &mut next);
                }
            }
            stats
        })
        .collect();

    let merged = pairwise_reduce(&blocks, &|l: &Vec<RunningStats>, r: &Vec<RunningStats>| {
        l.iter().zip(r).map(|(x, y)| x.merge(y)).collect()
    })
    .expect("at least one block");

    let a = config.window.start();
    let discount: Vec<f64> = grid.iter().map(|&t| weight_e(t, a, &params)).collect();
    let distances = merged
        .chunks(n_points)
        .map(|row| {
            row.iter()
                .zip(&discount)
                .map(|(s, w)| w * s.mean())
                .fold(0.0, f64::max)
        })
        .collect();

    Ok(ContractionTrace {
        distances,
        factor: (config.lambda * sigma.lip()).powi(2) / beta_norm,
        beta_norm,
    })
}
