//! Monte Carlo paths of the mild solution
//! `u(t) = u₀ + λ ∫_a^t (s-a)^{α-1} σ(u(s)) dW_s`.
//!
//! Each path follows the explicit scheme `u_{n+1} = u_n + λ σ(u_n) w_n Z_{p,n}`
//! with [`KernelWeights`] `w_n` and counter-based normals `Z_{p,n}`.

mod kernel;
mod noise;
mod picard;
mod sigma;

use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

pub use kernel::{build_grid, GridSpacing, KernelWeights};
pub use noise::{normal_at, PathNoise};
pub use picard::picard_contraction_demo;
pub use sigma::{SigmaKind, SigmaSpec};

use crate::calculus::{Alpha, Regime, TimeWindow};

pub(crate) use kernel::isometry_primitive;

/// Paths whose magnitude exceeds this are flagged as overflowed.
pub const DEFAULT_OVERFLOW_THRESHOLD: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PathError {
    #[error("invalid sigma: {0}")]
    InvalidSigma(String),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("kernel not square integrable at a for alpha={alpha}; use a truncated start")]
    SingularFirstStep { alpha: f64 },
    #[error("requires alpha > 1/2, got {0}")]
    RequiresSupercritical(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Where integration begins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum StartRule {
    /// `t₀ = a`; requires `α > 1/2`.
    AtOrigin,
    /// `t₀ = a + eps`. Only meant to illustrate the `α ≤ 1/2` regimes, where
    /// the kernel is not square integrable at `a`.
    Truncated { eps: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationConfig {
    pub alpha: Alpha,
    pub window: TimeWindow,
    pub lambda: f64,
    pub u0: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    pub master_seed: u64,
    pub spacing: GridSpacing,
    pub start: StartRule,
    pub overflow_threshold: f64,
}

impl SimulationConfig {
    /// Config starting at `a` on the isometric grid.
    pub fn new(
        alpha: Alpha,
        window: TimeWindow,
        lambda: f64,
        u0: f64,
        n_steps: usize,
        n_paths: usize,
        master_seed: u64,
    ) -> Result<Self, PathError> {
        let config = SimulationConfig {
            alpha,
            window,
            lambda,
            u0,
            n_steps,
            n_paths,
            master_seed,
            spacing: GridSpacing::Isometric,
            start: StartRule::AtOrigin,
            overflow_threshold: DEFAULT_OVERFLOW_THRESHOLD,
        };
        config.validate()?;
        Ok(config)
    }

    /// Start at `a + eps`; `None` picks `(T-a)/n_steps²`.
    pub fn with_truncated_start(mut self, eps: Option<f64>) -> Result<Self, PathError> {
        let eps = eps.unwrap_or(self.window.length() / (self.n_steps as f64).powi(2));
        self.start = StartRule::Truncated { eps };
        self.validate()?;
        Ok(self)
    }

    pub fn with_spacing(mut self, spacing: GridSpacing) -> Self {
        self.spacing = spacing;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Result<Self, PathError> {
        self.lambda = lambda;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), PathError> {
        let bad = |msg: String| Err(PathError::InvalidConfig(msg));
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.u0 >= 0.0 && self.u0.is_finite()) {
            return bad(format!("u0 must be finite and non-negative, got {}", self.u0));
        }
        if self.n_steps == 0 {
            return bad("n_steps must be at least 1".into());
        }
        if self.n_paths == 0 {
            return bad("n_paths must be at least 1".into());
        }
        if !(self.overflow_threshold > 0.0) {
            return bad("overflow_threshold must be positive".into());
        }
        match self.start {
            StartRule::AtOrigin => {
                if self.alpha.regime() != Regime::Supercritical {
                    return Err(PathError::SingularFirstStep { alpha: self.alpha.value() });
                }
            }
            StartRule::Truncated { eps } => {
                if !(eps > 0.0 && eps < self.window.length()) {
                    return bad(format!("truncation eps must lie in (0, T-a), got {eps}"));
                }
            }
        }
        if self.grid().windows(2).any(|w| !(w[1] > w[0])) {
            return bad(format!(
                "{:?} grid with {} steps has coincident points in floating point; use fewer steps or uniform spacing",
                self.spacing, self.n_steps
            ));
        }
        Ok(())
    }

    pub fn start_time(&self) -> f64 {
        match self.start {
            StartRule::AtOrigin => self.window.start(),
            StartRule::Truncated { eps } => self.window.start() + eps,
        }
    }

    pub fn grid(&self) -> Vec<f64> {
        build_grid(
            self.alpha,
            self.window.start(),
            self.start_time(),
            self.window.end(),
            self.n_steps,
            self.spacing,
        )
    }

    pub fn kernel_weights(&self) -> Result<KernelWeights, PathError> {
        KernelWeights::new(self.alpha, self.window.start(), &self.grid())
    }
}

/// Run one path into `out` (length `weights.len() + 1`). Returns the first
/// step at which `|u|` left `[0, threshold]`; that entry and all later ones are NaN.
pub(crate) fn run_path(
    sigma: &SigmaSpec,
    lambda: f64,
    u0: f64,
    weights: &[f64],
    threshold: f64,
    noise: &mut PathNoise,
    out: &mut [f64],
) -> Option<usize> {
    debug_assert_eq!(out.len(), weights.len() + 1);
    out[0] = u0;
    let mut u = u0;
    for (n, &w) in weights.iter().enumerate() {
        let z = noise.next_normal();
        u += lambda * sigma.eval(u) * w * z;
        if !(u.abs() <= threshold) {
            out[n + 1..].fill(f64::NAN);
            return Some(n + 1);
        }
        out[n + 1] = u;
    }
    None
}

/// Immutable set of simulated paths.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    grid: Vec<f64>,
    values: Vec<f64>,
    overflow: Vec<Option<usize>>,
    config: SimulationConfig,
}

impl PathEnsemble {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.overflow.len()
    }

    pub fn n_points(&self) -> usize {
        self.grid.len()
    }

    pub fn config(&self) -> &SimulationConfig {
        &self.config
    }

    /// States of path `p` on the grid; NaN from its overflow step on.
    pub fn path(&self, p: usize) -> &[f64] {
        let n = self.n_points();
        &self.values[p * n..(p + 1) * n]
    }

    pub fn paths(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.n_points())
    }

    pub fn overflow_step(&self, p: usize) -> Option<usize> {
        self.overflow[p]
    }

    pub fn overflow_steps(&self) -> &[Option<usize>] {
        &self.overflow
    }

    /// Long-format CSV `path_id,step,t,u,overflow_flag`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "path_id,step,t,u,overflow_flag")?;
        for (p, row) in self.paths().enumerate() {
            let ovf = self.overflow[p];
            for (n, (&t, &u)) in self.grid.iter().zip(row).enumerate() {
                let flag = u8::from(ovf.is_some_and(|s| n >= s));
                writeln!(out, "{p},{n},{t:.16e},{u:.16e},{flag}")?;
            }
        }
        Ok(())
    }
}

/// Simulate every path of `config`. Bitwise reproducible for a fixed seed
/// regardless of the rayon pool size.
pub fn simulate_ensemble(config: &SimulationConfig, sigma: &SigmaSpec) -> Result<PathEnsemble, PathError> {
    config.validate()?;
    let grid = config.grid();
    let weights = KernelWeights::new(config.alpha, config.window.start(), &grid)?;
    let n_points = grid.len();
    let mut values = vec![0.0; config.n_paths * n_points];
    let overflow: Vec<Option<usize>> = values
        .par_chunks_mut(n_points)
        .enumerate()
        .map(|(p, row)| {
            let mut noise = PathNoise::new(config.master_seed, p as u64);
            run_path(
                sigma,
                config.lambda,
                config.u0,
                weights.as_slice(),
                config.overflow_threshold,
                &mut noise,
                row,
            )
        })
        .collect();
    Ok(PathEnsemble { grid, values, overflow, config: config.clone() })
}

/// `t ↦ u₀² exp(λ² L² (t-a)^{2α-1} / (2α-1))`, the second moment of the mild
/// solution for `σ(x) = L x`.
pub fn exact_linear_second_moment(config: &SimulationConfig, l: f64) -> Result<impl Fn(f64) -> f64, PathError> {
    if config.alpha.regime() != Regime::Supercritical {
        return Err(PathError::RequiresSupercritical(config.alpha.value()));
    }
    if !(l > 0.0 && l.is_finite()) {
        return Err(PathError::InvalidParameter(format!("L must be positive, got {l}")));
    }
    let alpha = config.alpha;
    let a = config.window.start();
    let rate = (config.lambda * l).powi(2);
    let m0 = config.u0 * config.u0;
    Ok(move |t: f64| m0 * (rate * isometry_primitive(alpha, a, t)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(alpha: f64, n_steps: usize, n_paths: usize) -> SimulationConfig {
        SimulationConfig::new(
            Alpha::new_or_classical(alpha).unwrap(),
            TimeWindow::new(0.0, 1.0).unwrap(),
            1.0,
            1.0,
            n_steps,
            n_paths,
            99,
        )
        .unwrap()
    }

    #[test]
    fn zero_sigma_keeps_paths_constant() {
        let ens = simulate_ensemble(&config(0.75, 32, 50), &SigmaSpec::zero()).unwrap();
        assert!(ens.paths().all(|row| row.iter().all(|&u| u == 1.0)));
    }

    #[test]
    fn zero_is_absorbing_for_linear_sigma() {
        let mut cfg = config(0.75, 32, 50);
        cfg.u0 = 0.0;
        let ens = simulate_ensemble(&cfg, &SigmaSpec::linear(2.0).unwrap()).unwrap();
        assert!(ens.paths().all(|row| row.iter().all(|&u| u == 0.0)));
    }

    #[test]
    fn first_column_is_initial_value() {
        let ens = simulate_ensemble(&config(0.8, 16, 20), &SigmaSpec::linear(1.0).unwrap()).unwrap();
        assert!(ens.paths().all(|row| row[0] == 1.0));
        assert!(ens.grid().windows(2).all(|w| w[1] > w[0]));
        assert_eq!(ens.grid()[0], 0.0);
        assert_eq!(*ens.grid().last().unwrap(), 1.0);
    }

    #[test]
    fn path_is_reproducible_from_noise_index() {
        let cfg = config(0.75, 8, 3);
        let sigma = SigmaSpec::linear(1.0).unwrap();
        let ens = simulate_ensemble(&cfg, &sigma).unwrap();
        let w = cfg.kernel_weights().unwrap();
        let mut u = cfg.u0;
        for (n, &wn) in w.as_slice().iter().enumerate() {
            u += cfg.lambda * sigma.eval(u) * wn * normal_at(cfg.master_seed, 2, n as u64);
            assert_eq!(u.to_bits(), ens.path(2)[n + 1].to_bits());
        }
    }

    #[test]
    fn overflow_is_flagged_not_fatal() {
        let mut cfg = config(0.75, 64, 200);
        cfg.u0 = 5.0;
        cfg.overflow_threshold = 50.0;
        let ens = simulate_ensemble(&cfg, &SigmaSpec::superlinear(1.0, 2.0).unwrap()).unwrap();
        let flagged: Vec<_> = ens.overflow_steps().iter().flatten().collect();
        assert!(!flagged.is_empty());
        for p in 0..ens.n_paths() {
            let row = ens.path(p);
            match ens.overflow_step(p) {
                Some(s) => {
                    assert!(s >= 1);
                    assert!(row[..s].iter().all(|u| u.is_finite() && u.abs() <= 50.0));
                    assert!(row[s..].iter().all(|u| u.is_nan()));
                }
                None => assert!(row.iter().all(|u| u.is_finite())),
            }
        }
    }

    #[test]
    fn config_validation() {
        let alpha = Alpha::new(0.4).unwrap();
        let w = TimeWindow::new(0.0, 1.0).unwrap();
        assert!(matches!(
            SimulationConfig::new(alpha, w, 1.0, 1.0, 10, 10, 0),
            Err(PathError::SingularFirstStep { .. })
        ));
        let a75 = Alpha::new(0.75).unwrap();
        assert!(SimulationConfig::new(a75, w, 0.0, 1.0, 10, 10, 0).is_err());
        assert!(SimulationConfig::new(a75, w, 1.0, -1.0, 10, 10, 0).is_err());
        assert!(SimulationConfig::new(a75, w, 1.0, 1.0, 0, 10, 0).is_err());
        assert!(SimulationConfig::new(a75, w, 1.0, 1.0, 10, 0, 0).is_err());
        let near_half = Alpha::new(0.505).unwrap();
        let w2 = TimeWindow::new(2.0, 3.0).unwrap();
        assert!(matches!(
            SimulationConfig::new(near_half, w2, 1.0, 1.0, 600, 10, 0),
            Err(PathError::InvalidConfig(_))
        ));
        let uniform = SimulationConfig::new(a75, w2, 1.0, 1.0, 600, 10, 0).unwrap();
        let mut cfg = uniform.with_spacing(GridSpacing::Uniform);
        cfg.alpha = near_half;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn truncated_start_enables_subcritical_runs() {
        let alpha = Alpha::new(0.3).unwrap();
        let w = TimeWindow::new(0.0, 1.0).unwrap();
        let mut cfg = SimulationConfig::new(Alpha::new(0.75).unwrap(), w, 1.0, 1.0, 10, 10, 0).unwrap();
        cfg.alpha = alpha;
        let cfg = cfg.with_truncated_start(None).unwrap();
        assert_eq!(cfg.start, StartRule::Truncated { eps: 0.01 });
        assert_eq!(cfg.grid()[0], 0.01);
        let ens = simulate_ensemble(&cfg, &SigmaSpec::linear(1.0).unwrap()).unwrap();
        assert_eq!(ens.n_points(), 11);
    }

    #[test]
    fn exact_moment_examples() {
        let cfg = config(0.75, 8, 1);
        let m = exact_linear_second_moment(&cfg, 1.0).unwrap();
        assert_eq!(m(0.0), 1.0);
        assert!((m(1.0) - 2.0f64.exp()).abs() < 1e-14);
        let mut small = cfg.clone();
        small.lambda = 1e-9;
        let m = exact_linear_second_moment(&small, 1.0).unwrap();
        assert!((m(1.0) - 1.0).abs() < 1e-15);
        let mut bad = cfg;
        bad.alpha = Alpha::new(0.5).unwrap();
        assert!(exact_linear_second_moment(&bad, 1.0).is_err());
    }

    #[test]
    fn ensemble_csv_schema() {
        let ens = simulate_ensemble(&config(0.75, 2, 2), &SigmaSpec::zero()).unwrap();
        let mut buf = Vec::new();
        ens.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "path_id,step,t,u,overflow_flag");
        assert_eq!(lines.len(), 1 + 2 * 3);
        assert_eq!(lines[1], "0,0,0.0000000000000000e0,1.0000000000000000e0,0");
    }
}
