//! Second-moment estimation and growth-rate regression.
//!
//! For Lipschitz σ with `L_σ |x| ≤ |σ(x)|` the second moment is sandwiched as
//! `u₀² e^{c₄ Φ(t)} ≤ E|u(t)|² ≤ u₀² e^{c₂ Φ(t)}`, with
//! `Φ(t) = (t-a)^{2α-1}/(2α-1)`, `c₄ = λ² L_σ²` and `c₂ = λ² Lip_σ²`. The fits
//! here regress `log m2` on `(t-a)^{2α-1}` (slope `c/(2α-1)`) or on `λ²`.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::calculus::{Alpha, Regime};
use crate::paths::{isometry_primitive, run_path, KernelWeights, PathEnsemble, PathError, PathNoise, SigmaSpec, SimulationConfig};
use crate::reduce::{pairwise_reduce, RunningStats, BLOCK_PATHS};

/// Minimum number of points a fit window must contain.
pub const MIN_FIT_POINTS: usize = 8;
/// Minimum number of λ values for the λ-fit.
pub const MIN_LAMBDA_POINTS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MomentError {
    #[error(transparent)]
    Path(#[from] PathError),
    #[error("requires alpha > 1/2, got {0}")]
    RequiresSupercritical(f64),
    #[error("fit_fraction must lie in (0, 1], got {0}")]
    InvalidFraction(f64),
    #[error("insufficient points: have {have}, need at least {need}")]
    InsufficientPoints { have: usize, need: usize },
    #[error("non-positive or non-finite second moment {m2} at t={t}")]
    NonPositiveMoment { t: f64, m2: f64 },
    #[error("majority of paths censored at t={t} ({censored} of {n_paths})")]
    CensoredMajority { t: f64, censored: u64, n_paths: usize },
    #[error("lambda values must be strictly increasing")]
    LambdaNotIncreasing,
    #[error("configs differ in more than lambda: {0}")]
    InconsistentConfigs(String),
    #[error("t_eval={t} outside (a, T] = ({a}, {t_end}]")]
    TimeOutOfWindow { t: f64, a: f64, t_end: f64 },
}

/// Per-grid-point Monte Carlo statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSeries {
    /// Start `a` of the time window (not necessarily `grid[0]`).
    pub origin: f64,
    pub grid: Vec<f64>,
    /// Sample mean of `u²` over non-censored paths.
    pub m2: Vec<f64>,
    /// Standard error of `m2`; `+∞` with fewer than two live paths.
    pub stderr: Vec<f64>,
    /// Sample mean of `u`, for the martingale check.
    pub mean: Vec<f64>,
    pub mean_stderr: Vec<f64>,
    pub n_paths: usize,
    /// Number of paths flagged as overflowed at or before each point.
    pub censored: Vec<u64>,
    /// First index at which every path is censored; `m2` is `+∞` from there on.
    pub degenerate_from: Option<usize>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct StepStats {
    u: RunningStats,
    sq: RunningStats,
    censored: u64,
}

impl StepStats {
    fn merge(&self, other: &StepStats) -> StepStats {
        StepStats {
            u: self.u.merge(&other.u),
            sq: self.sq.merge(&other.sq),
            censored: self.censored + other.censored,
        }
    }
}

fn push_row(stats: &mut [StepStats], row: &[f64], overflow: Option<usize>) {
    let live = overflow.unwrap_or(row.len());
    for (s, &u) in stats[..live].iter_mut().zip(row) {
        s.u.push(u);
        s.sq.push(u * u);
    }
    for s in &mut stats[live..] {
        s.censored += 1;
    }
}

fn merge_blocks(blocks: &[Vec<StepStats>]) -> Vec<StepStats> {
    pairwise_reduce(blocks, &|l: &Vec<StepStats>, r: &Vec<StepStats>| {
        l.iter().zip(r).map(|(x, y)| x.merge(y)).collect()
    })
    .expect("ensembles are non-empty")
}

impl MomentSeries {
    fn from_stats(origin: f64, grid: Vec<f64>, stats: &[StepStats], n_paths: usize) -> Self {
        let mut series = MomentSeries {
            origin,
            m2: Vec::with_capacity(grid.len()),
            stderr: Vec::with_capacity(grid.len()),
            mean: Vec::with_capacity(grid.len()),
            mean_stderr: Vec::with_capacity(grid.len()),
            censored: Vec::with_capacity(grid.len()),
            grid,
            n_paths,
            degenerate_from: None,
            warnings: Vec::new(),
        };
        let mut single_live = false;
        for (n, s) in stats.iter().enumerate() {
            series.censored.push(s.censored);
            if s.sq.count() == 0 {
                series.degenerate_from.get_or_insert(n);
                series.m2.push(f64::INFINITY);
                series.stderr.push(f64::INFINITY);
                series.mean.push(f64::NAN);
                series.mean_stderr.push(f64::INFINITY);
                continue;
            }
            single_live |= s.sq.count() == 1;
            series.m2.push(s.sq.mean());
            series.stderr.push(s.sq.standard_error().unwrap_or(f64::INFINITY));
            series.mean.push(s.u.mean());
            series.mean_stderr.push(s.u.standard_error().unwrap_or(f64::INFINITY));
        }
        if single_live {
            series.warnings.push("fewer than two live paths: standard error reported as +inf".into());
        }
        if let Some(n) = series.degenerate_from {
            series.warnings.push(format!("all paths censored from t={}", series.grid[n]));
        }
        series
    }

    /// Noise-free series `m2 = f(t)` with zero standard error.
    pub fn from_exact(origin: f64, grid: Vec<f64>, f: impl Fn(f64) -> f64) -> Self {
        let m2: Vec<f64> = grid.iter().map(|&t| f(t)).collect();
        let n = grid.len();
        MomentSeries {
            origin,
            mean: vec![f64::NAN; n],
            mean_stderr: vec![0.0; n],
            stderr: vec![0.0; n],
            censored: vec![0; n],
            m2,
            grid,
            n_paths: usize::MAX,
            degenerate_from: None,
            warnings: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Lower bound on the full-ensemble second moment at `n`: censored paths
    /// contribute `overflow_threshold²` each, live paths their own `u²`.
    pub fn censoring_corrected_m2(&self, n: usize, overflow_threshold: f64) -> f64 {
        let live = self.n_paths as f64 - self.censored[n] as f64;
        let live_sum = if live > 0.0 { self.m2[n] * live } else { 0.0 };
        (live_sum + self.censored[n] as f64 * overflow_threshold * overflow_threshold) / self.n_paths as f64
    }

    /// CSV with header `t,m2,stderr,censored`, floats at 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,m2,stderr,censored")?;
        for n in 0..self.len() {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{}",
                self.grid[n], self.m2[n], self.stderr[n], self.censored[n]
            )?;
        }
        Ok(())
    }
}

/// Sample second moment of a stored ensemble.
pub fn estimate_second_moment(ensemble: &PathEnsemble) -> MomentSeries {
    let n_points = ensemble.n_points();
    let blocks: Vec<Vec<StepStats>> = (0..ensemble.n_paths().div_ceil(BLOCK_PATHS))
        .into_par_iter()
        .map(|b| {
            let mut stats = vec![StepStats::default(); n_points];
            for p in b * BLOCK_PATHS..((b + 1) * BLOCK_PATHS).min(ensemble.n_paths()) {
                push_row(&mut stats, ensemble.path(p), ensemble.overflow_step(p));
            }
            stats
        })
        .collect();
    MomentSeries::from_stats(
        ensemble.config().window.start(),
        ensemble.grid().to_vec(),
        &merge_blocks(&blocks),
        ensemble.n_paths(),
    )
}

/// Simulate and reduce block by block without storing the ensemble.
///
/// Bitwise identical to `estimate_second_moment(&simulate_ensemble(..))`.
pub fn simulate_second_moment(config: &SimulationConfig, sigma: &SigmaSpec) -> Result<MomentSeries, MomentError> {
    config.validate()?;
    let grid = config.grid();
    let weights = KernelWeights::new(config.alpha, config.window.start(), &grid)?;
    let n_points = grid.len();
    let blocks: Vec<Vec<StepStats>> = (0..config.n_paths.div_ceil(BLOCK_PATHS))
        .into_par_iter()
        .map(|b| {
            let mut stats = vec![StepStats::default(); n_points];
            let mut row = vec![0.0; n_points];
            for p in b * BLOCK_PATHS..((b + 1) * BLOCK_PATHS).min(config.n_paths) {
                let mut noise = PathNoise::new(config.master_seed, p as u64);
                let ovf = run_path(
                    sigma,
                    config.lambda,
                    config.u0,
                    weights.as_slice(),
                    config.overflow_threshold,
                    &mut noise,
                    &mut row,
                );
                push_row(&mut stats, &row, ovf);
            }
            stats
        })
        .collect();
    Ok(MomentSeries::from_stats(config.window.start(), grid, &merge_blocks(&blocks), config.n_paths))
}

/// Theoretical interval for a growth slope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateBand {
    pub lower: f64,
    pub upper: f64,
}

impl RateBand {
    /// `[λ² L_σ², λ² Lip_σ²] / (2α-1)`: slope of `log m2` against `(t-a)^{2α-1}`.
    pub fn in_time(alpha: Alpha, lambda: f64, sigma: &SigmaSpec) -> RateBand {
        let p = alpha.isometry_power();
        RateBand {
            lower: (lambda * sigma.lower()).powi(2) / p,
            upper: (lambda * sigma.lip()).powi(2) / p,
        }
    }

    /// `[L_σ², Lip_σ²] · (t-a)^{2α-1}/(2α-1)`: slope of `log m2(t)` against `λ²`.
    pub fn in_lambda(alpha: Alpha, a: f64, t: f64, sigma: &SigmaSpec) -> RateBand {
        let phi = isometry_primitive(alpha, a, t);
        RateBand { lower: sigma.lower().powi(2) * phi, upper: sigma.lip().powi(2) * phi }
    }

    pub fn contains(&self, x: f64, tolerance: f64) -> bool {
        x >= self.lower - tolerance && x <= self.upper + tolerance
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Abscissa {
    /// `(t-a)^{2α-1}`
    TimePower,
    /// `λ²`
    LambdaSquared,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub slope_stderr: f64,
    pub theory_lower: f64,
    pub theory_upper: f64,
    /// Range of the underlying variable (`t` or `λ`) used by the fit.
    pub fit_window: (f64, f64),
    pub n_points: usize,
    pub abscissa: Abscissa,
}

impl GrowthFit {
    pub fn band(&self) -> RateBand {
        RateBand { lower: self.theory_lower, upper: self.theory_upper }
    }
}

struct Ols {
    slope: f64,
    intercept: f64,
    r_squared: f64,
    slope_stderr: f64,
}

fn ols(x: &[f64], y: &[f64]) -> Ols {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        let dx = xi - mx;
        let dy = yi - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = x.iter().zip(y).map(|(&xi, &yi)| (yi - intercept - slope * xi).powi(2)).sum();
    let r_squared = if syy > 0.0 { (1.0 - ssr / syy).clamp(0.0, 1.0) } else { 1.0 };
    let slope_stderr = if x.len() > 2 { (ssr / (n - 2.0) / sxx).sqrt() } else { f64::INFINITY };
    Ols { slope, intercept, r_squared, slope_stderr }
}

/// Regress `log m2` on `(t-a)^{2α-1}` over the trailing `fit_fraction` of the grid.
pub fn fit_growth_in_t(series: &MomentSeries, alpha: Alpha, band: RateBand, fit_fraction: f64) -> Result<GrowthFit, MomentError> {
    if alpha.regime() != Regime::Supercritical {
        return Err(MomentError::RequiresSupercritical(alpha.value()));
    }
    if !(fit_fraction > 0.0 && fit_fraction <= 1.0) {
        return Err(MomentError::InvalidFraction(fit_fraction));
    }
    let len = series.len();
    let start = ((1.0 - fit_fraction) * (len.saturating_sub(1)) as f64).floor() as usize;
    let window = start..len;
    if window.len() < MIN_FIT_POINTS {
        return Err(MomentError::InsufficientPoints { have: window.len(), need: MIN_FIT_POINTS });
    }
    let p = alpha.isometry_power();
    let mut x = Vec::with_capacity(window.len());
    let mut y = Vec::with_capacity(window.len());
    for n in window.clone() {
        let (t, m2) = (series.grid[n], series.m2[n]);
        if !(m2 > 0.0 && m2.is_finite()) {
            return Err(MomentError::NonPositiveMoment { t, m2 });
        }
        if series.censored[n] as f64 > 0.5 * series.n_paths as f64 {
            return Err(MomentError::CensoredMajority { t, censored: series.censored[n], n_paths: series.n_paths });
        }
        x.push((t - series.origin).powf(p));
        y.push(m2.ln());
    }
    let fit = ols(&x, &y);
    Ok(GrowthFit {
        slope: fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
        slope_stderr: fit.slope_stderr,
        theory_lower: band.lower,
        theory_upper: band.upper,
        fit_window: (series.grid[window.start], series.grid[len - 1]),
        n_points: x.len(),
        abscissa: Abscissa::TimePower,
    })
}

/// Regress `log m2` on `λ²` for already estimated moments.
pub fn fit_log_moments_in_lambda(lambdas: &[f64], m2: &[f64], band: RateBand) -> Result<GrowthFit, MomentError> {
    if lambdas.len() < MIN_LAMBDA_POINTS || lambdas.len() != m2.len() {
        return Err(MomentError::InsufficientPoints { have: lambdas.len().min(m2.len()), need: MIN_LAMBDA_POINTS });
    }
    if lambdas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(MomentError::LambdaNotIncreasing);
    }
    let x: Vec<f64> = lambdas.iter().map(|l| l * l).collect();
    let mut y = Vec::with_capacity(m2.len());
    for (&l, &m) in lambdas.iter().zip(m2) {
        if !(m > 0.0 && m.is_finite()) {
            return Err(MomentError::NonPositiveMoment { t: l, m2: m });
        }
        y.push(m.ln());
    }
    let fit = ols(&x, &y);
    Ok(GrowthFit {
        slope: fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
        slope_stderr: fit.slope_stderr,
        theory_lower: band.lower,
        theory_upper: band.upper,
        fit_window: (lambdas[0], lambdas[lambdas.len() - 1]),
        n_points: x.len(),
        abscissa: Abscissa::LambdaSquared,
    })
}

/// Per-λ estimates feeding a [`GrowthFit`] in `λ²`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaSweep {
    /// Grid time actually used (nearest grid point to the requested `t_eval`).
    pub t_used: f64,
    pub lambdas: Vec<f64>,
    pub m2: Vec<f64>,
    pub stderr: Vec<f64>,
    pub censored: Vec<u64>,
    pub fit: GrowthFit,
}

/// Simulate every config (identical except for λ) and regress `log m2(t_eval)` on `λ²`.
pub fn fit_growth_in_lambda(configs: &[SimulationConfig], sigma: &SigmaSpec, t_eval: f64) -> Result<LambdaSweep, MomentError> {
    let first = configs.first().ok_or(MomentError::InsufficientPoints { have: 0, need: MIN_LAMBDA_POINTS })?;
    if configs.len() < MIN_LAMBDA_POINTS {
        return Err(MomentError::InsufficientPoints { have: configs.len(), need: MIN_LAMBDA_POINTS });
    }
    for c in &configs[1..] {
        let mut normalised = c.clone();
        normalised.lambda = first.lambda;
        if &normalised != first {
            return Err(MomentError::InconsistentConfigs(format!("{c:?}")));
        }
    }
    if first.alpha.regime() != Regime::Supercritical {
        return Err(MomentError::RequiresSupercritical(first.alpha.value()));
    }
    let (a, t_end) = (first.window.start(), first.window.end());
    if !(t_eval > a && t_eval <= t_end) {
        return Err(MomentError::TimeOutOfWindow { t: t_eval, a, t_end });
    }
    let lambdas: Vec<f64> = configs.iter().map(|c| c.lambda).collect();
    if lambdas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(MomentError::LambdaNotIncreasing);
    }
    let grid = first.grid();
    let idx = (1..grid.len())
        .min_by(|&i, &j| (grid[i] - t_eval).abs().total_cmp(&(grid[j] - t_eval).abs()))
        .expect("grid has at least two points");
    let t_used = grid[idx];

    let mut m2 = Vec::with_capacity(configs.len());
    let mut stderr = Vec::with_capacity(configs.len());
    let mut censored = Vec::with_capacity(configs.len());
    for c in configs {
        let series = simulate_second_moment(c, sigma)?;
        if series.censored[idx] as f64 > 0.5 * c.n_paths as f64 {
            return Err(MomentError::CensoredMajority { t: t_used, censored: series.censored[idx], n_paths: c.n_paths });
        }
        m2.push(series.m2[idx]);
        stderr.push(series.stderr[idx]);
        censored.push(series.censored[idx]);
    }
    let band = RateBand::in_lambda(first.alpha, a, t_used, sigma);
    let fit = fit_log_moments_in_lambda(&lambdas, &m2, band)?;
    Ok(LambdaSweep { t_used, lambdas, m2, stderr, censored, fit })
}
