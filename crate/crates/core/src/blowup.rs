//! Finite-time blow-up of the second-moment ODE for superlinear σ.
//!
//! With `|σ(x)| ≥ L|x|^b`, `b > 1`, the moment `f(t) = E|u(t)|²` dominates the
//! solution of `f' = λ²L² (t-a)^{2(α-1)} f^b`. On the clock
//! `v = (t-a)^{2α-1}/(2α-1)` (or `v = ln((t-a)/(b_start-a))` when `α = 1/2`) this
//! is `df/dv = λ²L² f^b`, so `f^{1-b} = c^{1-b} - (b-1)λ²L² v` and `f` explodes
//! where the right side hits zero.

use serde::Serialize;
use thiserror::Error;

use crate::calculus::{integrate_on_clock, solve_conformable_ivp, Alpha, CalculusError, Clock, IvpSolution, Regime};
use crate::moments::{simulate_second_moment, MomentError};
use crate::paths::{PathError, SigmaSpec, SimulationConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BlowupError {
    #[error("invalid {name} = {value}: {reason}")]
    InvalidParameter { name: &'static str, value: f64, reason: &'static str },
    #[error("alpha = {alpha} is not in the {expected:?} regime")]
    WrongRegime { alpha: f64, expected: Regime },
    #[error("sigma must be superlinear, got {0}")]
    NotSuperLinear(String),
    #[error("threshold {threshold} must exceed u0^2 = {initial}")]
    ThresholdTooLow { threshold: f64, initial: f64 },
    #[error(transparent)]
    Calculus(#[from] CalculusError),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Moment(#[from] MomentError),
}

type Result<T> = std::result::Result<T, BlowupError>;

fn positive(name: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(BlowupError::InvalidParameter { name, value, reason: "must be positive and finite" })
    }
}

fn exponent(b: f64) -> Result<f64> {
    if b > 1.0 && b.is_finite() {
        Ok(b)
    } else {
        Err(BlowupError::InvalidParameter { name: "b", value: b, reason: "must exceed 1" })
    }
}

fn finite(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(BlowupError::InvalidParameter { name, value, reason: "must be finite" })
    }
}

fn require_regime(alpha: Alpha, expected: Regime) -> Result<()> {
    if alpha.regime() == expected {
        Ok(())
    } else {
        Err(BlowupError::WrongRegime { alpha: alpha.value(), expected })
    }
}

/// Parameters of the moment ODE `f' = λ²L² (t-a)^{2(α-1)} f^b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentOde {
    /// Initial level `f(a)`, or `f(b_start)` in the critical case.
    pub c: f64,
    pub lambda: f64,
    pub l_sigma: f64,
    pub b: f64,
}

impl MomentOde {
    pub fn new(c: f64, lambda: f64, l_sigma: f64, b: f64) -> Result<Self> {
        Ok(MomentOde {
            c: positive("c", c)?,
            lambda: positive("lambda", lambda)?,
            l_sigma: positive("L", l_sigma)?,
            b: exponent(b)?,
        })
    }

    fn rate(&self) -> f64 {
        (self.lambda * self.l_sigma).powi(2)
    }

    /// Clock value at which `f^{1-b}` reaches zero: `c^{1-b} / ((b-1)λ²L²)`.
    fn clock_horizon(&self) -> f64 {
        self.c.powf(1.0 - self.b) / ((self.b - 1.0) * self.rate())
    }

    /// `f` as a function of the clock `v`; `+∞` at and beyond the horizon.
    fn on_clock(&self, v: f64) -> f64 {
        let base = self.c.powf(1.0 - self.b) - (self.b - 1.0) * self.rate() * v;
        if base > 0.0 {
            base.powf(1.0 / (1.0 - self.b))
        } else {
            f64::INFINITY
        }
    }
}

/// `t* = a + [c^{1-b}(2α-1)/((b-1)λ²L²)]^{1/(2α-1)}` for `α > 1/2`.
pub fn blowup_time_supercritical(c: f64, lambda: f64, l_sigma: f64, b: f64, alpha: Alpha, a: f64) -> Result<f64> {
    let ode = MomentOde::new(c, lambda, l_sigma, b)?;
    require_regime(alpha, Regime::Supercritical)?;
    let a = finite("a", a)?;
    let p = alpha.isometry_power();
    Ok(a + (p * ode.clock_horizon()).powf(1.0 / p))
}

/// `t* = a + (b_start - a) exp(c^{1-b}/((b-1)λ²L²))` for `α = 1/2`, with `f(b_start) = c`.
pub fn blowup_time_critical(c: f64, lambda: f64, l_sigma: f64, b: f64, a: f64, b_start: f64) -> Result<f64> {
    let ode = MomentOde::new(c, lambda, l_sigma, b)?;
    let a = finite("a", a)?;
    if !(b_start > a && b_start.is_finite()) {
        return Err(BlowupError::InvalidParameter { name: "b_start", value: b_start, reason: "must exceed a" });
    }
    Ok(a + (b_start - a) * ode.clock_horizon().exp())
}

/// Closed-form `f(t)` for `α > 1/2`, `f(a) = c`; `+∞` from `t*` on.
pub fn moment_closed_form_supercritical(ode: &MomentOde, alpha: Alpha, a: f64, t: f64) -> Result<f64> {
    require_regime(alpha, Regime::Supercritical)?;
    if !(t >= a) {
        return Err(CalculusError::NotAfterOrigin { t, a }.into());
    }
    let p = alpha.isometry_power();
    Ok(ode.on_clock((t - a).powf(p) / p))
}

/// Closed-form `f(t)` for `α = 1/2`, `f(b_start) = c`, valid for `t ≥ b_start`.
pub fn moment_closed_form_critical(ode: &MomentOde, a: f64, b_start: f64, t: f64) -> Result<f64> {
    if !(b_start > a) {
        return Err(BlowupError::InvalidParameter { name: "b_start", value: b_start, reason: "must exceed a" });
    }
    if !(t >= b_start) {
        return Err(CalculusError::NotAfterOrigin { t, a: b_start }.into());
    }
    Ok(ode.on_clock(((t - a) / (b_start - a)).ln()))
}

/// Integrate the supercritical moment ODE numerically up to `t_end`.
///
/// The ODE is `T_p f = λ²L² f^b` with `p = 2α-1`, handed to the conformable
/// IVP solver; the returned solution records where the state first overflows.
pub fn integrate_moment_ode_supercritical(ode: &MomentOde, alpha: Alpha, a: f64, t_end: f64, n_steps: usize) -> Result<IvpSolution> {
    require_regime(alpha, Regime::Supercritical)?;
    let clock_alpha = Alpha::new_or_classical(alpha.isometry_power())?;
    let rate = ode.rate();
    let b = ode.b;
    Ok(solve_conformable_ivp(|_, y| rate * y.powf(b), clock_alpha, a, ode.c, t_end, n_steps)?)
}

/// Integrate the critical moment ODE from `f(b_start) = c` up to `t_end`.
pub fn integrate_moment_ode_critical(ode: &MomentOde, a: f64, b_start: f64, t_end: f64, n_steps: usize) -> Result<IvpSolution> {
    if !(b_start > a) {
        return Err(BlowupError::InvalidParameter { name: "b_start", value: b_start, reason: "must exceed a" });
    }
    if !(t_end > b_start) {
        return Err(CalculusError::NotAfterOrigin { t: t_end, a: b_start }.into());
    }
    let clock = Clock::Log { a, anchor: b_start };
    let rate = ode.rate();
    let b = ode.b;
    Ok(integrate_on_clock(&clock, |_, y| rate * y.powf(b), ode.c, clock.clock_at(t_end), t_end, n_steps)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BlowupKind {
    /// Divergence of the moment ODE solution.
    BlowUp,
    /// Zero of the transformed bracket in the `α < 1/2` regime; the closed form
    /// ceases to exist there, which is not a blow-up time of `f` itself.
    NonExistenceOnset,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlowupParams {
    pub lambda: f64,
    pub l_sigma: f64,
    pub b: f64,
    pub c: f64,
    pub a: f64,
    /// Reference horizon `T` (subcritical transform, detector horizon).
    pub horizon: Option<f64>,
    /// Auxiliary start point of the critical case.
    pub b_start: Option<f64>,
}

/// Sampled values of the subcritical bracket.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BracketTrace {
    pub t: Vec<f64>,
    pub bracket: Vec<f64>,
}

impl BracketTrace {
    /// Indices `i` with a sign change between samples `i` and `i + 1`.
    pub fn sign_changes(&self) -> Vec<usize> {
        self.bracket
            .windows(2)
            .enumerate()
            .filter(|(_, w)| (w[0] > 0.0) != (w[1] > 0.0))
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlowupResult {
    pub alpha: Alpha,
    pub regime: Regime,
    pub kind: BlowupKind,
    /// `None` stands for `+∞` (no crossing on the window).
    pub t_star_closed_form: Option<f64>,
    /// `None` when the detector did not fire.
    pub t_star_numeric: Option<f64>,
    pub params: BlowupParams,
    pub n_steps: Option<usize>,
    /// Grid spacing of the step containing `t_star_closed_form`.
    pub grid_step: Option<f64>,
    pub bracket: Option<BracketTrace>,
    pub notes: Vec<String>,
}

impl BlowupResult {
    /// Whether the detection satisfies `a < t_numeric ≤ t* + k·grid_step`.
    ///
    /// The true moment dominates the ODE solution, so early detection is
    /// consistent with the theory; only late detection is a disagreement.
    pub fn detected_within_steps(&self, k: f64) -> Option<bool> {
        let (t_num, t_star, h) = (self.t_star_numeric?, self.t_star_closed_form?, self.grid_step?);
        Some(t_num > self.params.a && t_num <= t_star + k * h)
    }
}

/// Default number of samples in the subcritical bracket scan.
pub const BRACKET_SAMPLES: usize = 1024;

/// Bracket zero of the transformed closed form for `α < 1/2`.
///
/// With `y(t) = (t-a)^{2α-1} f(t)`, `p = 2α-1` and `y(a) = c (T-a)^p`, the
/// bracket is `B(t) = (λ²L²(T-a)^p/p)(t-a)^{p(1-b)} + y(a)^{1-b}`. It is positive
/// at `a` and decreasing, and vanishes at
/// `t = a + [-p y(a)^{1-b} / (λ²L²(T-a)^p)]^{1/(p(1-b))}`.
pub fn blowup_subcritical_transform(
    c: f64,
    lambda: f64,
    l_sigma: f64,
    b: f64,
    alpha: Alpha,
    a: f64,
    horizon: f64,
) -> Result<BlowupResult> {
    let ode = MomentOde::new(c, lambda, l_sigma, b)?;
    require_regime(alpha, Regime::Subcritical)?;
    let a = finite("a", a)?;
    if !(horizon > a && horizon.is_finite()) {
        return Err(BlowupError::InvalidParameter { name: "T", value: horizon, reason: "must exceed a" });
    }
    let p = alpha.isometry_power();
    let q = p * (1.0 - b);
    debug_assert!(q > 0.0);
    let span = horizon - a;
    let y_a = c * span.powf(p);
    let coef = ode.rate() * span.powf(p) / p;
    let offset = y_a.powf(1.0 - b);
    let bracket = |t: f64| coef * (t - a).powf(q) + offset;

    let root = a + (-offset / coef).powf(1.0 / q);
    let t: Vec<f64> = (0..=BRACKET_SAMPLES).map(|i| a + span * (i as f64 / BRACKET_SAMPLES as f64)).collect();
    let trace = BracketTrace { bracket: t.iter().map(|&s| bracket(s)).collect(), t };

    let mut notes = Vec::new();
    let crossing = if root <= horizon {
        Some(root)
    } else {
        notes.push(format!("bracket stays positive on (a, T]; analytic zero at t = {root}"));
        None
    };
    Ok(BlowupResult {
        alpha,
        regime: Regime::Subcritical,
        kind: BlowupKind::NonExistenceOnset,
        t_star_closed_form: crossing,
        t_star_numeric: None,
        params: BlowupParams { lambda, l_sigma, b, c, a, horizon: Some(horizon), b_start: None },
        n_steps: Some(BRACKET_SAMPLES),
        grid_step: Some(span / BRACKET_SAMPLES as f64),
        bracket: Some(trace),
        notes,
    })
}

/// First grid time at which the simulated second moment explodes.
///
/// The detector fires when the censoring-corrected moment (censored paths
/// counted at the overflow threshold) exceeds `threshold`, or when more than
/// half of the paths have overflowed. The closed-form time uses `c = u0²`.
pub fn detect_moment_explosion(config: &SimulationConfig, sigma: &SigmaSpec, threshold: f64) -> Result<BlowupResult> {
    let b = sigma.superlinear_b().ok_or_else(|| BlowupError::NotSuperLinear(sigma.describe()))?;
    require_regime(config.alpha, Regime::Supercritical)?;
    let initial = config.u0 * config.u0;
    if !(threshold > initial) {
        return Err(BlowupError::ThresholdTooLow { threshold, initial });
    }
    let a = config.window.start();
    let t_star = blowup_time_supercritical(initial, config.lambda, sigma.lower(), b, config.alpha, a)?;

    let series = simulate_second_moment(config, sigma)?;
    let fired = (1..series.len()).find(|&n| {
        series.censoring_corrected_m2(n, config.overflow_threshold) > threshold
            || 2 * series.censored[n] as usize > series.n_paths
    });

    let grid = &series.grid;
    let grid_step = grid
        .windows(2)
        .find(|w| w[1] >= t_star)
        .or_else(|| grid.windows(2).last())
        .map(|w| w[1] - w[0]);

    let mut notes = Vec::new();
    if config.window.end() < t_star {
        notes.push(format!("horizon {} ends before the closed-form blow-up time {t_star}", config.window.end()));
    }
    if fired.is_none() {
        notes.push("no explosion detected on the simulated window".into());
    }
    Ok(BlowupResult {
        alpha: config.alpha,
        regime: Regime::Supercritical,
        kind: BlowupKind::BlowUp,
        t_star_closed_form: Some(t_star),
        t_star_numeric: fired.map(|n| grid[n]),
        params: BlowupParams {
            lambda: config.lambda,
            l_sigma: sigma.lower(),
            b,
            c: initial,
            a,
            horizon: Some(config.window.end()),
            b_start: None,
        },
        n_steps: Some(config.n_steps),
        grid_step,
        bracket: None,
        notes,
    })
}
