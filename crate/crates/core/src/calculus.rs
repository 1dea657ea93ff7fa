//! Conformable fractional calculus starting from `a`.
//!
//! For `0 < α ≤ 1` the conformable derivative of a differentiable `f` is
//! `T_α f(t) = (t - a)^{1-α} f'(t)` and the matching integral is
//! `I_α f(t) = ∫_a^t (s - a)^{α-1} f(s) ds`.
//!
//! Both become classical on the clock `v = (t - a)^α / α`: `dv = (t - a)^{α-1} dt`,
//! so the singular kernel turns into plain Lebesgue measure in `v`. The integral
//! and the IVP solver work entirely on that clock.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reduce::NeumaierSum;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalculusError {
    #[error("alpha out of range (0,1]: {0}")]
    AlphaOutOfRange(f64),
    #[error("invalid time window: need T > a >= 0, got a={a}, T={t_end}")]
    InvalidWindow { a: f64, t_end: f64 },
    #[error("evaluation point t={t} must lie strictly after the origin a={a}")]
    NotAfterOrigin { t: f64, a: f64 },
    #[error("finite-difference step h={h} must satisfy 0 < h < t-a = {gap}")]
    InvalidStep { h: f64, gap: f64 },
    #[error("resolution must be at least one panel/step")]
    ZeroResolution,
    #[error("non-finite function value at t={0}")]
    NonFinite(f64),
    #[error("invalid {name}={value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
}

/// Fractional order `α`.
///
/// Ordinary construction accepts `0 < α < 1`; `α = 1` is only reachable through
/// [`Alpha::CLASSICAL`] or [`Alpha::new_or_classical`].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Alpha(f64);

/// Square-integrability regime of the kernel `(s - a)^{α-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `α < 1/2`: the squared kernel is not integrable at `a`.
    Subcritical,
    /// `α = 1/2`: logarithmic divergence at `a`.
    Critical,
    /// `α > 1/2`: the squared kernel is integrable.
    Supercritical,
}

impl Alpha {
    /// The classical limit `α = 1`.
    pub const CLASSICAL: Alpha = Alpha(1.0);

    pub fn new(value: f64) -> Result<Self, CalculusError> {
        if value > 0.0 && value < 1.0 {
            Ok(Alpha(value))
        } else {
            Err(CalculusError::AlphaOutOfRange(value))
        }
    }

    /// Like [`Alpha::new`] but maps exactly `1.0` to [`Alpha::CLASSICAL`].
    pub fn new_or_classical(value: f64) -> Result<Self, CalculusError> {
        if value == 1.0 {
            Ok(Alpha::CLASSICAL)
        } else {
            Alpha::new(value)
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_classical(self) -> bool {
        self.0 == 1.0
    }

    pub fn regime(self) -> Regime {
        if self.0 < 0.5 {
            Regime::Subcritical
        } else if self.0 == 0.5 {
            Regime::Critical
        } else {
            Regime::Supercritical
        }
    }

    /// `2α - 1`, the exponent of `∫_a^t (s-a)^{2(α-1)} ds`.
    pub fn isometry_power(self) -> f64 {
        2.0 * self.0 - 1.0
    }
}

impl TryFrom<f64> for Alpha {
    type Error = CalculusError;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Alpha::new_or_classical(value)
    }
}

impl From<Alpha> for f64 {
    fn from(a: Alpha) -> f64 {
        a.0
    }
}

/// Time window `[a, T]` with `T > a ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeWindow {
    a: f64,
    t_end: f64,
}

impl TimeWindow {
    pub fn new(a: f64, t_end: f64) -> Result<Self, CalculusError> {
        if a.is_finite() && t_end.is_finite() && a >= 0.0 && t_end > a {
            Ok(TimeWindow { a, t_end })
        } else {
            Err(CalculusError::InvalidWindow { a, t_end })
        }
    }

    pub fn start(&self) -> f64 {
        self.a
    }

    pub fn end(&self) -> f64 {
        self.t_end
    }

    pub fn length(&self) -> f64 {
        self.t_end - self.a
    }
}

/// Parameters of the weight `exp(-β (t-a)^κ / κ)`.
///
/// `κ = α` gives the weight used for the deterministic contraction argument,
/// `κ = 2α - 1` the one for the mean-square norm of the stochastic problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightedNormParams {
    beta_norm: f64,
    kappa: f64,
}

impl WeightedNormParams {
    pub fn new(beta_norm: f64, kappa: f64) -> Result<Self, CalculusError> {
        if !(beta_norm > 0.0 && beta_norm.is_finite()) {
            return Err(CalculusError::InvalidParameter {
                name: "beta_norm",
                value: beta_norm,
                reason: "must be positive and finite",
            });
        }
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(CalculusError::InvalidParameter {
                name: "kappa",
                value: kappa,
                reason: "must be positive and finite",
            });
        }
        Ok(WeightedNormParams { beta_norm, kappa })
    }

    pub fn beta_norm(&self) -> f64 {
        self.beta_norm
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }
}

/// A monotone reparametrisation of time on which a kernel becomes `dv`.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Clock {
    /// `v = (t - a)^p / p`, `p > 0`.
    Power { power: f64, a: f64 },
    /// `v = ln((t - a)/(anchor - a))`, the `p = 0` member of the family.
    Log { a: f64, anchor: f64 },
}

impl Clock {
    pub(crate) fn clock_at(&self, t: f64) -> f64 {
        match *self {
            Clock::Power { power, a } => (t - a).powf(power) / power,
            Clock::Log { a, anchor } => ((t - a) / (anchor - a)).ln(),
        }
    }

    pub(crate) fn time_at(&self, v: f64) -> f64 {
        match *self {
            Clock::Power { power, a } => {
                if power == 1.0 {
                    a + v
                } else {
                    a + (power * v).powf(1.0 / power)
                }
            }
            Clock::Log { a, anchor } => a + (anchor - a) * v.exp(),
        }
    }
}

/// Default finite-difference step `1e-5 · max(1, |t|)`.
pub fn default_step(t: f64) -> f64 {
    1e-5 * t.abs().max(1.0)
}

/// Conformable derivative `(t-a)^{1-α} f'(t)` with a centred difference of step `h`.
///
/// The boundary value at `t = a` is a limit and is not evaluated here.
pub fn conformable_derivative<F>(f: F, alpha: Alpha, a: f64, t: f64, h: f64) -> Result<f64, CalculusError>
where
    F: Fn(f64) -> f64,
{
    if !(t > a) {
        return Err(CalculusError::NotAfterOrigin { t, a });
    }
    let gap = t - a;
    if !(h > 0.0 && h < gap) {
        return Err(CalculusError::InvalidStep { h, gap });
    }
    let forward = f(t + h);
    if !forward.is_finite() {
        return Err(CalculusError::NonFinite(t + h));
    }
    let backward = f(t - h);
    if !backward.is_finite() {
        return Err(CalculusError::NonFinite(t - h));
    }
    Ok(gap.powf(1.0 - alpha.value()) * (forward - backward) / (2.0 * h))
}

/// `∫_a^t (s-a)^{α-1} f(s) ds` by composite midpoint on `n_panels` uniform
/// panels of the clock `v = (s-a)^α/α`.
///
/// Exact for constants; second order for `f` smooth in `v`. Returns `0` at `t = a`.
pub fn fractional_integral<F>(f: F, alpha: Alpha, a: f64, t: f64, n_panels: usize) -> Result<f64, CalculusError>
where
    F: Fn(f64) -> f64,
{
    if n_panels == 0 {
        return Err(CalculusError::ZeroResolution);
    }
    if !(t >= a) {
        return Err(CalculusError::NotAfterOrigin { t, a });
    }
    if t == a {
        return Ok(0.0);
    }
    let clock = Clock::Power { power: alpha.value(), a };
    let dv = clock.clock_at(t) / n_panels as f64;
    let mut acc = NeumaierSum::new();
    for i in 0..n_panels {
        let s = clock.time_at((i as f64 + 0.5) * dv);
        let fs = f(s);
        if !fs.is_finite() {
            return Err(CalculusError::NonFinite(s));
        }
        acc.add(fs);
    }
    Ok(acc.value() * dv)
}

/// Gronwall majorant `δ exp(k (t-a)^p / p)` for
/// `r(t) ≤ δ + k ∫_a^t (s-a)^{p-1} r(s) ds`.
pub fn gronwall_bound(delta: f64, k: f64, alpha_power: f64, a: f64, t: f64) -> Result<f64, CalculusError> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(CalculusError::InvalidParameter { name: "delta", value: delta, reason: "must be finite and >= 0" });
    }
    if !(k >= 0.0 && k.is_finite()) {
        return Err(CalculusError::InvalidParameter { name: "k", value: k, reason: "must be finite and >= 0" });
    }
    if !(alpha_power > 0.0 && alpha_power.is_finite()) {
        return Err(CalculusError::InvalidParameter {
            name: "alpha_power",
            value: alpha_power,
            reason: "must be finite and > 0",
        });
    }
    if !(t >= a) || !t.is_finite() {
        return Err(CalculusError::NotAfterOrigin { t, a });
    }
    Ok(delta * (k * (t - a).powf(alpha_power) / alpha_power).exp())
}

/// `exp(-β (t-a)^κ / κ)`; lies in `(0, 1]` for `t ≥ a`.
pub fn weight_e(t: f64, a: f64, params: &WeightedNormParams) -> f64 {
    debug_assert!(t >= a, "weight evaluated before the origin");
    let gap = (t - a).max(0.0);
    (-params.beta_norm * gap.powf(params.kappa) / params.kappa).exp()
}

/// Where a trajectory stopped being finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IvpOverflow {
    pub last_valid_t: f64,
    pub first_invalid_t: f64,
    /// Index of the first step whose state is non-finite.
    pub step: usize,
}

/// Samples `(t, y)` on the uniform clock grid, truncated at the first non-finite state.
#[derive(Debug, Clone, PartialEq)]
pub struct IvpSolution {
    pub samples: Vec<(f64, f64)>,
    pub overflow: Option<IvpOverflow>,
}

impl IvpSolution {
    pub fn last(&self) -> (f64, f64) {
        *self.samples.last().expect("solution always holds the initial sample")
    }
}

/// Solve `T_α y = f(t, y)`, `y(a) = y_a` on `[a, T]`.
///
/// On the clock `v = (t-a)^α/α` the problem is `dy/dv = f(t(v), y)`, which is
/// integrated with classical fixed-step RK4 over `n_steps` uniform `v` steps.
pub fn solve_conformable_ivp<F>(f: F, alpha: Alpha, a: f64, y_a: f64, t_end: f64, n_steps: usize) -> Result<IvpSolution, CalculusError>
where
    F: Fn(f64, f64) -> f64,
{
    if !(t_end > a) {
        return Err(CalculusError::NotAfterOrigin { t: t_end, a });
    }
    let clock = Clock::Power { power: alpha.value(), a };
    integrate_on_clock(&clock, f, y_a, clock.clock_at(t_end), t_end, n_steps)
}

/// RK4 for `dy/dv = f(t(v), y)` from `v = 0` to `v_end`; the last sample is
/// pinned to `t_end` so round-off in the clock inverse does not leak out.
pub(crate) fn integrate_on_clock<F>(
    clock: &Clock,
    f: F,
    y0: f64,
    v_end: f64,
    t_end: f64,
    n_steps: usize,
) -> Result<IvpSolution, CalculusError>
where
    F: Fn(f64, f64) -> f64,
{
    if n_steps == 0 {
        return Err(CalculusError::ZeroResolution);
    }
    if !y0.is_finite() {
        return Err(CalculusError::NonFinite(clock.time_at(0.0)));
    }
    let dv = v_end / n_steps as f64;
    let mut samples = Vec::with_capacity(n_steps + 1);
    let mut y = y0;
    samples.push((clock.time_at(0.0), y));
    for n in 0..n_steps {
        let v = n as f64 * dv;
        let t0 = clock.time_at(v);
        let t_mid = clock.time_at(v + 0.5 * dv);
        let t1 = if n + 1 == n_steps { t_end } else { clock.time_at(v + dv) };
        let k1 = f(t0, y);
        let k2 = f(t_mid, y + 0.5 * dv * k1);
        let k3 = f(t_mid, y + 0.5 * dv * k2);
        let k4 = f(t1, y + dv * k3);
        let next = y + dv / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !next.is_finite() {
            return Ok(IvpSolution {
                overflow: Some(IvpOverflow { last_valid_t: t0, first_invalid_t: t1, step: n + 1 }),
                samples,
            });
        }
        y = next;
        samples.push((t1, y));
    }
    Ok(IvpSolution { samples, overflow: None })
}
