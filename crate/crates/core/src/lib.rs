//! Conformable time-fractional stochastic equations `T_α u = λ σ(u) Ẇ`.
//!
//! The crate is split along the lines of the workflow:
//!
//! * [`calculus`]: deterministic conformable derivative, integral, Gronwall
//!   majorant and a conformable IVP solver.
//! * [`paths`]: Monte Carlo simulation of the mild Volterra solution with
//!   variance-exact kernel weights and counter-based noise.
//! * [`moments`]: second-moment estimation and growth-rate regression.
//! * [`blowup`]: finite-time blow-up of the moment equation for superlinear σ.
//!
//! All Monte Carlo reductions go through [`reduce`], which fixes the summation
//! order so results do not depend on the number of worker threads.

// `!(x > y)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blowup;
pub mod calculus;
pub mod moments;
pub mod paths;
pub mod reduce;

pub use calculus::{Alpha, Regime, TimeWindow, WeightedNormParams};
pub use moments::{GrowthFit, MomentSeries, RateBand};
pub use paths::{GridSpacing, PathEnsemble, SigmaSpec, SimulationConfig, StartRule};
