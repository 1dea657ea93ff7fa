//! Experiment orchestration: each runner turns a validated config into data
//! files, checks and a JSON results block. Nothing here touches the disk.

use std::fmt::Write as _;

use conformable_core::blowup::{
    blowup_subcritical_transform, blowup_time_critical, blowup_time_supercritical, detect_moment_explosion,
    integrate_moment_ode_critical, integrate_moment_ode_supercritical, moment_closed_form_critical,
    moment_closed_form_supercritical, BlowupKind, BlowupParams, BlowupResult, MomentOde,
};
use conformable_core::calculus::{fractional_integral, gronwall_bound, IvpSolution};
use conformable_core::moments::{fit_growth_in_lambda, fit_growth_in_t, simulate_second_moment};
use conformable_core::paths::{exact_linear_second_moment, picard_contraction_demo, simulate_ensemble, SigmaKind};
use conformable_core::{Alpha, MomentSeries, RateBand, Regime};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, ExperimentKind};

/// One pass/fail comparison reported in the summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub observed: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub detail: String,
}

impl Check {
    fn new(name: &str, observed: f64, lower: Option<f64>, upper: Option<f64>, detail: impl Into<String>) -> Self {
        let passed = observed.is_finite()
            && lower.is_none_or(|l| observed >= l)
            && upper.is_none_or(|u| observed <= u);
        Check { name: name.into(), passed, observed, lower, upper, detail: detail.into() }
    }
}

#[derive(Debug, Default)]
pub struct Outcome {
    /// `(file name, contents)`, written in order.
    pub files: Vec<(String, Vec<u8>)>,
    pub checks: Vec<Check>,
    pub results: Value,
    pub warnings: Vec<String>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub type RunResult = Result<Outcome, String>;

pub fn run_experiment(cfg: &ExperimentConfig) -> RunResult {
    match cfg.experiment {
        ExperimentKind::Moments => run_moments(cfg),
        ExperimentKind::GrowthT => run_growth_t(cfg),
        ExperimentKind::GrowthLambda => run_growth_lambda(cfg),
        ExperimentKind::Blowup => run_blowup(cfg),
        ExperimentKind::Contraction => run_contraction(cfg),
        ExperimentKind::GronwallCheck => run_gronwall(cfg),
    }
}

/// Raw paths of the configured ensemble; no checks.
pub fn run_simulate(cfg: &ExperimentConfig) -> RunResult {
    let ensemble = simulate_ensemble(&cfg.simulation, &cfg.sigma).map_err(|e| e.to_string())?;
    let mut csv = Vec::new();
    ensemble.write_csv(&mut csv).map_err(|e| e.to_string())?;
    let overflowed = ensemble.overflow_steps().iter().filter(|o| o.is_some()).count();
    Ok(Outcome {
        files: vec![("paths.csv".into(), csv)],
        results: json!({ "n_paths": ensemble.n_paths(), "n_points": ensemble.n_points(), "overflowed_paths": overflowed }),
        ..Outcome::default()
    })
}

fn moments_csv(series: &MomentSeries) -> Result<Vec<u8>, String> {
    let mut out = Vec::new();
    series.write_csv(&mut out).map_err(|e| e.to_string())?;
    Ok(out)
}

fn simulate_series(cfg: &ExperimentConfig) -> Result<MomentSeries, String> {
    simulate_second_moment(&cfg.simulation, &cfg.sigma).map_err(|e| e.to_string())
}

/// Largest `|m2 - target| / stderr` over the grid; points with zero standard
/// error must match to round-off.
fn max_z(series: &MomentSeries, target: impl Fn(usize) -> f64) -> f64 {
    let mut worst: f64 = 0.0;
    for n in 0..series.len() {
        let diff = (series.m2[n] - target(n)).abs();
        let z = if series.stderr[n] > 0.0 {
            diff / series.stderr[n]
        } else if diff <= 1e-12 * target(n).abs().max(1.0) {
            0.0
        } else {
            f64::INFINITY
        };
        worst = worst.max(z);
    }
    worst
}

fn moment_checks(cfg: &ExperimentConfig, series: &MomentSeries) -> Result<(Vec<Check>, Value), String> {
    let sim = &cfg.simulation;
    let n_sigma = cfg.extra.n_sigma;
    let mut checks = Vec::new();
    let last = series.len() - 1;
    let mut results = json!({
        "t_end": series.grid[last],
        "m2_end": series.m2[last],
        "stderr_end": series.stderr[last],
        "censored_end": series.censored[last],
        "warnings": series.warnings,
    });

    let linear = matches!(cfg.sigma.kind(), SigmaKind::Linear { .. });
    if linear && sim.alpha.regime() == Regime::Supercritical {
        let exact = exact_linear_second_moment(sim, cfg.sigma.lip()).map_err(|e| e.to_string())?;
        let z = max_z(series, |n| exact(series.grid[n]));
        results["exact_m2_end"] = json!(exact(series.grid[last]));
        checks.push(Check::new(
            "exact_moment",
            z,
            None,
            Some(n_sigma),
            format!("max |m2 - u0² exp(λ²L²Φ(t))| / stderr over the grid, allowed {n_sigma}"),
        ));
    } else if cfg.sigma.is_lipschitz() {
        // The scheme's moment obeys Π(1 + λ²L²w²) ≤ m2 ≤ Π(1 + λ²Lip²w²) exactly.
        let w = sim.kernel_weights().map_err(|e| e.to_string())?;
        let (c_lo, c_hi) = ((sim.lambda * cfg.sigma.lower()).powi(2), (sim.lambda * cfg.sigma.lip()).powi(2));
        let m0 = sim.u0 * sim.u0;
        let (mut lo, mut hi) = (m0, m0);
        let mut worst: f64 = 0.0;
        for n in 1..series.len() {
            let w2 = w.as_slice()[n - 1].powi(2);
            lo *= 1.0 + c_lo * w2;
            hi *= 1.0 + c_hi * w2;
            let m = series.m2[n];
            let outside = if m < lo { lo - m } else if m > hi { m - hi } else { 0.0 };
            let z = if outside == 0.0 {
                0.0
            } else if series.stderr[n] > 0.0 {
                outside / series.stderr[n]
            } else {
                f64::INFINITY
            };
            worst = worst.max(z);
        }
        results["band_end"] = json!([lo, hi]);
        checks.push(Check::new(
            "moment_sandwich",
            worst,
            None,
            Some(n_sigma),
            format!("max distance of m2 outside the L/Lip band in standard errors, allowed {n_sigma}"),
        ));
    }

    if series.censored.iter().all(|&c| c == 0) {
        let mut worst: f64 = 0.0;
        for n in 1..series.len() {
            let diff = (series.mean[n] - sim.u0).abs();
            let z = if series.mean_stderr[n] > 0.0 {
                diff / series.mean_stderr[n]
            } else if diff <= 1e-12 * sim.u0.max(1.0) {
                0.0
            } else {
                f64::INFINITY
            };
            worst = worst.max(z);
        }
        checks.push(Check::new(
            "martingale_mean",
            worst,
            None,
            Some(n_sigma),
            format!("max |mean(u) - u0| / stderr over the grid, allowed {n_sigma}"),
        ));
    }
    Ok((checks, results))
}

fn run_moments(cfg: &ExperimentConfig) -> RunResult {
    let series = simulate_series(cfg)?;
    let (checks, results) = moment_checks(cfg, &series)?;
    Ok(Outcome {
        files: vec![("moments.csv".into(), moments_csv(&series)?)],
        checks,
        results,
        warnings: series.warnings.clone(),
    })
}

fn run_growth_t(cfg: &ExperimentConfig) -> RunResult {
    let sim = &cfg.simulation;
    let series = simulate_series(cfg)?;
    let band = RateBand::in_time(sim.alpha, sim.lambda, &cfg.sigma);
    let fit = fit_growth_in_t(&series, sim.alpha, band, cfg.extra.fit_fraction).map_err(|e| e.to_string())?;
    let tol = cfg.extra.tolerance;
    let check = Check::new(
        "slope_in_t",
        fit.slope,
        Some(band.lower - tol),
        Some(band.upper + tol),
        format!("slope of log m2 against (t-a)^(2α-1) within [{}, {}] ± {tol}", band.lower, band.upper),
    );
    Ok(Outcome {
        files: vec![("moments.csv".into(), moments_csv(&series)?)],
        checks: vec![check],
        results: json!({ "fit": fit }),
        warnings: series.warnings.clone(),
    })
}

fn run_growth_lambda(cfg: &ExperimentConfig) -> RunResult {
    let configs = cfg
        .extra
        .lambda_grid
        .iter()
        .map(|&l| cfg.simulation.clone().with_lambda(l))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let t_eval = cfg.extra.t_eval.unwrap_or(cfg.simulation.window.end());
    let sweep = fit_growth_in_lambda(&configs, &cfg.sigma, t_eval).map_err(|e| e.to_string())?;
    let band = sweep.fit.band();
    let tol = cfg.extra.tolerance;
    let check = Check::new(
        "slope_in_lambda",
        sweep.fit.slope,
        Some(band.lower * (1.0 - tol)),
        Some(band.upper * (1.0 + tol)),
        format!(
            "slope of log m2(t={}) against λ² within [{}, {}] ± {}%",
            sweep.t_used,
            band.lower,
            band.upper,
            tol * 100.0
        ),
    );
    let mut csv = String::from("lambda,m2,stderr,censored\n");
    for i in 0..sweep.lambdas.len() {
        writeln!(csv, "{:.16e},{:.16e},{:.16e},{}", sweep.lambdas[i], sweep.m2[i], sweep.stderr[i], sweep.censored[i])
            .expect("writing to a String");
    }
    Ok(Outcome {
        files: vec![("lambda_sweep.csv".into(), csv.into_bytes())],
        checks: vec![check],
        results: json!({ "sweep": sweep }),
        warnings: Vec::new(),
    })
}

fn ode_csv(sol: &IvpSolution, closed: impl Fn(f64) -> f64) -> Vec<u8> {
    let mut csv = String::from("t,f_numeric,f_closed_form\n");
    // the full solution can hold hundreds of thousands of samples
    let stride = (sol.samples.len() / 2000).max(1);
    let last = sol.samples.len() - 1;
    for (i, &(t, y)) in sol.samples.iter().enumerate() {
        if i % stride == 0 || i == last {
            writeln!(csv, "{t:.16e},{y:.16e},{:.16e}", closed(t)).expect("writing to a String");
        }
    }
    csv.into_bytes()
}

fn ode_divergence_check(sol: &IvpSolution, t_star: f64, start: f64) -> Check {
    let observed = sol.overflow.map_or(f64::INFINITY, |o| o.first_invalid_t);
    Check::new(
        "ode_divergence",
        observed,
        Some(start + 0.99 * (t_star - start)),
        Some(start + 1.01 * (t_star - start)),
        "first time the integrated moment ODE overflows, within 1% of t*",
    )
}

fn run_blowup(cfg: &ExperimentConfig) -> RunResult {
    let sim = &cfg.simulation;
    let sigma = &cfg.sigma;
    let b = sigma.superlinear_b().ok_or("blowup requires a superlinear sigma")?;
    let l = sigma.lower();
    let c = sim.u0 * sim.u0;
    let a = sim.window.start();
    let ode_steps = cfg.extra.ode_steps;
    let err = |e: conformable_core::blowup::BlowupError| e.to_string();

    match sim.alpha.regime() {
        Regime::Supercritical => {
            let ode = MomentOde::new(c, sim.lambda, l, b).map_err(err)?;
            let t_star = blowup_time_supercritical(c, sim.lambda, l, b, sim.alpha, a).map_err(err)?;
            let sol = integrate_moment_ode_supercritical(&ode, sim.alpha, a, a + 1.5 * (t_star - a), ode_steps)
                .map_err(err)?;
            let result = detect_moment_explosion(sim, sigma, cfg.extra.threshold).map_err(err)?;
            let slack = cfg.extra.step_slack;
            let h = result.grid_step.unwrap_or(f64::NAN);
            let detection = Check::new(
                "detector_within_steps",
                result.t_star_numeric.unwrap_or(f64::INFINITY),
                Some(a + f64::MIN_POSITIVE),
                // nothing can fire before t_end when the horizon ends short of t*
                Some(if t_star >= sim.window.end() { f64::INFINITY } else { t_star + slack * h }),
                format!("Monte Carlo explosion time must satisfy a < t <= t* + {slack} grid steps (step {h})"),
            );
            let checks = vec![ode_divergence_check(&sol, t_star, a), detection];
            let closed = |t: f64| moment_closed_form_supercritical(&ode, sim.alpha, a, t).unwrap_or(f64::NAN);
            Ok(Outcome {
                files: vec![("ode.csv".into(), ode_csv(&sol, closed))],
                checks,
                results: json!({ "blowup": result, "ode_overflow": sol.overflow }),
                warnings: result.notes.clone(),
            })
        }
        Regime::Critical => {
            let b_start = cfg.extra.b_start.unwrap_or(a + sim.window.length() / sim.n_steps as f64);
            let ode = MomentOde::new(c, sim.lambda, l, b).map_err(err)?;
            let t_star = blowup_time_critical(c, sim.lambda, l, b, a, b_start).map_err(err)?;
            let sol = integrate_moment_ode_critical(&ode, a, b_start, b_start + 1.5 * (t_star - b_start), ode_steps)
                .map_err(err)?;
            let closed = |t: f64| moment_closed_form_critical(&ode, a, b_start, t).unwrap_or(f64::NAN);
            let result = BlowupResult {
                alpha: sim.alpha,
                regime: Regime::Critical,
                kind: BlowupKind::BlowUp,
                t_star_closed_form: Some(t_star),
                t_star_numeric: sol.overflow.map(|o| o.first_invalid_t),
                params: BlowupParams {
                    lambda: sim.lambda,
                    l_sigma: l,
                    b,
                    c,
                    a,
                    horizon: Some(sim.window.end()),
                    b_start: Some(b_start),
                },
                n_steps: Some(ode_steps),
                grid_step: None,
                bracket: None,
                notes: vec!["numeric time from the moment ODE; the simulator does not cover alpha = 1/2".into()],
            };
            Ok(Outcome {
                files: vec![("ode.csv".into(), ode_csv(&sol, closed))],
                checks: vec![ode_divergence_check(&sol, t_star, b_start)],
                results: json!({ "blowup": result }),
                warnings: Vec::new(),
            })
        }
        Regime::Subcritical => {
            let result = blowup_subcritical_transform(c, sim.lambda, l, b, sim.alpha, a, sim.window.end()).map_err(err)?;
            let trace = result.bracket.as_ref().expect("subcritical results carry the bracket");
            let changes = trace.sign_changes();
            let consistent = match result.t_star_closed_form {
                Some(t) => changes.len() == 1 && trace.t[changes[0]] < t && t <= trace.t[changes[0] + 1],
                None => changes.is_empty(),
            };
            let mut csv = String::from("t,bracket\n");
            for (t, y) in trace.t.iter().zip(&trace.bracket) {
                writeln!(csv, "{t:.16e},{y:.16e}").expect("writing to a String");
            }
            let check = Check::new(
                "bracket_crossing_consistent",
                if consistent { 1.0 } else { 0.0 },
                Some(1.0),
                None,
                "sampled bracket changes sign exactly where the analytic zero lies",
            );
            Ok(Outcome {
                files: vec![("bracket.csv".into(), csv.into_bytes())],
                checks: vec![check],
                warnings: result.notes.clone(),
                results: json!({ "blowup": result }),
            })
        }
    }
}

fn run_contraction(cfg: &ExperimentConfig) -> RunResult {
    let trace = picard_contraction_demo(&cfg.simulation, &cfg.sigma, cfg.extra.beta_norm, cfg.extra.n_iterations)
        .map_err(|e| e.to_string())?;
    let ratios = trace.ratios();
    let worst = ratios.iter().flatten().fold(0.0f64, |m, &r| m.max(r));
    let max_ratio = cfg.extra.max_ratio;
    let mut csv = String::from("iteration,distance,ratio\n");
    for (k, d) in trace.distances.iter().enumerate() {
        let ratio = k.checked_sub(1).and_then(|j| ratios[j]);
        match ratio {
            Some(r) => writeln!(csv, "{k},{d:.16e},{r:.16e}"),
            None => writeln!(csv, "{k},{d:.16e},"),
        }
        .expect("writing to a String");
    }
    let checks = vec![
        Check::new(
            "max_ratio",
            worst,
            None,
            Some(max_ratio),
            format!("largest d_(k+1)/d_k, theory {} plus slack", trace.factor),
        ),
        Check::new(
            "monotone_decrease",
            if trace.distances.windows(2).all(|w| w[1] <= w[0]) { 1.0 } else { 0.0 },
            Some(1.0),
            None,
            "Picard distances are non-increasing",
        ),
    ];
    let mut warnings = Vec::new();
    if !trace.hypothesis_holds() {
        warnings.push(format!("contraction factor (λ·Lip)²/β = {} is not below 1", trace.factor));
    }
    Ok(Outcome {
        files: vec![("contraction.csv".into(), csv.into_bytes())],
        checks,
        results: json!({ "trace": trace, "ratios": ratios }),
        warnings,
    })
}

fn run_gronwall(cfg: &ExperimentConfig) -> RunResult {
    let sim = &cfg.simulation;
    let a = sim.window.start();
    let p = sim.alpha.isometry_power();
    let delta = sim.u0 * sim.u0;
    let k = (sim.lambda * cfg.sigma.lip()).powi(2);
    let bound = |t: f64| gronwall_bound(delta, k, p, a, t).map_err(|e| e.to_string());

    let series = simulate_series(cfg)?;
    let mut csv = String::from("t,m2,stderr,bound\n");
    let mut worst: f64 = 0.0;
    for n in 0..series.len() {
        let t = series.grid[n];
        let g = bound(t)?;
        writeln!(csv, "{t:.16e},{:.16e},{:.16e},{g:.16e}", series.m2[n], series.stderr[n]).expect("writing to a String");
        let excess = series.m2[n] - g;
        let z = if excess <= 0.0 {
            0.0
        } else if series.stderr[n] > 0.0 {
            excess / series.stderr[n]
        } else {
            f64::INFINITY
        };
        worst = worst.max(z);
    }

    let t_end = sim.window.end();
    let kernel = Alpha::new_or_classical(p).map_err(|e| e.to_string())?;
    let integral = fractional_integral(|s| bound(s).unwrap_or(f64::NAN), kernel, a, t_end, 4000)
        .map_err(|e| e.to_string())?;
    let g_end = bound(t_end)?;
    let rel = ((delta + k * integral) - g_end).abs() / g_end;

    let n_sigma = cfg.extra.n_sigma;
    let checks = vec![
        Check::new(
            "moment_below_bound",
            worst,
            None,
            Some(n_sigma),
            format!("max excess of m2 over δ exp(kΦ(t)) in standard errors, allowed {n_sigma}"),
        ),
        Check::new(
            "majorant_equality",
            rel,
            None,
            Some(1e-6),
            "relative gap between δ + k I(bound)(T) and bound(T)",
        ),
    ];
    Ok(Outcome {
        files: vec![("gronwall.csv".into(), csv.into_bytes())],
        checks,
        results: json!({ "delta": delta, "k": k, "power": p, "bound_end": g_end }),
        warnings: series.warnings.clone(),
    })
}
