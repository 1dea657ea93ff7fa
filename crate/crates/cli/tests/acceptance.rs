//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Every Monte Carlo criterion uses seed 42, fixed before any run.

use std::process::Command;
use std::time::Instant;

use conformable_core::blowup::{
    blowup_time_critical, blowup_time_supercritical, detect_moment_explosion, integrate_moment_ode_critical,
    integrate_moment_ode_supercritical, MomentOde,
};
use conformable_core::calculus::{conformable_derivative, fractional_integral, solve_conformable_ivp, weight_e, TimeWindow};
use conformable_core::moments::{fit_growth_in_lambda, fit_growth_in_t, simulate_second_moment};
use conformable_core::paths::{exact_linear_second_moment, picard_contraction_demo};
use conformable_core::{Alpha, RateBand, SigmaSpec, SimulationConfig, WeightedNormParams};

const SEED: u64 = 42;

type Criterion = (&'static str, fn() -> Verdict);

struct Verdict {
    passed: bool,
    detail: String,
}

fn criterion1_config() -> SimulationConfig {
    SimulationConfig::new(Alpha::new(0.75).unwrap(), TimeWindow::new(0.0, 1.0).unwrap(), 1.0, 1.0, 256, 100_000, SEED)
        .unwrap()
}

fn exact_moment() -> Verdict {
    let cfg = criterion1_config();
    let sigma = SigmaSpec::linear(1.0).unwrap();
    let start = Instant::now();
    let series = simulate_second_moment(&cfg, &sigma).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let exact = exact_linear_second_moment(&cfg, 1.0).unwrap();
    let mut worst: f64 = 0.0;
    let mut worst_t = 0.0;
    for n in 0..series.len() {
        let diff = (series.m2[n] - exact(series.grid[n])).abs();
        let z = if series.stderr[n] > 0.0 { diff / series.stderr[n] } else if diff == 0.0 { 0.0 } else { f64::INFINITY };
        if z > worst {
            worst = z;
            worst_t = series.grid[n];
        }
    }
    let e2 = (std::f64::consts::E.powi(2) - exact(1.0)).abs() < 1e-12;
    let last = series.len() - 1;
    Verdict {
        passed: worst <= 4.0 && e2 && elapsed < 60.0,
        detail: format!(
            "max |z| = {worst:.3} at t = {worst_t:.4} (tol 4); m2(1) = {:.4} ± {:.4} vs e² = {:.4}; runtime {elapsed:.1}s (tol 60s)",
            series.m2[last],
            series.stderr[last],
            exact(1.0)
        ),
    }
}

fn growth_in_t() -> Verdict {
    let cfg = criterion1_config();
    let sigma = SigmaSpec::linear(1.0).unwrap();
    let series = simulate_second_moment(&cfg, &sigma).unwrap();
    let band = RateBand::in_time(cfg.alpha, cfg.lambda, &sigma);
    let fit = fit_growth_in_t(&series, cfg.alpha, band, 0.5).unwrap();
    Verdict {
        passed: (fit.slope - 2.0).abs() <= 0.1,
        detail: format!(
            "slope {:.4} ± {:.4} (fit se), theory {} (tol ±0.1), window [{:.3}, {:.3}]",
            fit.slope, fit.slope_stderr, band.lower, fit.fit_window.0, fit.fit_window.1
        ),
    }
}

fn growth_in_lambda() -> Verdict {
    let base = criterion1_config();
    let configs: Vec<_> = [0.5, 1.0, 1.5, 2.0].iter().map(|&l| base.clone().with_lambda(l).unwrap()).collect();
    let sweep = fit_growth_in_lambda(&configs, &SigmaSpec::linear(1.0).unwrap(), 1.0).unwrap();
    let theory = sweep.fit.theory_lower;
    let rel = (sweep.fit.slope - theory).abs() / theory;
    let exact: Vec<String> = sweep.lambdas.iter().map(|&l: &f64| format!("{:.3}", (2.0 * l * l).exp())).collect();
    let got: Vec<String> = sweep.m2.iter().map(|m| format!("{m:.3}")).collect();
    Verdict {
        passed: rel <= 0.10,
        detail: format!(
            "slope {:.4}, theory {theory} (tol ±10%, off by {:.1}%); m2(1) = [{}] vs exact [{}]",
            sweep.fit.slope,
            rel * 100.0,
            got.join(", "),
            exact.join(", ")
        ),
    }
}

fn contraction() -> Verdict {
    let mut cfg = criterion1_config();
    cfg.n_paths = 10_000;
    let trace = picard_contraction_demo(&cfg, &SigmaSpec::linear(1.0).unwrap(), 4.0, 5).unwrap();
    let ratios: Vec<f64> = trace.ratios().into_iter().map(|r| r.unwrap_or(0.0)).collect();
    let worst = ratios.iter().cloned().fold(0.0, f64::max);
    let decreasing = trace.distances.windows(2).all(|w| w[1] < w[0]);
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.3}")).collect();
    Verdict {
        passed: worst <= 0.40 && decreasing,
        detail: format!(
            "ratios [{}], max {worst:.3} (tol 0.40, theory {}), decreasing: {decreasing}",
            shown.join(", "),
            trace.factor
        ),
    }
}

fn blowup() -> Verdict {
    let alpha = Alpha::new(0.75).unwrap();
    let t_super = blowup_time_supercritical(1.0, 1.0, 1.0, 2.0, alpha, 0.0).unwrap();
    let t_crit = blowup_time_critical(1.0, 1.0, 1.0, 2.0, 0.0, 1.0).unwrap();
    let closed_ok = (t_super - 0.25).abs() < 1e-12 && (t_crit - std::f64::consts::E).abs() < 1e-12;

    let ode = MomentOde::new(1.0, 1.0, 1.0, 2.0).unwrap();
    let sup = integrate_moment_ode_supercritical(&ode, alpha, 0.0, 0.5, 200_000).unwrap();
    let crit = integrate_moment_ode_critical(&ode, 0.0, 1.0, 4.0, 200_000).unwrap();
    let t_sup_ode = sup.overflow.map_or(f64::INFINITY, |o| o.first_invalid_t);
    let t_crit_ode = crit.overflow.map_or(f64::INFINITY, |o| o.first_invalid_t);
    let within = |t: f64, star: f64| t >= 0.99 * star && t <= 1.01 * star;
    let ode_ok = within(t_sup_ode, t_super) && within(t_crit_ode, t_crit);

    let cfg = SimulationConfig::new(alpha, TimeWindow::new(0.0, 0.5).unwrap(), 1.0, 1.0, 512, 10_000, SEED).unwrap();
    let det = detect_moment_explosion(&cfg, &SigmaSpec::superlinear(1.0, 2.0).unwrap(), 1e6).unwrap();
    let det_ok = det.detected_within_steps(2.0) == Some(true);
    Verdict {
        passed: closed_ok && ode_ok && det_ok,
        detail: format!(
            "t* = {t_super} and {t_crit:.6}; ODE overflow at {t_sup_ode:.5} and {t_crit_ode:.5} (tol ±1%); \
             detector fired at {:?} (tol a < t <= 0.25 + 2·{:.5})",
            det.t_star_numeric,
            det.grid_step.unwrap_or(f64::NAN)
        ),
    }
}

fn calculus() -> Verdict {
    let mut worst_one: f64 = 0.0;
    let mut worst_ti: f64 = 0.0;
    let mut worst_it: f64 = 0.0;
    let mut worst_k: f64 = 0.0;
    let fs: [fn(f64) -> f64; 3] = [f64::cos, f64::exp, |s| 1.0 + s * s];
    for alpha in [0.25, 0.5, 0.75] {
        let al = Alpha::new(alpha).unwrap();
        for t in [0.5, 1.0, 2.0] {
            let got = fractional_integral(|_| 1.0, al, 0.0, t, 64).unwrap();
            let exact = t.powf(alpha) / alpha;
            worst_one = worst_one.max((got - exact).abs() / exact);
            for f in fs {
                let integral = |x: f64| fractional_integral(f, al, 0.0, x, 4000).unwrap();
                let d = conformable_derivative(integral, al, 0.0, t, 1e-5).unwrap();
                worst_ti = worst_ti.max((d - f(t)).abs());
                let a = 0.2;
                let tf = |s: f64| conformable_derivative(f, al, a, s, (1e-5f64).min((s - a) / 2.0)).unwrap();
                let back = fractional_integral(tf, al, a, t + a, 2000).unwrap();
                worst_it = worst_it.max((back - (f(t + a) - f(a))).abs());
            }
        }
        let k = 1.5;
        let params = WeightedNormParams::new(k, alpha).unwrap();
        let sol = solve_conformable_ivp(|_, y| -k * y, al, 0.0, 1.0, 3.0, 2000).unwrap();
        for &(t, y) in &sol.samples {
            let e = weight_e(t, 0.0, &params);
            worst_k = worst_k.max((y - e).abs() / e);
        }
    }
    Verdict {
        passed: worst_one <= 1e-10 && worst_ti <= 1e-4 && worst_it <= 1e-4 && worst_k <= 1e-6,
        detail: format!(
            "I(1) rel {worst_one:.1e} (tol 1e-10); T∘I {worst_ti:.1e}, I∘T {worst_it:.1e} (tol 1e-4); K rel {worst_k:.1e} (tol 1e-6)"
        ),
    }
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c1.toml");
    std::fs::write(
        &config,
        format!(
            "experiment = \"moments\"\noutput_dir = \"unused\"\n\n[simulation]\nalpha = 0.75\na = 0.0\nt_end = 1.0\n\
             lambda = 1.0\nu0 = 1.0\nn_steps = 256\nn_paths = 100000\nseed = {SEED}\n\n[sigma]\nkind = \"linear\"\nl = 1.0\n"
        ),
    )
    .unwrap();
    let run = |threads: &str| {
        let out = dir.path().join(format!("t{threads}"));
        let status = Command::new(env!("CARGO_BIN_EXE_cfrac"))
            .args(["moments", "--threads", threads, "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap()
            .status;
        (status.code(), std::fs::read(out.join("moments.csv")).unwrap_or_default())
    };
    let (s1, one) = run("1");
    let (s8, eight) = run("8");
    let identical = !one.is_empty() && one == eight;
    Verdict {
        passed: identical,
        detail: format!(
            "moments.csv {} bytes, threads 1 vs 8 identical: {identical} (exit codes {s1:?}, {s8:?})",
            one.len()
        ),
    }
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("exact second moment", exact_moment),
        ("growth rate in t", growth_in_t),
        ("growth rate in lambda", growth_in_lambda),
        ("Picard contraction", contraction),
        ("blow-up times", blowup),
        ("calculus identities", calculus),
        ("thread-count determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let v = f();
        if !v.passed {
            failed += 1;
        }
        println!("criterion {} [{}] {name}: {}", i + 1, if v.passed { "PASS" } else { "FAIL" }, v.detail);
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
