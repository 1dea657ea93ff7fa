use conformable_core::calculus::{
    conformable_derivative, fractional_integral, gronwall_bound, solve_conformable_ivp, weight_e,
};
use conformable_core::{Alpha, WeightedNormParams};
use proptest::prelude::*;

type Named = (&'static str, fn(f64) -> f64);

fn rel(x: f64, y: f64) -> f64 {
    (x - y).abs() / y.abs().max(1e-300)
}

#[test]
fn integral_of_one_is_clock() {
    for alpha in [0.1, 0.25, 0.5, 0.75, 0.9] {
        let al = Alpha::new(alpha).unwrap();
        for (a, t) in [(0.0, 1.0), (1.0, 3.5), (0.3, 0.31)] {
            let got = fractional_integral(|_| 1.0, al, a, t, 17).unwrap();
            let exact = (t - a).powf(alpha) / alpha;
            assert!(rel(got, exact) < 1e-10, "alpha={alpha} a={a} t={t}: {got} vs {exact}");
        }
    }
}

#[test]
fn derivative_of_integral_returns_integrand() {
    let fs: [Named; 3] = [("cos", f64::cos), ("exp", f64::exp), ("poly", |s| 1.0 + s * s)];
    for alpha in [0.3, 0.5, 0.8] {
        let al = Alpha::new(alpha).unwrap();
        for (name, f) in fs {
            for t in [0.5, 1.0, 2.0] {
                let integral = |x: f64| fractional_integral(f, al, 0.0, x, 4000).unwrap();
                let d = conformable_derivative(integral, al, 0.0, t, 1e-5).unwrap();
                assert!((d - f(t)).abs() < 1e-4, "{name} alpha={alpha} t={t}: {d} vs {}", f(t));
            }
        }
    }
}

#[test]
fn integral_of_derivative_returns_increment() {
    let fs: [Named; 3] = [("sin", f64::sin), ("exp", f64::exp), ("cubic", |s| s * s * s - s)];
    let a = 0.2;
    for alpha in [0.3, 0.5, 0.8] {
        let al = Alpha::new(alpha).unwrap();
        for (name, f) in fs {
            let tf = |s: f64| conformable_derivative(f, al, a, s, (1e-5f64).min((s - a) / 2.0)).unwrap();
            for t in [0.7, 1.5, 2.5] {
                let got = fractional_integral(tf, al, a, t, 2000).unwrap();
                let exact = f(t) - f(a);
                assert!((got - exact).abs() < 1e-4, "{name} alpha={alpha} t={t}: {got} vs {exact}");
            }
        }
    }
}

#[test]
fn decay_solution_matches_weight() {
    for (alpha, k, a) in [(0.5, 1.0, 0.0), (0.75, 2.5, 1.0), (0.3, 0.4, 0.5)] {
        let al = Alpha::new(alpha).unwrap();
        let params = WeightedNormParams::new(k, alpha).unwrap();
        let sol = solve_conformable_ivp(|_, y| -k * y, al, a, 1.0, a + 3.0, 2000).unwrap();
        assert!(sol.overflow.is_none());
        for &(t, y) in &sol.samples {
            let exact = weight_e(t, a, &params);
            assert!(rel(y, exact) < 1e-6, "alpha={alpha} t={t}: {y} vs {exact}");
        }
    }
}

#[test]
fn near_classical_order_approaches_classical_solution() {
    let rhs = |t: f64, y: f64| t.sin() * y;
    let classical = solve_conformable_ivp(rhs, Alpha::CLASSICAL, 0.0, 1.0, 2.0, 4000).unwrap().last().1;
    assert!(rel(classical, (1.0 - 2.0f64.cos()).exp()) < 1e-10);
    let gaps: Vec<f64> = [0.9, 0.99, 0.999]
        .iter()
        .map(|&al| {
            let y = solve_conformable_ivp(rhs, Alpha::new(al).unwrap(), 0.0, 1.0, 2.0, 4000).unwrap().last().1;
            (y - classical).abs()
        })
        .collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    assert!(gaps[2] < 1e-2 * classical);
}

#[test]
fn gronwall_majorant_is_the_equality_case() {
    let (delta, k, p, a) = (0.7, 1.3, 0.6, 0.5);
    let al = Alpha::new(p).unwrap();
    for t in [0.6, 1.0, 2.0, 3.0] {
        let bound = gronwall_bound(delta, k, p, a, t).unwrap();
        let rhs = delta + k * fractional_integral(|s| gronwall_bound(delta, k, p, a, s).unwrap(), al, a, t, 4000).unwrap();
        assert!(rel(rhs, bound) < 1e-6, "t={t}: {rhs} vs {bound}");
    }
}

proptest! {
    #[test]
    fn gronwall_dominates_subsolutions(delta in 0.01f64..5.0, k in 0.01f64..3.0, shrink in 0.0f64..1.0,
                                       p in 0.05f64..0.99, t in 0.01f64..3.0) {
        // r = δ exp(k' clock) with k' ≤ k satisfies r ≤ δ + k I_p r
        let al = Alpha::new(p).unwrap();
        let kk = k * shrink;
        let r = |s: f64| delta * (kk * s.powf(p) / p).exp();
        let rhs = delta + k * fractional_integral(r, al, 0.0, t, 400).unwrap();
        prop_assert!(r(t) <= rhs * (1.0 + 1e-6));
        prop_assert!(r(t) <= gronwall_bound(delta, k, p, 0.0, t).unwrap() * (1.0 + 1e-12));
    }
}
