use conformable_core::calculus::TimeWindow;
use conformable_core::moments::{estimate_second_moment, simulate_second_moment};
use conformable_core::paths::{picard_contraction_demo, simulate_ensemble};
use conformable_core::{Alpha, MomentSeries, SigmaSpec, SimulationConfig};

fn config(seed: u64) -> SimulationConfig {
    SimulationConfig::new(Alpha::new(0.75).unwrap(), TimeWindow::new(0.0, 1.0).unwrap(), 1.0, 1.0, 64, 5000, seed)
        .unwrap()
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

fn csv(series: &MomentSeries) -> Vec<u8> {
    let mut out = Vec::new();
    series.write_csv(&mut out).unwrap();
    out
}

#[test]
fn moments_do_not_depend_on_thread_count() {
    let cfg = config(42);
    let sigma = SigmaSpec::linear(1.0).unwrap();
    let one = in_pool(1, || simulate_second_moment(&cfg, &sigma).unwrap());
    for threads in [2, 3, 8] {
        let many = in_pool(threads, || simulate_second_moment(&cfg, &sigma).unwrap());
        assert_eq!(csv(&one), csv(&many), "threads={threads}");
    }
}

#[test]
fn ensembles_do_not_depend_on_thread_count() {
    let cfg = config(7);
    let sigma = SigmaSpec::superlinear(1.0, 1.5).unwrap();
    let one = in_pool(1, || simulate_ensemble(&cfg, &sigma).unwrap());
    let many = in_pool(8, || simulate_ensemble(&cfg, &sigma).unwrap());
    let (mut a, mut b) = (Vec::new(), Vec::new());
    one.write_csv(&mut a).unwrap();
    many.write_csv(&mut b).unwrap();
    assert_eq!(a, b);
    assert_eq!(csv(&estimate_second_moment(&one)), csv(&estimate_second_moment(&many)));
}

#[test]
fn contraction_trace_does_not_depend_on_thread_count() {
    let cfg = config(3);
    let sigma = SigmaSpec::linear(1.0).unwrap();
    let one = in_pool(1, || picard_contraction_demo(&cfg, &sigma, 4.0, 4).unwrap());
    let many = in_pool(8, || picard_contraction_demo(&cfg, &sigma, 4.0, 4).unwrap());
    assert_eq!(one, many);
}

#[test]
fn seed_changes_output() {
    let sigma = SigmaSpec::linear(1.0).unwrap();
    let a = simulate_second_moment(&config(1), &sigma).unwrap();
    let b = simulate_second_moment(&config(2), &sigma).unwrap();
    assert_ne!(csv(&a), csv(&b));
    let again = simulate_second_moment(&config(1), &sigma).unwrap();
    assert_eq!(csv(&a), csv(&again));
}
