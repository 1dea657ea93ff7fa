//! Experiment configuration: a TOML file with `experiment`, `output_dir` and
//! the `[simulation]`, `[sigma]` and `[extra]` tables.
//!
//! Validation collects every problem it finds instead of stopping at the
//! first, and only builds an [`ExperimentConfig`] when the list is empty.

use std::fmt;
use std::path::PathBuf;

use conformable_core::calculus::TimeWindow;
use conformable_core::paths::DEFAULT_OVERFLOW_THRESHOLD;
use conformable_core::{Alpha, GridSpacing, Regime, SigmaSpec, SimulationConfig, StartRule};
use toml::{Table, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Moments,
    GrowthT,
    GrowthLambda,
    Blowup,
    Contraction,
    GronwallCheck,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::Moments,
        ExperimentKind::GrowthT,
        ExperimentKind::GrowthLambda,
        ExperimentKind::Blowup,
        ExperimentKind::Contraction,
        ExperimentKind::GronwallCheck,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Moments => "moments",
            ExperimentKind::GrowthT => "growth_t",
            ExperimentKind::GrowthLambda => "growth_lambda",
            ExperimentKind::Blowup => "blowup",
            ExperimentKind::Contraction => "contraction",
            ExperimentKind::GronwallCheck => "gronwall_check",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    fn needs_supercritical(self) -> bool {
        !matches!(self, ExperimentKind::Moments | ExperimentKind::Blowup)
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SigmaConfig {
    Zero,
    Linear { l: f64 },
    SuperLinear { l: f64, b: f64 },
    PiecewiseLinear { slope_pos: f64, slope_neg: f64 },
}

impl SigmaConfig {
    pub fn to_spec(&self) -> Result<SigmaSpec, String> {
        let spec = match *self {
            SigmaConfig::Zero => Ok(SigmaSpec::zero()),
            SigmaConfig::Linear { l } => SigmaSpec::linear(l),
            SigmaConfig::SuperLinear { l, b } => SigmaSpec::superlinear(l, b),
            SigmaConfig::PiecewiseLinear { slope_pos, slope_neg } => SigmaSpec::piecewise_linear(slope_pos, slope_neg),
        };
        spec.map_err(|e| format!("sigma: {e}"))
    }

    fn to_table(&self) -> Table {
        let mut t = Table::new();
        match *self {
            SigmaConfig::Zero => {
                t.insert("kind".into(), "zero".into());
            }
            SigmaConfig::Linear { l } => {
                t.insert("kind".into(), "linear".into());
                t.insert("l".into(), l.into());
            }
            SigmaConfig::SuperLinear { l, b } => {
                t.insert("kind".into(), "superlinear".into());
                t.insert("l".into(), l.into());
                t.insert("b".into(), b.into());
            }
            SigmaConfig::PiecewiseLinear { slope_pos, slope_neg } => {
                t.insert("kind".into(), "piecewise_linear".into());
                t.insert("slope_pos".into(), slope_pos.into());
                t.insert("slope_neg".into(), slope_neg.into());
            }
        }
        t
    }
}

/// Experiment-specific parameters, with defaults filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct Extra {
    pub fit_fraction: f64,
    pub lambda_grid: Vec<f64>,
    /// Evaluation time of the λ sweep; `None` means the window end.
    pub t_eval: Option<f64>,
    pub threshold: f64,
    pub beta_norm: f64,
    pub n_iterations: usize,
    /// Slope tolerance: absolute for `growth_t`, relative for `growth_lambda`.
    pub tolerance: f64,
    /// Standard errors allowed in Monte Carlo comparisons.
    pub n_sigma: f64,
    /// Largest accepted Picard distance ratio.
    pub max_ratio: f64,
    /// Grid steps the blow-up detector may lag behind the closed form.
    pub step_slack: f64,
    /// Auxiliary start point of the critical blow-up case; `None` means `a + (T-a)/n_steps`.
    pub b_start: Option<f64>,
    pub ode_steps: usize,
}

impl Default for Extra {
    fn default() -> Self {
        Extra {
            fit_fraction: 0.5,
            lambda_grid: vec![0.5, 1.0, 1.5, 2.0],
            t_eval: None,
            threshold: 1e6,
            beta_norm: 4.0,
            n_iterations: 5,
            tolerance: 0.1,
            n_sigma: 4.0,
            max_ratio: 0.40,
            step_slack: 2.0,
            b_start: None,
            ode_steps: 200_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub simulation: SimulationConfig,
    pub sigma_config: SigmaConfig,
    pub sigma: SigmaSpec,
    pub output_dir: PathBuf,
    pub extra: Extra,
}

impl ExperimentConfig {
    /// Every parameter written out explicitly; feeding it back to
    /// [`validate_config`] reproduces this configuration.
    pub fn to_table(&self) -> Table {
        let sim = &self.simulation;
        let mut s = Table::new();
        s.insert("alpha".into(), sim.alpha.value().into());
        s.insert("a".into(), sim.window.start().into());
        s.insert("t_end".into(), sim.window.end().into());
        s.insert("lambda".into(), sim.lambda.into());
        s.insert("u0".into(), sim.u0.into());
        s.insert("n_steps".into(), Value::Integer(sim.n_steps as i64));
        s.insert("n_paths".into(), Value::Integer(sim.n_paths as i64));
        s.insert("seed".into(), seed_value(sim.master_seed));
        let spacing = match sim.spacing {
            GridSpacing::Isometric => "isometric",
            GridSpacing::Uniform => "uniform",
        };
        s.insert("spacing".into(), spacing.into());
        match sim.start {
            StartRule::AtOrigin => {
                s.insert("start".into(), "origin".into());
            }
            StartRule::Truncated { eps } => {
                s.insert("start".into(), "truncated".into());
                s.insert("truncation_eps".into(), eps.into());
            }
        }
        s.insert("overflow_threshold".into(), sim.overflow_threshold.into());

        let x = &self.extra;
        let mut e = Table::new();
        e.insert("fit_fraction".into(), x.fit_fraction.into());
        e.insert("lambda_grid".into(), Value::Array(x.lambda_grid.iter().map(|&l| l.into()).collect()));
        if let Some(t) = x.t_eval {
            e.insert("t_eval".into(), t.into());
        }
        e.insert("threshold".into(), x.threshold.into());
        e.insert("beta_norm".into(), x.beta_norm.into());
        e.insert("n_iterations".into(), Value::Integer(x.n_iterations as i64));
        e.insert("tolerance".into(), x.tolerance.into());
        e.insert("n_sigma".into(), x.n_sigma.into());
        e.insert("max_ratio".into(), x.max_ratio.into());
        e.insert("step_slack".into(), x.step_slack.into());
        if let Some(b) = x.b_start {
            e.insert("b_start".into(), b.into());
        }
        e.insert("ode_steps".into(), Value::Integer(x.ode_steps as i64));

        let mut root = Table::new();
        root.insert("experiment".into(), self.experiment.as_str().into());
        root.insert("output_dir".into(), self.output_dir.to_string_lossy().into_owned().into());
        root.insert("simulation".into(), Value::Table(s));
        root.insert("sigma".into(), Value::Table(self.sigma_config.to_table()));
        root.insert("extra".into(), Value::Table(e));
        root
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_table()).expect("tables of plain values always serialise")
    }
}

fn seed_value(seed: u64) -> Value {
    match i64::try_from(seed) {
        Ok(s) => Value::Integer(s),
        Err(_) => Value::String(seed.to_string()),
    }
}

/// Values from the command line that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct Validated {
    pub config: ExperimentConfig,
    pub warnings: Vec<String>,
}

pub fn validate_config(raw: &str) -> Result<Validated, Vec<String>> {
    validate_with(raw, &Overrides::default())
}

pub fn validate_with(raw: &str, overrides: &Overrides) -> Result<Validated, Vec<String>> {
    let table: Table = toml::from_str(raw).map_err(|e| vec![format!("parse error: {}", e.message())])?;
    validate_table(&table, overrides)
}

const TOP_KEYS: &[&str] = &["experiment", "output_dir", "simulation", "sigma", "extra"];
const SIM_KEYS: &[&str] = &[
    "alpha",
    "a",
    "t_end",
    "lambda",
    "u0",
    "n_steps",
    "n_paths",
    "seed",
    "spacing",
    "start",
    "truncation_eps",
    "overflow_threshold",
];
const SIGMA_KEYS: &[&str] = &["kind", "l", "b", "slope_pos", "slope_neg"];
const EXTRA_KEYS: &[&str] = &[
    "fit_fraction",
    "lambda_grid",
    "t_eval",
    "threshold",
    "beta_norm",
    "n_iterations",
    "tolerance",
    "n_sigma",
    "max_ratio",
    "step_slack",
    "b_start",
    "ode_steps",
];

/// Typed lookups that record problems instead of returning early.
struct Section<'a> {
    name: &'a str,
    table: Option<&'a Table>,
}

impl<'a> Section<'a> {
    fn new(root: &'a Table, name: &'a str, allowed: &[&str], errors: &mut Vec<String>) -> Self {
        let table = match root.get(name) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(_) => {
                errors.push(format!("{name} must be a table"));
                None
            }
        };
        if let Some(t) = table {
            for key in t.keys().filter(|k| !allowed.contains(&k.as_str())) {
                errors.push(format!("unknown key {name}.{key}"));
            }
        }
        Section { name, table }
    }

    fn path(&self, key: &str) -> String {
        format!("{}.{key}", self.name)
    }

    fn float(&self, key: &str, errors: &mut Vec<String>) -> Option<f64> {
        match self.table?.get(key)? {
            Value::Float(x) => Some(*x),
            Value::Integer(i) => Some(*i as f64),
            _ => {
                errors.push(format!("{} must be a number", self.path(key)));
                None
            }
        }
    }

    fn required_float(&self, key: &str, errors: &mut Vec<String>) -> Option<f64> {
        let present = self.table.is_some_and(|t| t.contains_key(key));
        if !present {
            errors.push(format!("missing {}", self.path(key)));
        }
        self.float(key, errors)
    }

    fn count(&self, key: &str, errors: &mut Vec<String>) -> Option<usize> {
        match self.table?.get(key)? {
            Value::Integer(i) if *i >= 0 => Some(*i as usize),
            _ => {
                errors.push(format!("{} must be a non-negative integer", self.path(key)));
                None
            }
        }
    }

    fn string(&self, key: &str, errors: &mut Vec<String>) -> Option<&'a str> {
        match self.table?.get(key)? {
            Value::String(s) => Some(s),
            _ => {
                errors.push(format!("{} must be a string", self.path(key)));
                None
            }
        }
    }

    fn floats(&self, key: &str, errors: &mut Vec<String>) -> Option<Vec<f64>> {
        let bad = |errors: &mut Vec<String>| errors.push(format!("{} must be an array of numbers", self.path(key)));
        match self.table?.get(key)? {
            Value::Array(items) => {
                let mut out = Vec::with_capacity(items.len());
                for item in items {
                    match item {
                        Value::Float(x) => out.push(*x),
                        Value::Integer(i) => out.push(*i as f64),
                        _ => {
                            bad(errors);
                            return None;
                        }
                    }
                }
                Some(out)
            }
            _ => {
                bad(errors);
                None
            }
        }
    }

    fn seed(&self, errors: &mut Vec<String>) -> Option<u64> {
        match self.table?.get("seed")? {
            Value::Integer(i) if *i >= 0 => Some(*i as u64),
            Value::String(s) if s.parse::<u64>().is_ok() => s.parse().ok(),
            _ => {
                errors.push("simulation.seed must be a non-negative 64-bit integer".into());
                None
            }
        }
    }
}

fn check(errors: &mut Vec<String>, ok: bool, msg: impl FnOnce() -> String) {
    if !ok {
        errors.push(msg());
    }
}

pub fn validate_table(root: &Table, overrides: &Overrides) -> Result<Validated, Vec<String>> {
    let mut errors = Vec::new();
    let mut warnings = Vec::new();

    for key in root.keys().filter(|k| !TOP_KEYS.contains(&k.as_str())) {
        errors.push(format!("unknown key {key}"));
    }

    let experiment = match root.get("experiment") {
        None => {
            errors.push("missing experiment kind".into());
            None
        }
        Some(Value::String(s)) => {
            let kind = ExperimentKind::parse(s);
            if kind.is_none() {
                let names: Vec<_> = ExperimentKind::ALL.iter().map(|k| k.as_str()).collect();
                errors.push(format!("unknown experiment kind \"{s}\" (expected one of {})", names.join(", ")));
            }
            kind
        }
        Some(_) => {
            errors.push("experiment must be a string".into());
            None
        }
    };

    let output_dir = match (&overrides.output_dir, root.get("output_dir")) {
        (Some(dir), _) => Some(dir.clone()),
        (None, Some(Value::String(s))) if !s.is_empty() => Some(PathBuf::from(s)),
        (None, Some(_)) => {
            errors.push("output_dir must be a non-empty string".into());
            None
        }
        (None, None) => {
            errors.push("missing output_dir (set it in the file or pass --out)".into());
            None
        }
    };

    // [simulation]
    if !root.contains_key("simulation") {
        errors.push("missing [simulation] table".into());
    }
    let sim = Section::new(root, "simulation", SIM_KEYS, &mut errors);
    let alpha = sim.required_float("alpha", &mut errors).and_then(|x| {
        let ok = x > 0.0 && x <= 1.0;
        check(&mut errors, ok, || format!("alpha out of range (0,1], got {x}"));
        ok.then(|| Alpha::new_or_classical(x).expect("range checked"))
    });
    let a = sim.float("a", &mut errors).unwrap_or(0.0);
    check(&mut errors, a >= 0.0 && a.is_finite(), || format!("simulation.a must be finite and >= 0, got {a}"));
    let t_end = sim.required_float("t_end", &mut errors);
    if let Some(t) = t_end {
        check(&mut errors, t > a && t.is_finite(), || format!("simulation.t_end must exceed a = {a}, got {t}"));
    }
    let lambda = sim.required_float("lambda", &mut errors);
    if let Some(l) = lambda {
        check(&mut errors, l > 0.0 && l.is_finite(), || format!("lambda must be > 0, got {l}"));
    }
    let u0 = sim.float("u0", &mut errors).unwrap_or(1.0);
    check(&mut errors, u0 >= 0.0 && u0.is_finite(), || format!("simulation.u0 must be finite and >= 0, got {u0}"));
    let n_steps = sim.count("n_steps", &mut errors);
    check(&mut errors, n_steps != Some(0), || "simulation.n_steps must be >= 1".into());
    if sim.table.is_some_and(|t| !t.contains_key("n_steps")) {
        errors.push("missing simulation.n_steps".into());
    }
    let n_paths = sim.count("n_paths", &mut errors);
    check(&mut errors, n_paths != Some(0), || "simulation.n_paths must be >= 1".into());
    if sim.table.is_some_and(|t| !t.contains_key("n_paths")) {
        errors.push("missing simulation.n_paths".into());
    }
    let seed = match overrides.seed {
        Some(s) => Some(s),
        None => {
            let s = sim.seed(&mut errors);
            if s.is_none() && sim.table.is_some_and(|t| !t.contains_key("seed")) {
                errors.push("missing simulation.seed (set it in the file or pass --seed)".into());
            }
            s
        }
    };
    let spacing = match sim.string("spacing", &mut errors) {
        None | Some("isometric") => Some(GridSpacing::Isometric),
        Some("uniform") => Some(GridSpacing::Uniform),
        Some(other) => {
            errors.push(format!("simulation.spacing must be \"isometric\" or \"uniform\", got \"{other}\""));
            None
        }
    };
    let start = sim.string("start", &mut errors);
    let eps = sim.float("truncation_eps", &mut errors);
    let overflow_threshold = sim.float("overflow_threshold", &mut errors).unwrap_or(DEFAULT_OVERFLOW_THRESHOLD);

    // [sigma]
    if !root.contains_key("sigma") {
        errors.push("missing [sigma] table".into());
    }
    let sig = Section::new(root, "sigma", SIGMA_KEYS, &mut errors);
    let sigma_config = match sig.string("kind", &mut errors) {
        None => {
            if sig.table.is_some() {
                errors.push("missing sigma.kind".into());
            }
            None
        }
        Some("zero") => Some(SigmaConfig::Zero),
        Some("linear") => sig.required_float("l", &mut errors).map(|l| SigmaConfig::Linear { l }),
        Some("superlinear") => {
            let l = sig.required_float("l", &mut errors);
            let b = sig.required_float("b", &mut errors);
            if let Some(b) = b {
                check(&mut errors, b > 1.0, || format!("sigma.b must be > 1, got {b}"));
            }
            l.zip(b).map(|(l, b)| SigmaConfig::SuperLinear { l, b })
        }
        Some("piecewise_linear") => {
            let p = sig.required_float("slope_pos", &mut errors);
            let n = sig.required_float("slope_neg", &mut errors);
            p.zip(n).map(|(slope_pos, slope_neg)| SigmaConfig::PiecewiseLinear { slope_pos, slope_neg })
        }
        Some(other) => {
            errors.push(format!(
                "sigma.kind must be one of zero, linear, superlinear, piecewise_linear; got \"{other}\""
            ));
            None
        }
    };
    let sigma = sigma_config.as_ref().and_then(|c| c.to_spec().map_err(|e| errors.push(e)).ok());

    // [extra]
    let ex = Section::new(root, "extra", EXTRA_KEYS, &mut errors);
    let mut extra = Extra::default();
    if let Some(x) = ex.float("fit_fraction", &mut errors) {
        check(&mut errors, x > 0.0 && x <= 1.0, || format!("extra.fit_fraction must lie in (0,1], got {x}"));
        extra.fit_fraction = x;
    }
    if let Some(g) = ex.floats("lambda_grid", &mut errors) {
        extra.lambda_grid = g;
    }
    extra.t_eval = ex.float("t_eval", &mut errors);
    if let Some(x) = ex.float("threshold", &mut errors) {
        extra.threshold = x;
    }
    if let Some(x) = ex.float("beta_norm", &mut errors) {
        check(&mut errors, x > 0.0 && x.is_finite(), || format!("extra.beta_norm must be > 0, got {x}"));
        extra.beta_norm = x;
    }
    if let Some(n) = ex.count("n_iterations", &mut errors) {
        check(&mut errors, n >= 2, || format!("extra.n_iterations must be >= 2, got {n}"));
        extra.n_iterations = n;
    }
    for (key, slot) in [
        ("tolerance", &mut extra.tolerance),
        ("n_sigma", &mut extra.n_sigma),
        ("max_ratio", &mut extra.max_ratio),
        ("step_slack", &mut extra.step_slack),
    ] {
        if let Some(x) = ex.float(key, &mut errors) {
            check(&mut errors, x >= 0.0 && x.is_finite(), || format!("extra.{key} must be finite and >= 0, got {x}"));
            *slot = x;
        }
    }
    extra.b_start = ex.float("b_start", &mut errors);
    if let Some(n) = ex.count("ode_steps", &mut errors) {
        check(&mut errors, n >= 1, || "extra.ode_steps must be >= 1".into());
        extra.ode_steps = n;
    }

    // Cross-field requirements of each experiment.
    if let (Some(kind), Some(alpha)) = (experiment, alpha) {
        if kind.needs_supercritical() && alpha.regime() != Regime::Supercritical {
            errors.push(format!("{kind} requires alpha > 1/2, got {}", alpha.value()));
        }
    }
    if let (Some(kind), Some(sigma)) = (experiment, &sigma) {
        match kind {
            ExperimentKind::Blowup if !sigma.is_superlinear() => {
                errors.push("blowup requires sigma.kind = \"superlinear\"".into());
            }
            ExperimentKind::Contraction | ExperimentKind::GronwallCheck if !sigma.is_lipschitz() => {
                errors.push(format!("{kind} requires a globally Lipschitz sigma"));
            }
            _ => {}
        }
    }
    match experiment {
        Some(ExperimentKind::GrowthLambda) => {
            let g = &extra.lambda_grid;
            check(&mut errors, g.len() >= 4, || format!("extra.lambda_grid needs at least 4 values, got {}", g.len()));
            check(&mut errors, g.iter().all(|&l| l > 0.0 && l.is_finite()), || {
                "extra.lambda_grid values must be > 0".into()
            });
            check(&mut errors, g.windows(2).all(|w| w[1] > w[0]), || {
                "extra.lambda_grid must be strictly increasing".into()
            });
            if let (Some(t), Some(t_end)) = (extra.t_eval, t_end) {
                check(&mut errors, t > a && t <= t_end, || format!("extra.t_eval must lie in (a, t_end], got {t}"));
            }
        }
        Some(ExperimentKind::Blowup) => {
            check(&mut errors, extra.threshold > u0 * u0, || {
                format!("extra.threshold must exceed u0^2 = {}, got {}", u0 * u0, extra.threshold)
            });
            if let Some(b) = extra.b_start {
                check(&mut errors, b > a, || format!("extra.b_start must exceed a = {a}, got {b}"));
            }
        }
        Some(ExperimentKind::Contraction) => {
            if let (Some(l), Some(s)) = (lambda, &sigma) {
                let threshold = (l * s.lip()).powi(2);
                if extra.beta_norm <= threshold {
                    warnings.push(format!(
                        "beta_norm below contraction threshold (λ·Lip)²={threshold}; contraction hypothesis violated"
                    ));
                }
            }
        }
        _ => {}
    }

    let simulation = match (alpha, t_end, lambda, n_steps, n_paths, seed, spacing) {
        (Some(alpha), Some(t_end), Some(lambda), Some(n_steps), Some(n_paths), Some(seed), Some(spacing))
            if errors.is_empty() =>
        {
            build_simulation(
                alpha,
                a,
                t_end,
                lambda,
                u0,
                (n_steps, n_paths, seed),
                spacing,
                start,
                eps,
                overflow_threshold,
                &mut warnings,
            )
            .map_err(|e| errors.push(e))
            .ok()
        }
        _ => None,
    };

    if !errors.is_empty() {
        return Err(errors);
    }
    Ok(Validated {
        config: ExperimentConfig {
            experiment: experiment.expect("no errors"),
            simulation: simulation.expect("no errors"),
            sigma_config: sigma_config.expect("no errors"),
            sigma: sigma.expect("no errors"),
            output_dir: output_dir.expect("no errors"),
            extra,
        },
        warnings,
    })
}

#[allow(clippy::too_many_arguments)]
fn build_simulation(
    alpha: Alpha,
    a: f64,
    t_end: f64,
    lambda: f64,
    u0: f64,
    (n_steps, n_paths, seed): (usize, usize, u64),
    spacing: GridSpacing,
    start: Option<&str>,
    eps: Option<f64>,
    overflow_threshold: f64,
    warnings: &mut Vec<String>,
) -> Result<SimulationConfig, String> {
    let window = TimeWindow::new(a, t_end).map_err(|e| format!("simulation: {e}"))?;
    let truncated = match start {
        Some("origin") => false,
        Some("truncated") => true,
        None => {
            let t = alpha.regime() != Regime::Supercritical;
            if t {
                warnings.push("alpha <= 1/2: simulation starts at a + truncation_eps".into());
            }
            t
        }
        Some(other) => return Err(format!("simulation.start must be \"origin\" or \"truncated\", got \"{other}\"")),
    };
    if eps.is_some() && !truncated {
        return Err("simulation.truncation_eps requires start = \"truncated\"".into());
    }
    let mut cfg = SimulationConfig {
        alpha,
        window,
        lambda,
        u0,
        n_steps,
        n_paths,
        master_seed: seed,
        spacing,
        start: StartRule::AtOrigin,
        overflow_threshold,
    };
    if truncated {
        let eps = eps.unwrap_or(window.length() / (n_steps as f64).powi(2));
        cfg.start = StartRule::Truncated { eps };
    }
    cfg.validate().map_err(|e| format!("simulation: {e}"))?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
experiment = "moments"
output_dir = "out"

[simulation]
alpha = 0.75
t_end = 1.0
lambda = 1.0
n_steps = 16
n_paths = 100
seed = 42

[sigma]
kind = "linear"
l = 1.0
"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let v = validate_config(BASE).unwrap();
        let c = &v.config;
        assert_eq!(c.experiment, ExperimentKind::Moments);
        assert_eq!(c.simulation.window.start(), 0.0);
        assert_eq!(c.simulation.u0, 1.0);
        assert_eq!(c.simulation.start, StartRule::AtOrigin);
        assert_eq!(c.extra, Extra::default());
        assert!(v.warnings.is_empty());
    }

    #[test]
    fn resolved_config_round_trips() {
        let v = validate_config(BASE).unwrap();
        let text = v.config.to_toml();
        let again = validate_config(&text).unwrap();
        assert_eq!(again.config.to_toml(), text);
        assert_eq!(again.config.simulation, v.config.simulation);
        assert_eq!(again.config.extra, v.config.extra);
    }

    #[test]
    fn alpha_out_of_range() {
        let errs = validate_config(&BASE.replace("alpha = 0.75", "alpha = 1.5")).unwrap_err();
        assert!(errs.iter().any(|e| e.starts_with("alpha out of range (0,1]")), "{errs:?}");
    }

    #[test]
    fn empty_file_lists_everything_missing() {
        let errs = validate_config("").unwrap_err();
        assert!(errs.contains(&"missing experiment kind".to_string()), "{errs:?}");
        assert!(errs.iter().any(|e| e.contains("output_dir")));
        assert!(errs.iter().any(|e| e.contains("[simulation]")));
        assert!(errs.iter().any(|e| e.contains("[sigma]")));
    }

    #[test]
    fn collects_all_errors() {
        let raw = BASE
            .replace("alpha = 0.75", "alpha = 0")
            .replace("lambda = 1.0", "lambda = -1.0")
            .replace("l = 1.0", "l = 1.0\nbogus = 3");
        let errs = validate_config(&raw).unwrap_err();
        assert!(errs.len() >= 3, "{errs:?}");
        assert!(errs.iter().any(|e| e.contains("unknown key sigma.bogus")));
        assert!(errs.iter().any(|e| e.contains("lambda must be > 0")));
    }

    #[test]
    fn contraction_threshold_warning() {
        let raw = BASE.replace("\"moments\"", "\"contraction\"") + "\n[extra]\nbeta_norm = 0.5\n";
        let v = validate_config(&raw).unwrap();
        assert_eq!(
            v.warnings,
            vec!["beta_norm below contraction threshold (λ·Lip)²=1; contraction hypothesis violated".to_string()]
        );
    }

    #[test]
    fn experiment_requirements() {
        let raw = BASE.replace("\"moments\"", "\"blowup\"");
        let errs = validate_config(&raw).unwrap_err();
        assert!(errs.iter().any(|e| e.contains("superlinear")));
        let raw = BASE.replace("\"moments\"", "\"growth_t\"").replace("alpha = 0.75", "alpha = 0.5");
        let errs = validate_config(&raw).unwrap_err();
        assert!(errs.iter().any(|e| e.contains("requires alpha > 1/2")), "{errs:?}");
        let raw = BASE.replace("kind = \"linear\"\nl = 1.0", "kind = \"superlinear\"\nl = 1.0\nb = 1.0");
        let errs = validate_config(&raw).unwrap_err();
        assert!(errs.iter().any(|e| e.contains("sigma.b must be > 1")), "{errs:?}");
    }

    #[test]
    fn overrides_win() {
        let raw = BASE.replace("seed = 42\n", "");
        assert!(validate_config(&raw).is_err());
        let o = Overrides { seed: Some(u64::MAX), output_dir: Some("elsewhere".into()) };
        let v = validate_with(&raw, &o).unwrap();
        assert_eq!(v.config.simulation.master_seed, u64::MAX);
        assert_eq!(v.config.output_dir, PathBuf::from("elsewhere"));
        let again = validate_config(&v.config.to_toml()).unwrap();
        assert_eq!(again.config.simulation.master_seed, u64::MAX);
    }

    #[test]
    fn subcritical_defaults_to_truncated_start() {
        let raw = BASE.replace("alpha = 0.75", "alpha = 0.3");
        let v = validate_config(&raw).unwrap();
        assert!(matches!(v.config.simulation.start, StartRule::Truncated { .. }));
        assert_eq!(v.warnings.len(), 1);
    }
}
