use std::fmt;
use std::sync::Arc;

use super::PathError;

type SigmaFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Shape of the noise coefficient σ.
#[derive(Clone)]
pub enum SigmaKind {
    /// `σ(x) = L x`.
    Linear { l: f64 },
    /// `σ(x) = L |x|^b`, `b > 1`.
    SuperLinear { l: f64, b: f64 },
    /// User-supplied σ with declared constants.
    Custom { name: String, f: SigmaFn },
}

/// The nonlinearity σ together with its Lipschitz constant `Lip_σ` and lower
/// linear constant `L_σ` (`|σ(x)| ≥ L_σ |x|`).
///
/// Superlinear σ is not globally Lipschitz; its `lip` is `+∞` and `lower`
/// holds the constant of `|σ(x)| ≥ L |x|^b`.
#[derive(Clone)]
pub struct SigmaSpec {
    kind: SigmaKind,
    lip: f64,
    lower: f64,
    superlinear_b: Option<f64>,
}

fn positive(name: &'static str, v: f64) -> Result<f64, PathError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(PathError::InvalidSigma(format!("{name} must be positive and finite, got {v}")))
    }
}

impl SigmaSpec {
    pub fn linear(l: f64) -> Result<Self, PathError> {
        let l = positive("L", l)?;
        Ok(SigmaSpec { kind: SigmaKind::Linear { l }, lip: l, lower: l, superlinear_b: None })
    }

    pub fn superlinear(l: f64, b: f64) -> Result<Self, PathError> {
        let l = positive("L", l)?;
        if !(b > 1.0 && b.is_finite()) {
            return Err(PathError::InvalidSigma(format!(
                "superlinear exponent b must exceed 1, got {b}"
            )));
        }
        Ok(SigmaSpec {
            kind: SigmaKind::SuperLinear { l, b },
            lip: f64::INFINITY,
            lower: l,
            superlinear_b: Some(b),
        })
    }

    /// Arbitrary σ with declared `0 ≤ lower ≤ lip < ∞`. The constants are
    /// taken on trust; they only feed the theory bands.
    pub fn custom<F>(name: impl Into<String>, f: F, lip: f64, lower: f64) -> Result<Self, PathError>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(lip >= 0.0 && lip.is_finite() && lower >= 0.0 && lower <= lip) {
            return Err(PathError::InvalidSigma(format!(
                "custom sigma needs 0 <= lower <= lip < inf, got lower={lower}, lip={lip}"
            )));
        }
        Ok(SigmaSpec {
            kind: SigmaKind::Custom { name: name.into(), f: Arc::new(f) },
            lip,
            lower,
            superlinear_b: None,
        })
    }

    /// `σ ≡ 0`.
    pub fn zero() -> Self {
        SigmaSpec::custom("zero", |_| 0.0, 0.0, 0.0).expect("constants are valid")
    }

    /// `σ(x) = s₊ x` for `x ≥ 0` and `s₋ x` for `x < 0`; `Lip = max`, `L_σ = min`.
    pub fn piecewise_linear(slope_pos: f64, slope_neg: f64) -> Result<Self, PathError> {
        let sp = positive("slope_pos", slope_pos)?;
        let sn = positive("slope_neg", slope_neg)?;
        SigmaSpec::custom(
            format!("piecewise_linear({sp},{sn})"),
            move |x| if x >= 0.0 { sp * x } else { sn * x },
            sp.max(sn),
            sp.min(sn),
        )
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match &self.kind {
            SigmaKind::Linear { l } => l * x,
            SigmaKind::SuperLinear { l, b } => l * x.abs().powf(*b),
            SigmaKind::Custom { f, .. } => f(x),
        }
    }

    pub fn kind(&self) -> &SigmaKind {
        &self.kind
    }

    pub fn lip(&self) -> f64 {
        self.lip
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn superlinear_b(&self) -> Option<f64> {
        self.superlinear_b
    }

    pub fn is_superlinear(&self) -> bool {
        matches!(self.kind, SigmaKind::SuperLinear { .. })
    }

    pub fn is_lipschitz(&self) -> bool {
        self.lip.is_finite()
    }

    pub fn describe(&self) -> String {
        match &self.kind {
            SigmaKind::Linear { l } => format!("linear(L={l})"),
            SigmaKind::SuperLinear { l, b } => format!("superlinear(L={l}, b={b})"),
            SigmaKind::Custom { name, .. } => name.clone(),
        }
    }
}

impl fmt::Debug for SigmaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SigmaSpec")
            .field("kind", &self.describe())
            .field("lip", &self.lip)
            .field("lower", &self.lower)
            .field("superlinear_b", &self.superlinear_b)
            .finish()
    }
}
