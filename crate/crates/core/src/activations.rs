//! Sital and the baseline activation functions.
//!
//! Every function has an analytic derivative. Piecewise kinds report their
//! kinks through [`Derivative::breakpoint`]; the value returned there is the
//! right-hand derivative.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ActivationError {
    #[error("unknown activation kind {0:?}")]
    UnknownKind(String),
    #[error("parameter {name} of {kind} must be finite, got {value}")]
    NonFinite {
        kind: ActivationKind,
        name: &'static str,
        value: f64,
    },
    #[error("sital needs gamma > |eta|/4 for strict monotonicity (gamma = {gamma}, eta = {eta})")]
    SitalBound { gamma: f64, eta: f64 },
    #[error("unknown parameter {name:?} for {kind}")]
    UnknownParam { kind: ActivationKind, name: String },
    #[error("parameter {name:?} of {kind} is not a number")]
    BadParam { kind: ActivationKind, name: String },
    #[error("kdac needs mu > 0, got {0}")]
    KdacMu(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Sital,
    Gelu,
    Relu,
    LeakyRelu,
    Sigmoid,
    Tanh,
    Elu,
    Selu,
    Softplus,
    Swish,
    Rsigelud,
    Kdac,
}

impl ActivationKind {
    /// Sital first, then the baselines in their conventional table order.
    pub const ALL: [ActivationKind; 12] = [
        ActivationKind::Sital,
        ActivationKind::Gelu,
        ActivationKind::Relu,
        ActivationKind::LeakyRelu,
        ActivationKind::Sigmoid,
        ActivationKind::Tanh,
        ActivationKind::Elu,
        ActivationKind::Selu,
        ActivationKind::Softplus,
        ActivationKind::Swish,
        ActivationKind::Rsigelud,
        ActivationKind::Kdac,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActivationKind::Sital => "sital",
            ActivationKind::Gelu => "gelu",
            ActivationKind::Relu => "relu",
            ActivationKind::LeakyRelu => "leaky_relu",
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Tanh => "tanh",
            ActivationKind::Elu => "elu",
            ActivationKind::Selu => "selu",
            ActivationKind::Softplus => "softplus",
            ActivationKind::Swish => "swish",
            ActivationKind::Rsigelud => "rsigelud",
            ActivationKind::Kdac => "kdac",
        }
    }

    pub fn default_spec(self) -> ActivationSpec {
        match self {
            ActivationKind::Sital => ActivationSpec::Sital {
                gamma: 1.0,
                eta: 1.0,
            },
            ActivationKind::Gelu => ActivationSpec::Gelu,
            ActivationKind::Relu => ActivationSpec::Relu,
            ActivationKind::LeakyRelu => ActivationSpec::LeakyRelu { alpha: 0.01 },
            ActivationKind::Sigmoid => ActivationSpec::Sigmoid,
            ActivationKind::Tanh => ActivationSpec::Tanh,
            ActivationKind::Elu => ActivationSpec::Elu { alpha: 1.0 },
            ActivationKind::Selu => ActivationSpec::Selu {
                lambda: 1.0507,
                alpha: 1.67326,
            },
            ActivationKind::Softplus => ActivationSpec::Softplus,
            ActivationKind::Swish => ActivationSpec::Swish { beta: 1.0 },
            ActivationKind::Rsigelud => ActivationSpec::Rsigelud {
                alpha: 0.05,
                beta: 0.2,
            },
            ActivationKind::Kdac => ActivationSpec::Kdac {
                beta1: 1.0,
                beta2: 0.1,
                mu: 0.01,
            },
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ActivationKind {
    type Err = ActivationError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        ActivationKind::ALL
            .into_iter()
            .find(|k| k.as_str() == norm)
            .ok_or_else(|| ActivationError::UnknownKind(s.to_string()))
    }
}

/// An activation with its parameters.
///
/// JSON form: `{"kind": "sital", "params": {"gamma": 1.0, "eta": 1.0}}`.
/// Missing parameters take the defaults of [`ActivationKind::default_spec`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub enum ActivationSpec {
    Sital {
        gamma: f64,
        eta: f64,
    },
    Gelu,
    Relu,
    LeakyRelu {
        alpha: f64,
    },
    Sigmoid,
    Tanh,
    Elu {
        alpha: f64,
    },
    Selu {
        lambda: f64,
        alpha: f64,
    },
    Softplus,
    Swish {
        beta: f64,
    },
    /// `α` scales the sigmoid-weighted branch above 1, `β` the exponential
    /// branch below 0. The function jumps at `x = 1` for `α > 0`.
    Rsigelud {
        alpha: f64,
        beta: f64,
    },
    Kdac {
        beta1: f64,
        beta2: f64,
        mu: f64,
    },
}

#[derive(Serialize, Deserialize)]
struct RawSpec {
    kind: String,
    #[serde(default)]
    params: Map<String, Value>,
}

impl TryFrom<RawSpec> for ActivationSpec {
    type Error = ActivationError;
    fn try_from(raw: RawSpec) -> Result<Self, Self::Error> {
        let kind: ActivationKind = raw.kind.parse()?;
        let mut spec = kind.default_spec();
        for (name, value) in raw.params {
            let v = value.as_f64().ok_or_else(|| ActivationError::BadParam {
                kind,
                name: name.clone(),
            })?;
            let slot = spec
                .params_mut()
                .into_iter()
                .find(|(n, _)| *n == name)
                .ok_or(ActivationError::UnknownParam { kind, name })?;
            *slot.1 = v;
        }
        spec.validate()?;
        Ok(spec)
    }
}

impl From<ActivationSpec> for RawSpec {
    fn from(spec: ActivationSpec) -> Self {
        RawSpec {
            kind: spec.kind().as_str().to_string(),
            params: spec
                .params()
                .into_iter()
                .map(|(n, v)| (n.to_string(), Value::from(v)))
                .collect(),
        }
    }
}

impl Default for ActivationSpec {
    fn default() -> Self {
        ActivationKind::Sital.default_spec()
    }
}

impl fmt::Display for ActivationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind())?;
        let params = self.params();
        if !params.is_empty() {
            let inner: Vec<String> = params.iter().map(|(n, v)| format!("{n}={v}")).collect();
            write!(f, "({})", inner.join(", "))?;
        }
        Ok(())
    }
}

/// Analytic derivative at a point, with a flag for non-differentiable kinks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivative {
    pub value: f64,
    pub breakpoint: bool,
}

impl Derivative {
    fn smooth(value: f64) -> Self {
        Derivative {
            value,
            breakpoint: false,
        }
    }
}

impl ActivationSpec {
    pub fn sital(gamma: f64, eta: f64) -> Result<Self, ActivationError> {
        let s = ActivationSpec::Sital { gamma, eta };
        s.validate()?;
        Ok(s)
    }

    pub fn kind(&self) -> ActivationKind {
        match self {
            ActivationSpec::Sital { .. } => ActivationKind::Sital,
            ActivationSpec::Gelu => ActivationKind::Gelu,
            ActivationSpec::Relu => ActivationKind::Relu,
            ActivationSpec::LeakyRelu { .. } => ActivationKind::LeakyRelu,
            ActivationSpec::Sigmoid => ActivationKind::Sigmoid,
            ActivationSpec::Tanh => ActivationKind::Tanh,
            ActivationSpec::Elu { .. } => ActivationKind::Elu,
            ActivationSpec::Selu { .. } => ActivationKind::Selu,
            ActivationSpec::Softplus => ActivationKind::Softplus,
            ActivationSpec::Swish { .. } => ActivationKind::Swish,
            ActivationSpec::Rsigelud { .. } => ActivationKind::Rsigelud,
            ActivationSpec::Kdac { .. } => ActivationKind::Kdac,
        }
    }

    /// Named parameters in a fixed order.
    pub fn params(&self) -> Vec<(&'static str, f64)> {
        let mut copy = *self;
        copy.params_mut()
            .into_iter()
            .map(|(n, v)| (n, *v))
            .collect()
    }

    fn params_mut(&mut self) -> Vec<(&'static str, &mut f64)> {
        match self {
            ActivationSpec::Sital { gamma, eta } => vec![("gamma", gamma), ("eta", eta)],
            ActivationSpec::LeakyRelu { alpha } | ActivationSpec::Elu { alpha } => {
                vec![("alpha", alpha)]
            }
            ActivationSpec::Selu { lambda, alpha } => vec![("lambda", lambda), ("alpha", alpha)],
            ActivationSpec::Swish { beta } => vec![("beta", beta)],
            ActivationSpec::Rsigelud { alpha, beta } => vec![("alpha", alpha), ("beta", beta)],
            ActivationSpec::Kdac { beta1, beta2, mu } => {
                vec![("beta1", beta1), ("beta2", beta2), ("mu", mu)]
            }
            _ => Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), ActivationError> {
        let kind = self.kind();
        for (name, value) in self.params() {
            if !value.is_finite() {
                return Err(ActivationError::NonFinite { kind, name, value });
            }
        }
        match *self {
            ActivationSpec::Sital { gamma, eta } if gamma <= eta.abs() / 4.0 => {
                Err(ActivationError::SitalBound { gamma, eta })
            }
            ActivationSpec::Kdac { mu, .. } if mu <= 0.0 => Err(ActivationError::KdacMu(mu)),
            _ => Ok(()),
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            ActivationSpec::Sital { gamma, eta } => sital(x, gamma, eta),
            // 0.5·(1 + tanh u) = σ(2u), which keeps full precision in the left tail.
            ActivationSpec::Gelu => x * sigmoid(2.0 * gelu_inner(x)),
            ActivationSpec::Relu => x.max(0.0),
            ActivationSpec::LeakyRelu { alpha } => {
                if x < 0.0 {
                    alpha * x
                } else {
                    x
                }
            }
            ActivationSpec::Sigmoid => sigmoid(x),
            ActivationSpec::Tanh => x.tanh(),
            ActivationSpec::Elu { alpha } => {
                if x < 0.0 {
                    alpha * x.exp_m1()
                } else {
                    x
                }
            }
            ActivationSpec::Selu { lambda, alpha } => {
                lambda * if x < 0.0 { alpha * x.exp_m1() } else { x }
            }
            ActivationSpec::Softplus => softplus(x),
            ActivationSpec::Swish { beta } => x * sigmoid(beta * x),
            ActivationSpec::Rsigelud { alpha, beta } => {
                if x > 1.0 {
                    alpha * x * sigmoid(x) + x
                } else if x >= 0.0 {
                    x
                } else {
                    beta * x.exp_m1()
                }
            }
            ActivationSpec::Kdac { beta1, beta2, mu } => kdac(x, beta1, beta2, mu).0,
        }
    }

    pub fn derivative(&self, x: f64) -> Derivative {
        match *self {
            ActivationSpec::Sital { gamma, eta } => {
                Derivative::smooth(sital_derivative(x, gamma, eta))
            }
            ActivationSpec::Gelu => {
                let s = sigmoid(2.0 * gelu_inner(x));
                let dinner = GELU_C * (1.0 + 3.0 * GELU_A * x * x);
                Derivative::smooth(s + 2.0 * x * s * (1.0 - s) * dinner)
            }
            ActivationSpec::Relu => Derivative {
                value: if x < 0.0 { 0.0 } else { 1.0 },
                breakpoint: x == 0.0,
            },
            ActivationSpec::LeakyRelu { alpha } => Derivative {
                value: if x < 0.0 { alpha } else { 1.0 },
                breakpoint: x == 0.0 && alpha != 1.0,
            },
            ActivationSpec::Sigmoid => {
                let s = sigmoid(x);
                Derivative::smooth(s * (1.0 - s))
            }
            ActivationSpec::Tanh => {
                let t = x.tanh();
                Derivative::smooth(1.0 - t * t)
            }
            ActivationSpec::Elu { alpha } => Derivative {
                value: if x < 0.0 { alpha * x.exp() } else { 1.0 },
                breakpoint: x == 0.0 && alpha != 1.0,
            },
            ActivationSpec::Selu { lambda, alpha } => Derivative {
                value: lambda * if x < 0.0 { alpha * x.exp() } else { 1.0 },
                breakpoint: x == 0.0 && alpha != 1.0,
            },
            ActivationSpec::Softplus => Derivative::smooth(sigmoid(x)),
            ActivationSpec::Swish { beta } => {
                let s = sigmoid(beta * x);
                Derivative::smooth(s + beta * x * s * (1.0 - s))
            }
            ActivationSpec::Rsigelud { alpha, beta } => {
                let breakpoint = x == 0.0 || x == 1.0;
                let value = if x >= 1.0 {
                    let s = sigmoid(x);
                    alpha * (s + x * s * (1.0 - s)) + 1.0
                } else if x >= 0.0 {
                    1.0
                } else {
                    beta * x.exp()
                };
                Derivative { value, breakpoint }
            }
            ActivationSpec::Kdac { beta1, beta2, mu } => {
                Derivative::smooth(kdac(x, beta1, beta2, mu).1)
            }
        }
    }

    /// Gradient of the output with respect to `(γ, η)`; zero for other kinds.
    pub fn param_gradient(&self, x: f64) -> (f64, f64) {
        match *self {
            ActivationSpec::Sital { eta, .. } => sital_param_gradient(x, eta),
            _ => (0.0, 0.0),
        }
    }
}

/// Free-function form of [`ActivationSpec::apply`].
pub fn apply(spec: &ActivationSpec, x: f64) -> f64 {
    spec.apply(x)
}

/// Free-function form of [`ActivationSpec::derivative`].
pub fn apply_derivative(spec: &ActivationSpec, x: f64) -> Derivative {
    spec.derivative(x)
}

const GELU_A: f64 = 0.044715;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu_inner(x: f64) -> f64 {
    GELU_C * (x + GELU_A * x.powi(3))
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `γx + tanh(x)(1 + σ(ηx))`.
pub fn sital(x: f64, gamma: f64, eta: f64) -> f64 {
    gamma * x + x.tanh() * (1.0 + sigmoid(eta * x))
}

pub fn sital_derivative(x: f64, gamma: f64, eta: f64) -> f64 {
    let t = x.tanh();
    let s = sigmoid(eta * x);
    gamma + (1.0 - t * t) * (1.0 + s) + t * eta * s * (1.0 - s)
}

/// `(∂/∂γ, ∂/∂η)` of Sital at `x`.
pub fn sital_param_gradient(x: f64, eta: f64) -> (f64, f64) {
    let s = sigmoid(eta * x);
    (x, x.tanh() * x * s * (1.0 - s))
}

/// Polynomial smooth minimum and its partials `(value, ∂/∂a, ∂/∂b)`.
///
/// The blend weight is clamped to `[0, 1]`, so far from the crossover the
/// result is exactly the smaller input.
fn smooth_min(a: f64, b: f64, mu: f64) -> (f64, f64, f64) {
    let raw = 0.5 + (a - b) / (2.0 * mu);
    let z = raw.clamp(0.0, 1.0);
    let value = a + z * (b - a) + mu * z * z - mu * z;
    if raw <= 0.0 || raw >= 1.0 {
        return (value, 1.0 - z, z);
    }
    // dz/da = 1/(2μ), dz/db = −1/(2μ); ∂value/∂z = (b − a) + 2μz − μ.
    let dz = (b - a) + 2.0 * mu * z - mu;
    (value, 1.0 - z + dz / (2.0 * mu), z - dz / (2.0 * mu))
}

fn smooth_max(a: f64, b: f64, mu: f64) -> (f64, f64, f64) {
    let raw = 0.5 + (b - a) / (2.0 * mu);
    let z = raw.clamp(0.0, 1.0);
    let value = a + z * (b - a) - mu * z * z + mu * z;
    if raw <= 0.0 || raw >= 1.0 {
        return (value, 1.0 - z, z);
    }
    let dz = (b - a) - 2.0 * mu * z + mu;
    (value, 1.0 - z - dz / (2.0 * mu), z + dz / (2.0 * mu))
}

/// `smooth_max(smooth_min(tanh x, β₁x), β₂x)` and its derivative.
fn kdac(x: f64, beta1: f64, beta2: f64, mu: f64) -> (f64, f64) {
    let t = x.tanh();
    let (m, dm_t, dm_l) = smooth_min(t, beta1 * x, mu);
    let dm = dm_t * (1.0 - t * t) + dm_l * beta1;
    let (v, dv_m, dv_l) = smooth_max(m, beta2 * x, mu);
    (v, dv_m * dm + dv_l * beta2)
}
