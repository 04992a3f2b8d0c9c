//! Age weighting functions `g(s)` for age-biased tip selection.
//!
//! A weight function assigns a nonnegative weight to a tip of age `s`. The
//! selection probability of a tip is its weight divided by the total weight of
//! the tip set. Every variant carries its running integral `G(s) = ∫₀ˢ g` in
//! closed form so the fluid and steady-state solvers never integrate `g`
//! numerically.

use std::fmt;
use std::str::FromStr;

use crate::error::ParseError;
use crate::scalar::{lit, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightFunction<T> {
    /// `g(s) = c`. Random (uniform) selection; not integrable.
    Constant(T),
    /// `g(s) = e^{-rate·s}`.
    Exponential { rate: T },
    /// `g(s) = 1` on `[0, width]`, zero afterwards.
    Window { width: T },
    /// `g(s) = (1 + s)^{-exponent}`; integrable iff `exponent > 1`.
    PowerLaw { exponent: T },
}

impl<T: Scalar> WeightFunction<T> {
    pub fn uniform() -> Self {
        WeightFunction::Constant(T::one())
    }

    pub fn exponential(rate: T) -> Self {
        WeightFunction::Exponential { rate }
    }

    /// Checks the parameter ranges.
    pub fn validate(&self) -> Result<(), ParseError> {
        let ok = match *self {
            WeightFunction::Constant(c) => c > T::zero(),
            WeightFunction::Exponential { rate } => rate > T::zero(),
            WeightFunction::Window { width } => width > T::zero(),
            WeightFunction::PowerLaw { exponent } => exponent > T::zero(),
        };
        if ok && self.is_finite_params() {
            Ok(())
        } else {
            Err(ParseError::new(format!("invalid weight function parameters: {self}")))
        }
    }

    fn is_finite_params(&self) -> bool {
        match *self {
            WeightFunction::Constant(v)
            | WeightFunction::Exponential { rate: v }
            | WeightFunction::Window { width: v }
            | WeightFunction::PowerLaw { exponent: v } => v.is_finite(),
        }
    }

    /// `g(s)`. Negative ages evaluate to zero.
    pub fn eval(&self, s: T) -> T {
        if s < T::zero() {
            return T::zero();
        }
        match *self {
            WeightFunction::Constant(c) => c,
            WeightFunction::Exponential { rate } => (-rate * s).exp(),
            WeightFunction::Window { width } => {
                if s <= width {
                    T::one()
                } else {
                    T::zero()
                }
            }
            WeightFunction::PowerLaw { exponent } => (T::one() + s).powf(-exponent),
        }
    }

    /// `G(s) = ∫₀ˢ g`.
    pub fn integral(&self, s: T) -> T {
        if s <= T::zero() {
            return T::zero();
        }
        match *self {
            WeightFunction::Constant(c) => c * s,
            WeightFunction::Exponential { rate } => -(-rate * s).exp_m1() / rate,
            WeightFunction::Window { width } => s.min(width),
            WeightFunction::PowerLaw { exponent } => {
                if (exponent - T::one()).abs() < lit(1e-12) {
                    s.ln_1p()
                } else {
                    let q = T::one() - exponent;
                    ((T::one() + s).powf(q) - T::one()) / q
                }
            }
        }
    }

    /// `∫ₐᵇ g`.
    pub fn integral_between(&self, a: T, b: T) -> T {
        self.integral(b) - self.integral(a)
    }

    /// `G(∞)` when finite.
    pub fn total(&self) -> Option<T> {
        match *self {
            WeightFunction::Constant(_) => None,
            WeightFunction::Exponential { rate } => Some(rate.recip()),
            WeightFunction::Window { width } => Some(width),
            WeightFunction::PowerLaw { exponent } => {
                (exponent > T::one()).then(|| (exponent - T::one()).recip())
            }
        }
    }

    pub fn is_integrable(&self) -> bool {
        self.total().is_some()
    }

    /// Upper bound on `∫ₛ^∞ g`, or `None` when the tail is infinite.
    pub fn tail(&self, s: T) -> Option<T> {
        self.total().map(|total| (total - self.integral(s)).max(T::zero()))
    }

    /// Converts the parameters to another scalar type.
    pub fn cast<U: Scalar>(&self) -> WeightFunction<U> {
        let c = |v: T| U::lit(v.to_f64_lossy());
        match *self {
            WeightFunction::Constant(v) => WeightFunction::Constant(c(v)),
            WeightFunction::Exponential { rate } => WeightFunction::Exponential { rate: c(rate) },
            WeightFunction::Window { width } => WeightFunction::Window { width: c(width) },
            WeightFunction::PowerLaw { exponent } => {
                WeightFunction::PowerLaw { exponent: c(exponent) }
            }
        }
    }
}

impl<T: Scalar> fmt::Display for WeightFunction<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            WeightFunction::Constant(c) if c == T::one() => write!(f, "const"),
            WeightFunction::Constant(c) => write!(f, "const,{c}"),
            WeightFunction::Exponential { rate } => write!(f, "exp,{rate}"),
            WeightFunction::Window { width } => write!(f, "window,{width}"),
            WeightFunction::PowerLaw { exponent } => write!(f, "power,{exponent}"),
        }
    }
}

/// Accepts `const`, `const,c`, `exp,beta`, `window,w`, `power,p`, optionally
/// in keyword form such as `g=exp,beta=0.5`.
impl<T: Scalar> serde::Serialize for WeightFunction<T> {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de, T: Scalar> serde::Deserialize<'de> for WeightFunction<T> {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

impl<T: Scalar> FromStr for WeightFunction<T> {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s
            .split(',')
            .map(|p| p.trim())
            .map(|p| p.split_once('=').map_or(p, |(_, v)| v.trim()))
            .collect();
        let param = |idx: usize, default: Option<f64>| -> Result<T, ParseError> {
            match parts.get(idx) {
                Some(raw) => raw
                    .parse::<f64>()
                    .map(T::lit)
                    .map_err(|_| ParseError::new(format!("bad number `{raw}` in weight `{s}`"))),
                None => default
                    .map(T::lit)
                    .ok_or_else(|| ParseError::new(format!("missing parameter in weight `{s}`"))),
            }
        };
        if parts.len() > 2 {
            return Err(ParseError::new(format!("too many parameters in weight `{s}`")));
        }
        let g = match parts[0] {
            "const" | "constant" | "uniform" => WeightFunction::Constant(param(1, Some(1.0))?),
            "exp" | "exponential" => WeightFunction::Exponential { rate: param(1, Some(1.0))? },
            "window" | "box" => WeightFunction::Window { width: param(1, None)? },
            "power" | "powerlaw" => WeightFunction::PowerLaw { exponent: param(1, None)? },
            other => return Err(ParseError::new(format!("unknown weight function `{other}`"))),
        };
        g.validate()?;
        Ok(g)
    }
}
