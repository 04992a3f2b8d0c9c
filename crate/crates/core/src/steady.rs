//! Time-independent profiles of the fluid model.
//!
//! A steady state has `x(s) = exp(-Σⱼ Gⱼ(s)/ζⱼ)`, `l(s) = 1` on `[0, h]` and
//! `l(s) = x(s-h)` beyond, with the normalisers fixed by
//!
//! ```text
//! ζⱼ = Fⱼ(ζ) = ∫₀ʰ gⱼ + ∫ₕ^∞ gⱼ(s) x(s-h; ζ) ds.
//! ```
//!
//! `F` is monotone in each `ζᵢ` and maps the box `[∫₀ʰ g, ∫₀^∞ g]` into
//! itself, so iterating from the upper corner decreases towards the largest
//! fixed point and iterating from the lower corner increases towards the
//! smallest. When both agree the fixed point is unique in the box.

use std::io::{self, Write};

use thiserror::Error;

use crate::quad::simpson;
use crate::scalar::{lit, Scalar};
use crate::stats::linear_fit;
use crate::weight::WeightFunction;

#[derive(Debug, Error)]
pub enum SteadyError {
    #[error("weight {index} ({weight}) is not integrable; no steady profile exists")]
    NotIntegrable { index: usize, weight: String },
    #[error("invalid steady-state input: {0}")]
    Config(String),
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("need m >= 2 slots, got {0}")]
    TooFewSlots(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyConfig<T> {
    pub h: T,
    pub weights: Vec<WeightFunction<T>>,
    /// Stop once the largest relative change of `ζ` drops below this.
    pub tolerance: T,
    pub max_iterations: usize,
    /// Simpson intervals per quadrature panel.
    pub panel_intervals: usize,
    /// Also iterate from the lower corner of the box.
    pub multi_start: bool,
}

impl<T: Scalar> SteadyConfig<T> {
    pub fn new(h: T, weights: Vec<WeightFunction<T>>) -> Self {
        Self {
            h,
            weights,
            tolerance: lit(1e-13),
            max_iterations: 100_000,
            panel_intervals: 400,
            multi_start: false,
        }
    }

    fn validate(&self) -> Result<(), SteadyError> {
        if !(self.h > T::zero()) {
            return Err(SteadyError::Config(format!("h must be positive, got {}", self.h)));
        }
        if self.weights.len() < 2 {
            return Err(SteadyError::TooFewSlots(self.weights.len()));
        }
        for (index, g) in self.weights.iter().enumerate() {
            g.validate().map_err(|e| SteadyError::Config(e.to_string()))?;
            if !g.is_integrable() {
                return Err(SteadyError::NotIntegrable { index, weight: g.to_string() });
            }
            if !(g.integral(self.h) > T::zero()) {
                return Err(SteadyError::Config(format!("weight {g} has no mass on [0, h]")));
            }
        }
        Ok(())
    }
}

/// `x(s) = exp(-Σⱼ Gⱼ(s)/ζⱼ)`.
pub fn steady_x<T: Scalar>(weights: &[WeightFunction<T>], zeta: &[T], s: T) -> T {
    let e = weights.iter().zip(zeta).fold(T::zero(), |acc, (g, &z)| acc + g.integral(s) / z);
    (-e).exp()
}

/// Integrates `f` over `[a, ∞)` on panels of doubling width until the
/// weight tail past the last panel is below `cutoff`. Returns the integral
/// and that tail.
fn panel_integral<T: Scalar, F: Fn(T) -> T>(
    f: F,
    g: &WeightFunction<T>,
    a: T,
    unit: T,
    intervals: usize,
    cutoff: T,
) -> (T, T) {
    let mut lo = a;
    let mut width = unit;
    let mut acc = T::zero();
    for _ in 0..200 {
        let hi = lo + width;
        acc = acc + simpson(&f, lo, hi, intervals);
        lo = hi;
        let tail = g.tail(lo).unwrap_or_else(T::infinity);
        if tail <= cutoff {
            return (acc, tail);
        }
        width = width * lit(2.0);
    }
    (acc, g.tail(lo).unwrap_or_else(T::infinity))
}

/// One application of the steady map `F`. The second value bounds the
/// truncated tail of each integral (`x ≤ 1`).
pub fn steady_map<T: Scalar>(
    weights: &[WeightFunction<T>],
    h: T,
    zeta: &[T],
    intervals: usize,
) -> (Vec<T>, T) {
    let cutoff = T::epsilon() * lit(1e-3);
    let mut truncation = T::zero();
    let values = weights
        .iter()
        .map(|g| {
            let (integral, tail) = panel_integral(
                |s| g.eval(s) * steady_x(weights, zeta, s - h),
                g,
                h,
                h,
                intervals,
                cutoff,
            );
            truncation = truncation.max(tail);
            g.integral(h) + integral
        })
        .collect();
    (values, truncation)
}

fn max_relative_change<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&u, &v)| acc.max((u - v).abs() / v.abs()))
}

#[derive(Debug, Clone)]
pub struct SteadyProfile<T> {
    pub h: T,
    pub weights: Vec<WeightFunction<T>>,
    pub zeta: Vec<T>,
    pub x_infinity: T,
    /// `max |ζⱼ - Fⱼ(ζ)| / ζⱼ` at the returned `ζ`, plus the tail bound.
    pub residual: T,
    pub iterations: usize,
    /// Fixed point reached from the lower corner, when requested.
    pub lower_zeta: Option<Vec<T>>,
}

impl<T: Scalar> SteadyProfile<T> {
    pub fn x(&self, s: T) -> T {
        steady_x(&self.weights, &self.zeta, s)
    }

    pub fn l(&self, s: T) -> T {
        if s <= self.h {
            T::one()
        } else {
            self.x(s - self.h)
        }
    }

    /// Whether the iterations from both corners met.
    pub fn unique_in_box(&self) -> Option<bool> {
        self.lower_zeta
            .as_ref()
            .map(|lower| max_relative_change(lower, &self.zeta) < lit(1e-8))
    }

    /// `∫₀^S x(s) ds`.
    pub fn tip_integral(&self, s_max: T, intervals_per_h: usize) -> T {
        let panels = (s_max / self.h).ceil().to_usize().unwrap_or(1).max(1);
        simpson(|s| self.x(s), T::zero(), s_max, panels * intervals_per_h)
    }
}

/// Iterates `ζ ← F(ζ)` from `∫₀^∞ g`.
pub fn solve_fixed_point<T: Scalar>(config: &SteadyConfig<T>) -> Result<SteadyProfile<T>, SteadyError> {
    config.validate()?;
    let upper: Vec<T> = config.weights.iter().map(|g| g.total().unwrap()).collect();
    let (zeta, iterations) = iterate(config, upper)?;
    let lower_zeta = if config.multi_start {
        let lower: Vec<T> = config.weights.iter().map(|g| g.integral(config.h)).collect();
        Some(iterate(config, lower)?.0)
    } else {
        None
    };
    let (image, truncation) = steady_map(&config.weights, config.h, &zeta, config.panel_intervals);
    let residual = max_relative_change(&zeta, &image) + truncation;
    let x_infinity = (-config
        .weights
        .iter()
        .zip(&zeta)
        .fold(T::zero(), |acc, (g, &z)| acc + g.total().unwrap() / z))
    .exp();
    Ok(SteadyProfile {
        h: config.h,
        weights: config.weights.clone(),
        zeta,
        x_infinity,
        residual,
        iterations,
        lower_zeta,
    })
}

fn iterate<T: Scalar>(config: &SteadyConfig<T>, start: Vec<T>) -> Result<(Vec<T>, usize), SteadyError> {
    let mut zeta = start;
    let mut change = T::infinity();
    for iteration in 1..=config.max_iterations {
        let (next, _) = steady_map(&config.weights, config.h, &zeta, config.panel_intervals);
        change = max_relative_change(&zeta, &next);
        zeta = next;
        if change < config.tolerance {
            return Ok((zeta, iteration));
        }
    }
    Err(SteadyError::NoConvergence {
        iterations: config.max_iterations,
        residual: change.to_f64_lossy(),
    })
}

/// `(x*, l*)` for constant unit weights on `m` slots: `x(s) = e^{-ms/l*}`
/// and `l* = h + l*/m`.
pub fn random_selection_fixed_point<T: Scalar>(h: T, m: usize) -> Result<(T, T), SteadyError> {
    if m < 2 {
        return Err(SteadyError::TooFewSlots(m));
    }
    let m = T::from_usize(m).unwrap();
    let l_star = h * m / (m - T::one());
    Ok((l_star / m, l_star))
}

/// Evidence that the tip count diverges linearly at a steady state.
#[derive(Debug, Clone)]
pub struct PersistenceReport {
    pub zeta: Vec<f64>,
    pub x_infinity: f64,
    /// `exp(-Σ Gⱼ(∞)/ζⱼ)` recomputed from the profile.
    pub x_infinity_formula: f64,
    pub residual: f64,
    pub s_max: f64,
    /// `(S, ∫₀^S x)` samples across `[0, s_max]`.
    pub integrals: Vec<(f64, f64)>,
    /// Least-squares line through the samples in `[s_max/2, s_max]`.
    pub tail_slope: f64,
    pub tail_intercept: f64,
    /// `∫₀^{s_max} x / ∫₀^{s_max/2} x`.
    pub doubling_ratio: f64,
    /// Smallest `l(s) - x(s)` over the sample ages.
    pub min_l_minus_x: f64,
    /// `(s, x(s), l(s))` at a handful of ages.
    pub witness: Vec<(f64, f64, f64)>,
}

impl PersistenceReport {
    pub fn slope_relative_error(&self) -> f64 {
        (self.tail_slope - self.x_infinity).abs() / self.x_infinity
    }

    /// `∫₀^S x ≥ x∞·S - C` on every sample, with `C` the fitted offset
    /// made nonnegative.
    pub fn lower_bound_holds(&self) -> bool {
        let c = (-self.tail_intercept).max(0.0) + 1e-9;
        self.integrals.iter().all(|&(s, v)| v >= self.x_infinity * s - c)
    }

    pub fn certifies_divergence(&self) -> bool {
        self.x_infinity > 0.0 && self.slope_relative_error() < 0.01 && self.min_l_minus_x >= 0.0
    }

    pub fn write_text<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "steady state")?;
        for (j, z) in self.zeta.iter().enumerate() {
            writeln!(out, "zeta_{} = {z:.12}", j + 1)?;
        }
        writeln!(out, "fixed-point residual = {:e}", self.residual)?;
        writeln!(out, "x_infinity = {:.12}", self.x_infinity)?;
        writeln!(out, "x_infinity (formula) = {:.12}", self.x_infinity_formula)?;
        writeln!(out, "tail slope of int_0^S x on [{}, {}] = {:.12}", self.s_max / 2.0, self.s_max, self.tail_slope)?;
        writeln!(out, "relative slope error = {:e}", self.slope_relative_error())?;
        writeln!(out, "doubling ratio = {:.6}", self.doubling_ratio)?;
        writeln!(out, "min l(s) - x(s) = {:e}", self.min_l_minus_x)?;
        let verdict = if self.certifies_divergence() { "diverges" } else { "not certified" };
        writeln!(out, "tip integral: {verdict}")
    }

    /// Witness table `s,x,l`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "s,x,l")?;
        for (s, x, l) in &self.witness {
            writeln!(out, "{s},{x},{l}")?;
        }
        Ok(())
    }
}

pub fn verify_orphan_persistence<T: Scalar>(profile: &SteadyProfile<T>, s_max: T) -> PersistenceReport {
    let s_max_f = s_max.to_f64_lossy();
    let samples = 64;
    let per_h = 64;
    let integrals: Vec<(f64, f64)> = (1..=samples)
        .map(|k| {
            let s = s_max * T::from_usize(k).unwrap() / T::from_usize(samples).unwrap();
            (s.to_f64_lossy(), profile.tip_integral(s, per_h).to_f64_lossy())
        })
        .collect();
    let tail: Vec<&(f64, f64)> = integrals.iter().filter(|(s, _)| *s >= s_max_f / 2.0).collect();
    let xs: Vec<f64> = tail.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = tail.iter().map(|p| p.1).collect();
    let (tail_slope, tail_intercept) = linear_fit(&xs, &ys);
    let full = integrals.last().unwrap().1;
    let half = profile.tip_integral(s_max * lit(0.5), per_h).to_f64_lossy();

    let mut min_l_minus_x = f64::INFINITY;
    let mut witness = Vec::new();
    let grid = 400;
    for k in 0..=grid {
        let s = s_max * T::from_usize(k).unwrap() / T::from_usize(grid).unwrap();
        let (x, l) = (profile.x(s).to_f64_lossy(), profile.l(s).to_f64_lossy());
        min_l_minus_x = min_l_minus_x.min(l - x);
        if k % 20 == 0 {
            witness.push((s.to_f64_lossy(), x, l));
        }
    }
    let x_infinity_formula = (-profile
        .weights
        .iter()
        .zip(&profile.zeta)
        .map(|(g, z)| (g.total().unwrap() / *z).to_f64_lossy())
        .sum::<f64>())
    .exp();
    PersistenceReport {
        zeta: profile.zeta.iter().map(|z| z.to_f64_lossy()).collect(),
        x_infinity: profile.x_infinity.to_f64_lossy(),
        x_infinity_formula,
        residual: profile.residual.to_f64_lossy(),
        s_max: s_max_f,
        integrals,
        tail_slope,
        tail_intercept,
        doubling_ratio: full / half,
        min_l_minus_x,
        witness,
    }
}
