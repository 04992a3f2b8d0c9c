//! Fluid-limit tip densities, solved along characteristics.
//!
//! With arrivals rescaled by `λ`, the free-tip density `x(t, s)` over ages
//! `s` obeys
//!
//! ```text
//! ∂ₜx + ∂ₛx = -x Σⱼ gⱼ(s) / ζⱼ(t),    x(t, 0) = 1,
//! ζⱼ(t) = ∫₀ʰ gⱼ + ∫ₕ^{t-h} gⱼ(s) x(t-h, s-h) ds,
//! ```
//!
//! and the full tip density is `l(t, s) = 1` for `s ≤ h`,
//! `l(t, s) = x(t-h, s-h)` beyond. Tips first appear at `t = h`; until `2h`
//! nothing has been approved yet, so `l ≡ 1` there and `ζⱼ(t) = Gⱼ(t-h)`.
//!
//! The grid uses one step `dt = h / n` for both `t` and `s`, so every
//! characteristic `t - s = const` runs through grid nodes. Row `i` holds
//! `x(h + i·dt, k·dt)` for `k = 0..=i`. Moving one cell along a
//! characteristic multiplies by `exp(-E)` with
//!
//! ```text
//! E = dt · Σⱼ ḡⱼ · ln(ζⱼ(t+dt) / ζⱼ(t)) / (ζⱼ(t+dt) - ζⱼ(t)),
//! ```
//!
//! i.e. `gⱼ` averaged over the cell and `1/ζⱼ` integrated exactly for a
//! linear `ζⱼ`. The rule stays finite next to the `ζ = 0` corner at `t = h`
//! and is exact there when `g` is constant. `ζⱼ` at a new row only needs the
//! row one delay `h` back, so the scheme is explicit.

use std::collections::{BTreeMap, VecDeque};
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quad::trapezoid;
use crate::scalar::{lit, Scalar};
use crate::weight::WeightFunction;

#[derive(Debug, Error)]
pub enum FluidError {
    #[error("invalid fluid configuration: {0}")]
    Config(String),
    #[error("weight {index} has no mass on [0, h]; the selection law is undefined at t = 2h")]
    NoHeadMass { index: usize },
    #[error("startup compatibility `{name}` off by {residual:e} (tolerance {tolerance:e})")]
    Compatibility { name: String, residual: f64, tolerance: f64 },
    #[error("grid invariant `{name}` broken at t={t}, s={s}")]
    Invariant { name: &'static str, t: f64, s: f64 },
    #[error("requested {what} at {at} outside the computed range")]
    OutOfRange { what: &'static str, at: f64 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Solver parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
#[serde(deny_unknown_fields)]
pub struct FluidConfig<T: Scalar> {
    pub h: T,
    /// Grid steps per delay `h`.
    #[serde(default = "default_steps_per_h")]
    pub steps_per_h: usize,
    pub t_max: T,
    /// One weight function per selection slot.
    pub weights: Vec<WeightFunction<T>>,
    /// Oldest age kept explicitly, as a multiple of `h`. Only applied when
    /// every weight is integrable; older free tips then drift unattenuated
    /// and the neglected `g` tail is reported.
    #[serde(default = "default_age_cap")]
    pub age_cap_h: T,
    /// Tolerance for the value identities of the startup data.
    #[serde(default = "default_compat_tol")]
    pub compat_tolerance: T,
    /// Keep every `stride`-th row for density dumps.
    #[serde(default)]
    pub density_stride: Option<usize>,
}

fn default_steps_per_h() -> usize {
    100
}

fn default_age_cap<T: Scalar>() -> T {
    lit(50.0)
}

fn default_compat_tol<T: Scalar>() -> T {
    lit(1e-6)
}

impl<T: Scalar> FluidConfig<T> {
    pub fn new(h: T, t_max: T, weights: Vec<WeightFunction<T>>) -> Self {
        Self {
            h,
            steps_per_h: default_steps_per_h(),
            t_max,
            weights,
            age_cap_h: default_age_cap(),
            compat_tolerance: default_compat_tol(),
            density_stride: None,
        }
    }

    pub fn dt(&self) -> T {
        self.h / T::from_usize(self.steps_per_h).unwrap()
    }

    pub fn validate(&self) -> Result<(), FluidError> {
        let bad = |m: String| Err(FluidError::Config(m));
        if !(self.h > T::zero() && self.h.is_finite()) {
            return bad(format!("h must be positive, got {}", self.h));
        }
        if self.steps_per_h < 2 {
            return bad("steps_per_h must be at least 2".into());
        }
        if !(self.t_max >= self.h * lit(2.0)) {
            return bad(format!("t_max {} must be at least 2h", self.t_max));
        }
        if self.weights.len() < 2 {
            return bad(format!("need at least two weight functions, got {}", self.weights.len()));
        }
        if !(self.age_cap_h > lit(1.0)) {
            return bad("age_cap_h must exceed 1".into());
        }
        for (index, g) in self.weights.iter().enumerate() {
            g.validate().map_err(|e| FluidError::Config(e.to_string()))?;
            if !(g.integral(self.h) > T::zero()) {
                return Err(FluidError::NoHeadMass { index });
            }
        }
        Ok(())
    }
}

/// `∫ 1/ζ` over a cell with `ζ` linear from `a` to `b`, divided by the cell
/// width.
fn mean_reciprocal<T: Scalar>(a: T, b: T) -> T {
    if a <= T::zero() || b <= T::zero() {
        return T::infinity();
    }
    let d = b - a;
    if d.abs() <= a * lit(1e-9) {
        // Second-order expansion of ln(b/a)/(b-a).
        let r = d / a;
        return (T::one() - r * lit(0.5) + r * r / lit(3.0)) / a;
    }
    (b / a).ln() / d
}

/// Exponent of one characteristic cell.
fn cell_exponent<T: Scalar>(gbar: &[T], zeta_from: &[T], zeta_to: &[T], dt: T) -> T {
    gbar.iter()
        .zip(zeta_from.iter().zip(zeta_to))
        .fold(T::zero(), |acc, (&g, (&a, &b))| {
            if g == T::zero() {
                acc
            } else {
                acc + g * dt * mean_reciprocal(a, b)
            }
        })
}

/// `P(t, s, v)` for an arbitrary normaliser history `zeta(j, time)`, on the
/// characteristic grid of step `dt` ending at `(t, s)`. `s - v` must be a
/// multiple of `dt`.
pub fn propagator_with<T: Scalar, Z: Fn(usize, T) -> T>(
    weights: &[WeightFunction<T>],
    zeta: Z,
    dt: T,
    t: T,
    s: T,
    v: T,
) -> T {
    let cells = ((s - v) / dt).round().to_usize().unwrap_or(0);
    let m = weights.len();
    let mut exponent = T::zero();
    let mut gbar = vec![T::zero(); m];
    let mut za = vec![T::zero(); m];
    let mut zb = vec![T::zero(); m];
    for c in 0..cells {
        let age = v + dt * T::from_usize(c).unwrap();
        let time = t - (s - age);
        for j in 0..m {
            gbar[j] = (weights[j].eval(age) + weights[j].eval(age + dt)) * lit(0.5);
            za[j] = zeta(j, time);
            zb[j] = zeta(j, time + dt);
        }
        exponent = exponent + cell_exponent(&gbar, &za, &zb, dt);
    }
    (-exponent).exp()
}

/// `x(2h, ·)` and `ζⱼ` on `[2h, 3h]`, with the residuals of the startup
/// compatibility identities.
#[derive(Debug, Clone)]
pub struct StartupData<T> {
    /// `φ(s) = x(2h, s)` at `s = k·dt`, `k = 0..=n`.
    pub phi: Vec<T>,
    /// `ψⱼ(u) = ζⱼ(2h + u)` at `u = k·dt`, `k = 0..=n`.
    pub psi: Vec<Vec<T>>,
    pub residuals: Vec<(String, f64, f64)>,
}

/// Totals at one grid time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidTotals<T> {
    pub t: T,
    pub x: T,
    pub l: T,
    pub w: T,
}

#[derive(Debug, Clone)]
pub struct FluidGrid<T: Scalar> {
    config: FluidConfig<T>,
    dt: T,
    n: usize,
    /// Largest stored age index, when ages are capped.
    cap: Option<usize>,
    /// Rows `current - rows.len() + 1 ..= current`.
    rows: VecDeque<Vec<T>>,
    current: usize,
    head_mass: Vec<T>,
    /// `gbar[k][j]`: cell average of `gⱼ` on `[k·dt, (k+1)·dt]`.
    gbar: Vec<Vec<T>>,
    /// `g_on_l[j][k] = gⱼ(h + k·dt)`, for the `ζ` integral.
    g_shifted: Vec<Vec<T>>,
    zeta: Vec<Vec<T>>,
    x_total: Vec<T>,
    /// `x(tᵢ, s_cap)` per row, once rows reach the cap.
    cap_history: Vec<T>,
    cap_prefix: Vec<T>,
    retained: BTreeMap<usize, Vec<T>>,
    startup: Option<StartupData<T>>,
    /// Upper bound on the `ζ` truncation error from the age cap.
    pub truncation_bound: T,
}

impl<T: Scalar> FluidGrid<T> {
    pub fn new(config: FluidConfig<T>) -> Result<Self, FluidError> {
        config.validate()?;
        let n = config.steps_per_h;
        let dt = config.dt();
        let m = config.weights.len();
        let cap = if config.weights.iter().all(|g| g.is_integrable()) {
            Some((config.age_cap_h * T::from_usize(n).unwrap()).round().to_usize().unwrap())
        } else {
            None
        };
        let truncation_bound = match cap {
            Some(k) => {
                let s_cap = config.h + dt * T::from_usize(k).unwrap();
                config
                    .weights
                    .iter()
                    .map(|g| g.tail(s_cap).unwrap_or_else(T::zero))
                    .fold(T::zero(), T::max)
            }
            None => T::zero(),
        };
        let head_mass = config.weights.iter().map(|g| g.integral(config.h)).collect();
        let mut grid = Self {
            dt,
            n,
            cap,
            rows: VecDeque::from(vec![vec![T::one()]]),
            current: 0,
            head_mass,
            gbar: Vec::new(),
            g_shifted: vec![Vec::new(); m],
            zeta: vec![vec![T::zero()]; m],
            x_total: vec![T::zero()],
            cap_history: Vec::new(),
            cap_prefix: Vec::new(),
            retained: BTreeMap::new(),
            startup: None,
            truncation_bound,
            config,
        };
        grid.retain_row(0);
        Ok(grid)
    }

    pub fn config(&self) -> &FluidConfig<T> {
        &self.config
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn steps_per_h(&self) -> usize {
        self.n
    }

    /// Time of row `i`.
    pub fn time(&self, i: usize) -> T {
        self.config.h + self.dt * T::from_usize(i).unwrap()
    }

    /// Index of the last computed row.
    pub fn current_row_index(&self) -> usize {
        self.current
    }

    pub fn current_time(&self) -> T {
        self.time(self.current)
    }

    fn row_index(&self, t: T) -> Result<usize, FluidError> {
        let r = (t - self.config.h) / self.dt;
        let i = r.round();
        if i < T::zero() || (r - i).abs() > lit(1e-6) {
            return Err(FluidError::OutOfRange { what: "grid time", at: t.to_f64_lossy() });
        }
        Ok(i.to_usize().unwrap())
    }

    fn age_index(&self, s: T) -> Result<usize, FluidError> {
        let r = s / self.dt;
        let k = r.round();
        if k < T::zero() || (r - k).abs() > lit(1e-6) {
            return Err(FluidError::OutOfRange { what: "grid age", at: s.to_f64_lossy() });
        }
        Ok(k.to_usize().unwrap())
    }

    fn ensure_tables(&mut self, len: usize) {
        let m = self.config.weights.len();
        while self.gbar.len() < len {
            let k = self.gbar.len();
            let a = self.dt * T::from_usize(k).unwrap();
            let row = (0..m)
                .map(|j| {
                    let g = &self.config.weights[j];
                    (g.eval(a) + g.eval(a + self.dt)) * lit(0.5)
                })
                .collect();
            self.gbar.push(row);
        }
        for j in 0..m {
            let g = self.config.weights[j];
            let table = &mut self.g_shifted[j];
            while table.len() < len {
                let k = table.len();
                table.push(g.eval(self.config.h + self.dt * T::from_usize(k).unwrap()));
            }
        }
    }

    /// Row `i` if it is still buffered.
    fn row(&self, i: usize) -> Option<&Vec<T>> {
        let first = self.current + 1 - self.rows.len();
        (i >= first && i <= self.current).then(|| &self.rows[i - first])
    }

    /// `ζⱼ` at row `i`, which must be at most one row ahead of `current`.
    fn compute_zeta(&self, i: usize) -> Vec<T> {
        let m = self.config.weights.len();
        if i <= self.n {
            let u = self.dt * T::from_usize(i).unwrap();
            return self.config.weights.iter().map(|g| g.integral(u)).collect();
        }
        let lagged = self.row(i - self.n).expect("lagged row buffered");
        (0..m)
            .map(|j| {
                let g = &self.g_shifted[j];
                let weighted: Vec<T> = lagged.iter().zip(g).map(|(&x, &gv)| x * gv).collect();
                self.head_mass[j] + trapezoid(&weighted, self.dt)
            })
            .collect()
    }

    fn retain_row(&mut self, i: usize) {
        if let Some(stride) = self.config.density_stride {
            if stride > 0 && i.is_multiple_of(stride) {
                self.retained.insert(i, self.rows.back().unwrap().clone());
            }
        }
    }

    /// Computes row `current + 1`.
    pub fn advance_row(&mut self) -> Result<(), FluidError> {
        let i = self.current;
        let len = self.rows.back().unwrap().len();
        self.ensure_tables(len + 1);
        let next_zeta = self.compute_zeta(i + 1);
        let m = self.config.weights.len();
        let now: Vec<T> = (0..m).map(|j| self.zeta[j][i]).collect();

        let prev = self.rows.back().unwrap();
        let keep = match self.cap {
            Some(cap) => (len + 1).min(cap + 1),
            None => len + 1,
        };
        let mut next = Vec::with_capacity(keep);
        next.push(T::one());
        for (gbar, &x) in self.gbar.iter().zip(prev).take(keep - 1) {
            let e = cell_exponent(gbar, &now, &next_zeta, self.dt);
            next.push(x * (-e).exp());
        }

        for (j, z) in next_zeta.into_iter().enumerate() {
            if i + 1 > self.n && z < self.head_mass[j] * (T::one() - lit(1e-12)) {
                return Err(FluidError::Invariant {
                    name: "zeta >= head mass",
                    t: self.time(i + 1).to_f64_lossy(),
                    s: 0.0,
                });
            }
            self.zeta[j].push(z);
        }
        if self.rows.len() > self.n {
            self.rows.pop_front();
        }
        self.rows.push_back(next);
        self.current = i + 1;
        self.after_row()?;
        self.retain_row(self.current);
        Ok(())
    }

    fn after_row(&mut self) -> Result<(), FluidError> {
        let i = self.current;
        let row = self.rows.back().unwrap();
        if let Some(cap) = self.cap {
            if row.len() == cap + 1 {
                let v = row[cap];
                let prev = self.cap_prefix.last().copied().unwrap_or_else(T::zero);
                self.cap_history.push(v);
                self.cap_prefix.push(prev + v);
            }
        }
        let mut total = trapezoid(row, self.dt);
        if let Some(cap) = self.cap {
            if i > cap {
                // Frozen ages s_cap..t-h hold x(t - j·dt, s_cap), j = 0..=i-cap.
                let hist = &self.cap_history;
                let last = hist.len() - 1;
                let first = last - (i - cap);
                let below = if first == 0 { T::zero() } else { self.cap_prefix[first - 1] };
                let sum = self.cap_prefix[last] - below;
                total = total + self.dt * (sum - (hist[first] + hist[last]) * lit(0.5));
            }
        }
        self.x_total.push(total);

        // 0 <= x <= l <= 1 along the stored row.
        let t = self.time(i);
        let lagged = (i >= self.n).then(|| self.row(i - self.n)).flatten();
        for (k, &x) in row.iter().enumerate() {
            let l = if k <= self.n {
                T::one()
            } else {
                lagged.map_or(T::one(), |r| r.get(k - self.n).copied().unwrap_or(T::one()))
            };
            if !(x >= T::zero() && x <= l * (T::one() + lit(1e-9))) {
                return Err(FluidError::Invariant {
                    name: "0 <= x <= l <= 1",
                    t: t.to_f64_lossy(),
                    s: (self.dt * T::from_usize(k).unwrap()).to_f64_lossy(),
                });
            }
        }
        let m = T::from_usize(self.config.weights.len()).unwrap();
        let w = self.l_total_at(i) - total;
        if w > m * self.config.h * (T::one() + lit(1e-9)) {
            return Err(FluidError::Invariant { name: "w <= m h", t: t.to_f64_lossy(), s: 0.0 });
        }
        Ok(())
    }

    fn l_total_at(&self, i: usize) -> T {
        if i <= self.n {
            self.dt * T::from_usize(i).unwrap()
        } else {
            self.config.h + self.x_total[i - self.n]
        }
    }

    /// Solves `[h, 2h]`, where no approval has completed, and derives
    /// `ζⱼ` on `[2h, 3h]`; then checks the compatibility identities.
    pub fn build_startup(&mut self) -> Result<&StartupData<T>, FluidError> {
        if self.startup.is_none() {
            self.advance_block(1)?;
        }
        Ok(self.startup.as_ref().unwrap())
    }

    fn finish_startup(&mut self) -> Result<(), FluidError> {
        let n = self.n;
        let m = self.config.weights.len();
        let phi = self.row(n).expect("row 2h buffered").clone();
        // ψ needs ζ on rows n..=2n, which only depends on rows 0..=n.
        let mut psi = vec![Vec::with_capacity(n + 1); m];
        let ahead: Vec<Vec<T>> = (n..=2 * n)
            .map(|i| self.compute_zeta_from_startup(i, &phi))
            .collect();
        for z in &ahead {
            for (series, &value) in psi.iter_mut().zip(z) {
                series.push(value);
            }
        }
        let mut residuals = Vec::new();
        let tol = self.config.compat_tolerance.to_f64_lossy();
        let dt = self.dt.to_f64_lossy();
        let mut check = |name: String, residual: f64, tolerance: f64| {
            residuals.push((name, residual, tolerance));
        };
        check("phi(0) = 1".into(), (phi[0] - T::one()).abs().to_f64_lossy(), tol);
        for (j, (g, psi_j)) in self.config.weights.iter().zip(&psi).enumerate() {
            let head = g.integral(self.config.h);
            check(
                format!("psi_{}(0) = int_0^h g", j + 1),
                (psi_j[0] - head).abs().to_f64_lossy(),
                tol,
            );
            let weighted: Vec<T> =
                phi.iter().enumerate().map(|(k, &p)| g.eval(self.time(k)) * p).collect();
            let expected = psi_j[0] + trapezoid(&weighted, self.dt);
            check(
                format!("psi_{}(h) = psi_{}(0) + int g phi", j + 1, j + 1),
                (psi_j[n] - expected).abs().to_f64_lossy(),
                tol,
            );
            let dip = psi_j.iter().fold(T::zero(), |acc, &v| acc.max(psi_j[0] - v));
            check(format!("psi_{}(t) >= psi_{}(0)", j + 1, j + 1), dip.to_f64_lossy(), tol);
        }
        // Derivative identities hold up to the O(dt) discretisation error.
        let slope_rhs: f64 = (0..m)
            .map(|j| (self.config.weights[j].eval(T::zero()) / psi[j][0]).to_f64_lossy())
            .sum();
        let phi_slope = ((phi[1] - phi[0]) / self.dt).to_f64_lossy();
        check(
            "phi'(0) = -sum g(0)/psi(0)".into(),
            (phi_slope + slope_rhs).abs(),
            4.0 * dt * (1.0 + slope_rhs * slope_rhs),
        );
        let dphi: Vec<f64> = (0..=n)
            .map(|k| {
                let (a, b) = if k == 0 {
                    (0, 1)
                } else if k == n {
                    (n - 1, n)
                } else {
                    (k - 1, k + 1)
                };
                ((phi[b] - phi[a]).to_f64_lossy()) / (dt * (b - a) as f64)
            })
            .collect();
        for j in 0..m {
            let g = &self.config.weights[j];
            let integrand: Vec<f64> = (0..=n)
                .map(|k| {
                    let age = self.dt * T::from_usize(k).unwrap();
                    let rate: f64 = (0..m)
                        .map(|i| (self.config.weights[i].eval(age) / psi[i][0]).to_f64_lossy())
                        .sum();
                    g.eval(self.time(k)).to_f64_lossy() * (rate * phi[k].to_f64_lossy() + dphi[k])
                })
                .collect();
            let rhs = g.eval(self.config.h * lit(2.0)).to_f64_lossy() * phi[n].to_f64_lossy()
                - trapezoid(&integrand, dt);
            let lhs = ((psi[j][n] - psi[j][n - 1]) / self.dt).to_f64_lossy();
            check(
                format!("psi_{}'(h) identity", j + 1),
                (lhs - rhs).abs(),
                8.0 * dt * (1.0 + rhs.abs() + slope_rhs),
            );
        }
        for (name, residual, tolerance) in &residuals {
            if !(residual <= tolerance) {
                return Err(FluidError::Compatibility {
                    name: name.clone(),
                    residual: *residual,
                    tolerance: *tolerance,
                });
            }
        }
        self.startup = Some(StartupData { phi, psi, residuals });
        Ok(())
    }

    fn compute_zeta_from_startup(&self, i: usize, phi: &[T]) -> Vec<T> {
        let lag = i - self.n;
        let lagged: Vec<T> = if lag == self.n {
            phi.to_vec()
        } else {
            self.row(lag).expect("startup rows buffered").clone()
        };
        (0..self.config.weights.len())
            .map(|j| {
                let weighted: Vec<T> =
                    lagged.iter().zip(&self.g_shifted[j]).map(|(&x, &g)| x * g).collect();
                self.head_mass[j] + trapezoid(&weighted, self.dt)
            })
            .collect()
    }

    pub fn startup(&self) -> Option<&StartupData<T>> {
        self.startup.as_ref()
    }

    /// Fills the block `[kh, (k+1)h]`, `k ≥ 1`. Block 1 is the startup.
    pub fn advance_block(&mut self, k: usize) -> Result<(), FluidError> {
        assert!(k >= 1, "blocks start at k = 1");
        let end = k * self.n;
        if self.current < (k - 1) * self.n {
            return Err(FluidError::OutOfRange {
                what: "block start",
                at: (self.config.h * T::from_usize(k).unwrap()).to_f64_lossy(),
            });
        }
        self.ensure_tables(end + 2);
        while self.current < end {
            self.advance_row()?;
        }
        if k == 1 && self.startup.is_none() {
            self.finish_startup()?;
        }
        Ok(())
    }

    /// Runs until `t_max`.
    pub fn solve(&mut self) -> Result<(), FluidError> {
        self.build_startup()?;
        let last = ((self.config.t_max - self.config.h) / self.dt).ceil().to_usize().unwrap();
        while self.current < last {
            self.advance_row()?;
        }
        Ok(())
    }

    /// `x(t)`, `l(t)`, `w(t)` at a computed grid time.
    pub fn totals(&self, t: T) -> Result<FluidTotals<T>, FluidError> {
        let i = self.row_index(t)?;
        self.totals_at(i)
            .ok_or(FluidError::OutOfRange { what: "totals", at: t.to_f64_lossy() })
    }

    pub fn totals_at(&self, i: usize) -> Option<FluidTotals<T>> {
        (i <= self.current).then(|| {
            let x = self.x_total[i];
            let l = self.l_total_at(i);
            FluidTotals { t: self.time(i), x, l, w: l - x }
        })
    }

    /// All totals from `t = h` to the current row.
    pub fn series(&self) -> Vec<FluidTotals<T>> {
        (0..=self.current).filter_map(|i| self.totals_at(i)).collect()
    }

    /// `ζⱼ` at a computed grid time.
    pub fn zeta(&self, j: usize, t: T) -> Result<T, FluidError> {
        let i = self.row_index(t)?;
        self.zeta
            .get(j)
            .and_then(|z| z.get(i))
            .copied()
            .ok_or(FluidError::OutOfRange { what: "zeta", at: t.to_f64_lossy() })
    }

    pub fn zeta_series(&self, j: usize) -> &[T] {
        &self.zeta[j]
    }

    /// `P(t, s, v)` on the grid, from the stored `ζ` history.
    pub fn propagator(&self, t: T, s: T, v: T) -> Result<T, FluidError> {
        let i = self.row_index(t)?;
        let ks = self.age_index(s)?;
        let kv = self.age_index(v)?;
        if kv > ks || ks > i || i > self.current {
            return Err(FluidError::OutOfRange { what: "propagator", at: s.to_f64_lossy() });
        }
        let m = self.config.weights.len();
        let mut exponent = T::zero();
        let mut a = vec![T::zero(); m];
        let mut b = vec![T::zero(); m];
        for c in kv..ks {
            let r = i - (ks - c);
            for j in 0..m {
                a[j] = self.zeta[j][r];
                b[j] = self.zeta[j][r + 1];
            }
            let gbar: Vec<T> = (0..m)
                .map(|j| {
                    let g = &self.config.weights[j];
                    let age = self.dt * T::from_usize(c).unwrap();
                    (g.eval(age) + g.eval(age + self.dt)) * lit(0.5)
                })
                .collect();
            exponent = exponent + cell_exponent(&gbar, &a, &b, self.dt);
        }
        Ok((-exponent).exp())
    }

    /// `x(t, s)` for a buffered or retained row.
    pub fn x_at(&self, t: T, s: T) -> Result<T, FluidError> {
        let i = self.row_index(t)?;
        let k = self.age_index(s)?;
        if k > i {
            return Err(FluidError::OutOfRange { what: "age", at: s.to_f64_lossy() });
        }
        let row = self
            .row(i)
            .or_else(|| self.retained.get(&i))
            .ok_or(FluidError::OutOfRange { what: "row", at: t.to_f64_lossy() })?;
        match row.get(k) {
            Some(&v) => Ok(v),
            None => {
                // Beyond the cap: the value froze when it crossed s_cap.
                let cap = self.cap.expect("short rows only occur with a cap");
                let crossed = i - (k - cap);
                let offset = self.cap_history.len() - 1 - (self.current - crossed);
                Ok(self.cap_history[offset])
            }
        }
    }

    /// `l(t, s)` via `l = 1` on `[0, h]` and `x(t-h, s-h)` beyond.
    pub fn l_at(&self, t: T, s: T) -> Result<T, FluidError> {
        if s <= self.config.h * (T::one() + lit(1e-12)) {
            let i = self.row_index(t)?;
            let k = self.age_index(s)?;
            return if k <= i {
                Ok(T::one())
            } else {
                Err(FluidError::OutOfRange { what: "age", at: s.to_f64_lossy() })
            };
        }
        self.x_at(t - self.config.h, s - self.config.h)
    }

    /// The latest row `x(t, k·dt)`.
    pub fn current_row(&self) -> &[T] {
        self.rows.back().unwrap()
    }

    /// Writes `t,x_total,l_total,w_total,zeta_1..zeta_m`.
    pub fn write_totals_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let m = self.config.weights.len();
        let zeta_cols: Vec<String> = (1..=m).map(|j| format!("zeta_{j}")).collect();
        writeln!(out, "t,x_total,l_total,w_total,{}", zeta_cols.join(","))?;
        for i in 0..=self.current {
            let tot = self.totals_at(i).unwrap();
            write!(out, "{},{},{},{}", tot.t, tot.x, tot.l, tot.w)?;
            for j in 0..m {
                write!(out, ",{}", self.zeta[j][i])?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// Writes `t,s,x,l` for every retained row.
    pub fn write_density_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,s,x,l")?;
        for (&i, row) in &self.retained {
            let t = self.time(i);
            for (k, &x) in row.iter().enumerate() {
                let s = self.dt * T::from_usize(k).unwrap();
                let l = if k <= self.n {
                    T::one()
                } else {
                    self.retained
                        .get(&(i - self.n))
                        .and_then(|r| r.get(k - self.n))
                        .copied()
                        .unwrap_or_else(T::nan)
                };
                writeln!(out, "{t},{s},{x},{l}")?;
            }
        }
        Ok(())
    }
}
