//! Time-stepped agent simulation of the tip set and the Monte Carlo batch
//! driver.
//!
//! Step `t` runs in this order:
//! 1. commit every transaction created at `t - h`;
//! 2. draw `k ~ Poisson(λ)` arrivals;
//! 3. each arrival selects `m` tips against the start-of-step view, then the
//!    chosen free tips are marked pending in id order;
//! 4. `L, X, W, N` are recorded and the bookkeeping identities are checked;
//! 5. the clock advances.
//!
//! The genesis is attached at step 0. Arrivals before step `h` can only pick
//! the genesis, so the first `h` steps are a warm-up.

use std::collections::VecDeque;
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ParseError;
use crate::selection::{SelectionError, SelectionPolicy, StepSelector};
use crate::stats::{index_slope, mean};
use crate::tangle::{SiteId, Step, TangleError, TangleState};

/// Fraction of the horizon used for tail statistics.
pub const DEFAULT_TAIL_FRACTION: f64 = 0.25;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Config(#[from] ParseError),
    #[error(transparent)]
    Tangle(#[from] TangleError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error("bookkeeping identity `{identity}` broken at t={t}: {lhs} != {rhs}")]
    Bookkeeping { identity: &'static str, t: Step, lhs: u64, rhs: u64 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Mean arrivals per step.
    pub lambda: f64,
    /// Proof-of-work delay in steps.
    pub h: Step,
    /// Selections per transaction.
    #[serde(default = "default_m")]
    pub m: usize,
    pub horizon: Step,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    pub policy: SelectionPolicy,
}

fn default_m() -> usize {
    2
}

fn default_runs() -> usize {
    1
}

impl ScenarioConfig {
    pub fn new(lambda: f64, h: Step, policy: SelectionPolicy) -> Self {
        Self { lambda, h, m: 2, horizon: 1000, runs: 1, seed: 0, policy }
    }

    pub fn validate(&self) -> Result<(), ParseError> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(ParseError::new(format!("lambda must be positive, got {}", self.lambda)));
        }
        self.validate_structure()?;
        if self.horizon <= 2 * self.h {
            return Err(ParseError::new(format!(
                "horizon {} must exceed 2h = {}",
                self.horizon,
                2 * self.h
            )));
        }
        if self.runs == 0 {
            return Err(ParseError::new("runs must be at least 1"));
        }
        Ok(())
    }

    /// The subset of checks a single engine needs; allows `λ = 0` and short
    /// horizons.
    fn validate_structure(&self) -> Result<(), ParseError> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(ParseError::new(format!("lambda must be finite, got {}", self.lambda)));
        }
        if self.h == 0 {
            return Err(ParseError::new("h must be at least 1"));
        }
        if self.m < 2 {
            return Err(ParseError::new(format!("m must be at least 2, got {}", self.m)));
        }
        self.policy.validate()
    }

    /// Seed of run `i`.
    pub fn run_seed(&self, i: usize) -> u64 {
        self.seed.wrapping_add(i as u64)
    }
}

/// Poisson sample by sequential inversion of the CDF.
pub fn sample_poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    // e^{-λ} underflows past ~700; split into independent chunks.
    if lambda > 500.0 {
        let chunks = (lambda / 500.0).ceil();
        return (0..chunks as u64).map(|_| sample_poisson(lambda / chunks, rng)).sum();
    }
    let u: f64 = rng.random();
    let mut k = 0u64;
    let mut p = (-lambda).exp();
    let mut cdf = p;
    while u > cdf {
        k += 1;
        p *= lambda / k as f64;
        let next = cdf + p;
        if next == cdf && k as f64 > lambda {
            break;
        }
        cdf = next;
    }
    k
}

/// Per-step series of one run. Index `t` holds the state at the end of
/// step `t`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunTrace {
    pub seed: u64,
    pub l: Vec<u64>,
    pub x: Vec<u64>,
    pub w: Vec<u64>,
    pub n: Vec<u64>,
    /// Arrivals created in each step.
    pub arrivals: Vec<u64>,
    /// `Σ U(T_a)` over the arrivals of each step.
    pub free_hits: Vec<u64>,
}

impl RunTrace {
    pub fn len(&self) -> usize {
        self.l.len()
    }

    pub fn is_empty(&self) -> bool {
        self.l.is_empty()
    }

    pub fn final_l(&self) -> u64 {
        self.l.last().copied().unwrap_or(0)
    }

    /// First index of the tail window.
    pub fn tail_start(len: usize, fraction: f64) -> usize {
        let tail = ((len as f64) * fraction).ceil() as usize;
        len - tail.clamp(1.min(len), len)
    }

    fn tail(&self, fraction: f64) -> Vec<f64> {
        let start = Self::tail_start(self.len(), fraction);
        self.l[start..].iter().map(|&v| v as f64).collect()
    }

    pub fn tail_mean_l(&self, fraction: f64) -> f64 {
        mean(&self.tail(fraction))
    }

    /// Least-squares slope of `L(t)` per step over the tail window.
    pub fn tail_slope(&self, fraction: f64) -> f64 {
        index_slope(&self.tail(fraction))
    }

    /// Writes `t,L,X,W,N`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,L,X,W,N")?;
        for t in 0..self.len() {
            writeln!(out, "{t},{},{},{},{}", self.l[t], self.x[t], self.w[t], self.n[t])?;
        }
        Ok(())
    }

    /// Reads the `L` column of a trace CSV; other columns are kept too.
    pub fn read_csv(text: &str) -> Result<RunTrace, ParseError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header.trim() == "t,L,X,W,N" => {}
            _ => return Err(ParseError::new("trace CSV must start with `t,L,X,W,N`")),
        }
        let mut trace = RunTrace::default();
        for (lineno, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<u64> = line
                .split(',')
                .map(|f| f.trim().parse::<u64>())
                .collect::<Result<_, _>>()
                .map_err(|e| ParseError::new(format!("line {}: {e}", lineno + 1)))?;
            if fields.len() != 5 {
                return Err(ParseError::new(format!("line {}: expected 5 fields", lineno + 1)));
            }
            trace.l.push(fields[1]);
            trace.x.push(fields[2]);
            trace.w.push(fields[3]);
            trace.n.push(fields[4]);
        }
        Ok(trace)
    }
}

/// Writes `run,seed,final_L,tail_mean_L,tail_slope`.
pub fn write_summary_csv<W: Write>(traces: &[RunTrace], tail_fraction: f64, mut out: W) -> io::Result<()> {
    writeln!(out, "run,seed,final_L,tail_mean_L,tail_slope")?;
    for (i, trace) in traces.iter().enumerate() {
        writeln!(
            out,
            "{i},{},{},{:.6},{:.6}",
            trace.seed,
            trace.final_l(),
            trace.tail_mean_l(tail_fraction),
            trace.tail_slope(tail_fraction)
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
struct PendingCommit {
    due: Step,
    site: SiteId,
    parents: Vec<SiteId>,
}

/// A single simulation run.
#[derive(Debug)]
pub struct Simulation {
    config: ScenarioConfig,
    state: TangleState,
    queue: VecDeque<PendingCommit>,
    arrival_rng: ChaCha8Rng,
    selection_key: <ChaCha8Rng as SeedableRng>::Seed,
    trace: RunTrace,
    cum_arrivals: Vec<u64>,
    cum_hits: Vec<u64>,
}

impl Simulation {
    pub fn new(config: &ScenarioConfig, seed: u64) -> Result<Self, SimError> {
        config.validate_structure()?;
        let state = TangleState::with_genesis(config.h, config.m, config.policy.needs_weights());
        let arrival_rng = ChaCha8Rng::seed_from_u64(seed);
        let selection_key = arrival_rng.get_seed();
        Ok(Self {
            config: config.clone(),
            state,
            queue: VecDeque::new(),
            arrival_rng,
            selection_key,
            trace: RunTrace { seed, ..RunTrace::default() },
            cum_arrivals: Vec::new(),
            cum_hits: Vec::new(),
        })
    }

    pub fn state(&self) -> &TangleState {
        &self.state
    }

    pub fn trace(&self) -> &RunTrace {
        &self.trace
    }

    pub fn into_parts(self) -> (RunTrace, TangleState) {
        (self.trace, self.state)
    }

    /// Independent stream per arrival, so a policy change never shifts the
    /// arrival process.
    fn selection_rng(&self, site: SiteId) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.selection_key);
        rng.set_stream(site.0 as u64 + 1);
        rng
    }

    /// Advances one step with a Poisson number of arrivals.
    pub fn step(&mut self) -> Result<(), SimError> {
        let k = sample_poisson(self.config.lambda, &mut self.arrival_rng);
        self.step_with_arrivals(k, None)
    }

    /// Advances one step with exactly `k` arrivals. `forced` overrides the
    /// drawn selections (used to pin down specific collisions in tests).
    pub fn step_with_arrivals(
        &mut self,
        k: u64,
        forced: Option<&[Vec<SiteId>]>,
    ) -> Result<(), SimError> {
        let t = self.state.clock();
        while self.queue.front().is_some_and(|c| c.due == t) {
            let c = self.queue.pop_front().expect("non-empty");
            self.state.commit_attachment(c.site, &c.parents, t)?;
        }

        let new_sites: Vec<SiteId> =
            (0..k).map(|_| self.state.add_arrival(t)).collect::<Result<_, _>>()?;
        let selections: Vec<Vec<SiteId>> = match forced {
            Some(f) => f.to_vec(),
            None if new_sites.is_empty() => Vec::new(),
            None => {
                let selector = StepSelector::new(&self.state, &self.config.policy)?;
                new_sites
                    .iter()
                    .map(|&site| {
                        let mut rng = self.selection_rng(site);
                        selector.select(self.config.m, &mut rng).map(|r| r.chosen)
                    })
                    .collect::<Result<_, _>>()?
            }
        };

        let mut hits = 0u64;
        for (site, parents) in new_sites.into_iter().zip(selections) {
            hits += self.state.mark_pending(&parents)? as u64;
            self.queue.push_back(PendingCommit { due: t + self.config.h, site, parents });
        }

        self.record(t, k, hits)?;
        self.state.advance_clock();
        Ok(())
    }

    fn record(&mut self, t: Step, k: u64, hits: u64) -> Result<(), SimError> {
        let prev = |v: &[u64]| v.last().copied().unwrap_or(0);
        let cum_k = prev(&self.cum_arrivals) + k;
        let cum_u = prev(&self.cum_hits) + hits;
        self.cum_arrivals.push(cum_k);
        self.cum_hits.push(cum_u);
        let tr = &mut self.trace;
        tr.l.push(self.state.tip_count() as u64);
        tr.x.push(self.state.free_count() as u64);
        tr.w.push(self.state.pending_count() as u64);
        tr.n.push(self.state.arrival_count());
        tr.arrivals.push(k);
        tr.free_hits.push(hits);
        self.check_identities(t)
    }

    fn check_identities(&self, t: Step) -> Result<(), SimError> {
        let h = self.config.h;
        let at = |v: &[u64], s: Option<Step>| s.map_or(0, |s| v[s as usize]);
        let lag = t.checked_sub(h);
        // N(t - h), with the genesis counted as created before time 0.
        let n_lag = 1 + at(&self.cum_arrivals, lag);
        let u_all = self.cum_hits[t as usize];
        let u_lag = at(&self.cum_hits, lag);
        let k_window = self.cum_arrivals[t as usize] - at(&self.cum_arrivals, lag);
        let tr = &self.trace;
        let i = t as usize;
        let checks: [(&'static str, u64, u64); 4] = [
            ("N", tr.n[i], 1 + self.cum_arrivals[i]),
            ("W", tr.w[i], u_all - u_lag),
            ("X", tr.x[i], n_lag - u_all),
            ("L", tr.l[i], n_lag - u_lag),
        ];
        for (identity, lhs, rhs) in checks {
            if lhs != rhs {
                return Err(SimError::Bookkeeping { identity, t, lhs, rhs });
            }
        }
        let bound = self.config.m as u64 * k_window;
        if tr.w[i] > bound {
            return Err(SimError::Bookkeeping { identity: "W <= m*arrivals", t, lhs: tr.w[i], rhs: bound });
        }
        Ok(())
    }

    /// Steps until the clock reaches `horizon`.
    pub fn run_until(&mut self, horizon: Step) -> Result<(), SimError> {
        while self.state.clock() < horizon {
            self.step()?;
        }
        Ok(())
    }
}

/// One full run with its final state.
pub fn run_single(config: &ScenarioConfig, run: usize) -> Result<(RunTrace, TangleState), SimError> {
    let mut sim = Simulation::new(config, config.run_seed(run))?;
    sim.run_until(config.horizon)?;
    Ok(sim.into_parts())
}

/// `runs` independent traces with seeds `seed + i`, in run order.
pub fn run_batch(config: &ScenarioConfig) -> Result<Vec<RunTrace>, SimError> {
    config.validate()?;
    (0..config.runs)
        .into_par_iter()
        .map(|i| run_single(config, i).map(|(trace, _)| trace))
        .collect()
}

/// Tip ages at the end of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct OrphanStats {
    /// `histogram[a]` = number of tips of age `a`.
    pub histogram: Vec<u64>,
    pub threshold: Step,
    /// Fraction of tips strictly older than the threshold.
    pub orphan_fraction: f64,
}

impl OrphanStats {
    pub fn tip_count(&self) -> u64 {
        self.histogram.iter().sum()
    }
}

pub fn orphan_statistics(state: &TangleState, threshold: Step) -> OrphanStats {
    let mut histogram = Vec::new();
    let mut old = 0u64;
    for tip in state.tips() {
        let age = state.age(tip).expect("tips are attached") as usize;
        if histogram.len() <= age {
            histogram.resize(age + 1, 0);
        }
        histogram[age] += 1;
        if age as Step > threshold {
            old += 1;
        }
    }
    let total: u64 = histogram.iter().sum();
    let orphan_fraction = if total == 0 { 0.0 } else { old as f64 / total as f64 };
    OrphanStats { histogram, threshold, orphan_fraction }
}
