//! Tip-selection distributions: uniform, cumulative-weight biased random
//! walk, age-weighted proxy and the two-stage hybrid.
//!
//! All draws for the arrivals of one step run against a [`StepSelector`]
//! built from the state at the start of that step. Selection never looks at
//! the free/pending split, so marking tips pending between draws does not
//! change the laws; the tip set itself and the cumulative weights only change
//! when attachments are committed at the start of the next step.

use std::fmt;
use std::str::FromStr;

use log::warn;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use thiserror::Error;

use crate::error::ParseError;
use crate::tangle::{SiteId, Step, TangleError, TangleState, TipStatus};
use crate::weight::WeightFunction;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SelectionError {
    #[error("the tip set is empty")]
    EmptyTipSet,
    #[error("site {0} has no attached approvers")]
    NoChildren(SiteId),
    #[error("need at least two selections per transaction, got {0}")]
    TooFewSlots(usize),
    #[error(transparent)]
    Tangle(#[from] TangleError),
}

/// Monotone link `f` turning weight differences into jump weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Link {
    #[default]
    Exp,
}

impl Link {
    /// `ln f(x)`.
    fn log_eval(self, x: f64) -> f64 {
        match self {
            Link::Exp => x,
        }
    }
}

/// Where a walk begins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WalkStart {
    #[default]
    Genesis,
    /// Walk back this many first-parent links from a uniformly chosen tip and
    /// start there.
    Depth(u32),
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SelectionPolicy {
    Uniform,
    McmcWalk { alpha: f64, link: Link, start: WalkStart },
    AgeWeighted(WeightFunction<f64>),
    /// Slot 1 from `first`, the remaining slots from `second`.
    Hybrid { first: Box<SelectionPolicy>, second: Box<SelectionPolicy> },
}

impl SelectionPolicy {
    pub fn mcmc(alpha: f64) -> Self {
        SelectionPolicy::McmcWalk { alpha, link: Link::Exp, start: WalkStart::Genesis }
    }

    pub fn hybrid(first: SelectionPolicy, second: SelectionPolicy) -> Self {
        SelectionPolicy::Hybrid { first: Box::new(first), second: Box::new(second) }
    }

    pub fn validate(&self) -> Result<(), ParseError> {
        match self {
            SelectionPolicy::Uniform => Ok(()),
            SelectionPolicy::McmcWalk { alpha, .. } => {
                if alpha.is_finite() && *alpha > 0.0 {
                    Ok(())
                } else {
                    Err(ParseError::new(format!("mcmc alpha must be positive, got {alpha}")))
                }
            }
            SelectionPolicy::AgeWeighted(g) => g.validate(),
            SelectionPolicy::Hybrid { first, second } => {
                if matches!(**first, SelectionPolicy::Hybrid { .. })
                    || matches!(**second, SelectionPolicy::Hybrid { .. })
                {
                    return Err(ParseError::new("hybrid policies nest one level only"));
                }
                first.validate()?;
                second.validate()
            }
        }
    }

    /// Policy used for slot `j` (zero-based).
    pub fn slot(&self, j: usize) -> &SelectionPolicy {
        match self {
            SelectionPolicy::Hybrid { first, second } => {
                if j == 0 {
                    first
                } else {
                    second
                }
            }
            other => other,
        }
    }

    /// Whether drawing from this policy needs cumulative weights.
    pub fn needs_weights(&self) -> bool {
        match self {
            SelectionPolicy::McmcWalk { .. } => true,
            SelectionPolicy::Hybrid { first, second } => {
                first.needs_weights() || second.needs_weights()
            }
            _ => false,
        }
    }
}

impl fmt::Display for SelectionPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectionPolicy::Uniform => write!(f, "uniform"),
            SelectionPolicy::McmcWalk { alpha, start, .. } => match start {
                WalkStart::Genesis => write!(f, "mcmc{{{alpha}}}"),
                WalkStart::Depth(d) => write!(f, "mcmc{{{alpha},depth={d}}}"),
            },
            SelectionPolicy::AgeWeighted(g) => write!(f, "age{{{g}}}"),
            SelectionPolicy::Hybrid { first, second } => write!(f, "hybrid{{{first},{second}}}"),
        }
    }
}

/// Splits on commas that are not nested inside braces.
fn split_top_level(s: &str) -> Result<Vec<&str>, ParseError> {
    let mut parts = Vec::new();
    let mut depth = 0usize;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '{' => depth += 1,
            '}' => {
                depth = depth
                    .checked_sub(1)
                    .ok_or_else(|| ParseError::new(format!("unbalanced braces in `{s}`")))?
            }
            ',' if depth == 0 => {
                parts.push(s[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err(ParseError::new(format!("unbalanced braces in `{s}`")));
    }
    parts.push(s[start..].trim());
    Ok(parts)
}

/// Grammar: `uniform`, `mcmc{alpha}`, `mcmc{alpha,depth=d}`,
/// `age{<weight>}` (e.g. `age{exp,1}` or `age{g=exp,beta=1}`),
/// `hybrid{<policy>,<policy>}`.
impl FromStr for SelectionPolicy {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (name, args) = match s.find('{') {
            Some(open) => {
                if !s.ends_with('}') {
                    return Err(ParseError::new(format!("missing closing brace in `{s}`")));
                }
                (s[..open].trim(), Some(&s[open + 1..s.len() - 1]))
            }
            None => (s, None),
        };
        let policy = match (name, args) {
            ("uniform" | "random", None) => SelectionPolicy::Uniform,
            ("mcmc", Some(args)) => {
                let parts = split_top_level(args)?;
                let alpha_raw = parts[0].strip_prefix("alpha=").unwrap_or(parts[0]);
                let alpha = alpha_raw
                    .parse::<f64>()
                    .map_err(|_| ParseError::new(format!("bad alpha `{alpha_raw}`")))?;
                let start = match parts.get(1) {
                    None => WalkStart::Genesis,
                    Some(p) => {
                        let raw = p.strip_prefix("depth=").unwrap_or(p);
                        WalkStart::Depth(
                            raw.parse()
                                .map_err(|_| ParseError::new(format!("bad walk depth `{raw}`")))?,
                        )
                    }
                };
                if parts.len() > 2 {
                    return Err(ParseError::new(format!("too many mcmc arguments in `{s}`")));
                }
                SelectionPolicy::McmcWalk { alpha, link: Link::Exp, start }
            }
            ("age", Some(args)) => SelectionPolicy::AgeWeighted(args.parse()?),
            ("hybrid", Some(args)) => {
                let parts = split_top_level(args)?;
                if parts.len() != 2 {
                    return Err(ParseError::new(format!("hybrid takes two policies: `{s}`")));
                }
                SelectionPolicy::hybrid(parts[0].parse()?, parts[1].parse()?)
            }
            _ => return Err(ParseError::new(format!("unknown selection policy `{s}`"))),
        };
        policy.validate()?;
        Ok(policy)
    }
}

impl TryFrom<String> for SelectionPolicy {
    type Error = ParseError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<SelectionPolicy> for String {
    fn from(policy: SelectionPolicy) -> Self {
        policy.to_string()
    }
}

/// Tips and their ages at the start of a step.
#[derive(Debug, Clone)]
pub struct TipSnapshot {
    pub time: Step,
    pub tips: Vec<SiteId>,
    pub ages: Vec<Step>,
}

impl TipSnapshot {
    pub fn capture(state: &TangleState) -> Self {
        let tips: Vec<SiteId> = state.tips().collect();
        let ages = tips.iter().map(|&b| state.age(b).expect("tips are attached")).collect();
        Self { time: state.clock(), tips, ages }
    }

    pub fn len(&self) -> usize {
        self.tips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tips.is_empty()
    }
}

/// `Q^(ran)`: one tip, uniformly.
pub fn select_uniform<R: Rng + ?Sized>(
    snapshot: &TipSnapshot,
    rng: &mut R,
) -> Result<SiteId, SelectionError> {
    if snapshot.is_empty() {
        return Err(SelectionError::EmptyTipSet);
    }
    Ok(snapshot.tips[rng.random_range(0..snapshot.len())])
}

/// Sampler for `Q_b = g(age_b) / Z`.
#[derive(Debug, Clone)]
pub struct AgeTable {
    index: Option<WeightedIndex<f64>>,
}

impl AgeTable {
    pub fn new(snapshot: &TipSnapshot, g: &WeightFunction<f64>) -> Self {
        let weights: Vec<f64> = snapshot.ages.iter().map(|&a| g.eval(a as f64)).collect();
        let index = match WeightedIndex::new(&weights) {
            Ok(index) => Some(index),
            Err(err) => {
                if !snapshot.is_empty() {
                    warn!("age weights degenerate at t={} ({err}); using uniform", snapshot.time);
                }
                None
            }
        };
        Self { index }
    }

    pub fn sample<R: Rng + ?Sized>(
        &self,
        snapshot: &TipSnapshot,
        rng: &mut R,
    ) -> Result<SiteId, SelectionError> {
        match &self.index {
            Some(index) => Ok(snapshot.tips[index.sample(rng)]),
            None => select_uniform(snapshot, rng),
        }
    }
}

/// One draw from the age-weighted law. Builds the table on every call; use a
/// [`StepSelector`] for repeated draws.
pub fn select_age_weighted<R: Rng + ?Sized>(
    snapshot: &TipSnapshot,
    g: &WeightFunction<f64>,
    rng: &mut R,
) -> Result<SiteId, SelectionError> {
    AgeTable::new(snapshot, g).sample(snapshot, rng)
}

/// Exact `Q_b = g(age_b) / Z(t)` over the snapshot, uniform when `Z = 0`.
pub fn age_weighted_probabilities(
    snapshot: &TipSnapshot,
    g: &WeightFunction<f64>,
) -> Vec<(SiteId, f64)> {
    let weights: Vec<f64> = snapshot.ages.iter().map(|&a| g.eval(a as f64)).collect();
    let z: f64 = weights.iter().sum();
    let n = snapshot.len() as f64;
    snapshot
        .tips
        .iter()
        .zip(weights)
        .map(|(&b, w)| (b, if z > 0.0 && z.is_finite() { w / z } else { 1.0 / n }))
        .collect()
}

fn weight_of(state: &TangleState, id: SiteId) -> Result<u64, TangleError> {
    state.cumulative_weight(id)
}

/// Jump probabilities from `current` to each attached approver `k`,
/// proportional to `f(-α(ϑ_current - ϑ_k))`.
pub fn mcmc_step_probabilities(
    state: &TangleState,
    current: SiteId,
    alpha: f64,
    link: Link,
) -> Result<Vec<(SiteId, f64)>, SelectionError> {
    let children = state.children(current);
    if children.is_empty() {
        return Err(SelectionError::NoChildren(current));
    }
    let here = weight_of(state, current)? as f64;
    let logs: Vec<f64> = children
        .iter()
        .map(|&k| Ok(link.log_eval(-alpha * (here - weight_of(state, k)? as f64))))
        .collect::<Result<_, TangleError>>()?;
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = raw.iter().sum();
    Ok(children.iter().zip(raw).map(|(&k, r)| (k, r / total)).collect())
}

/// One random-walk transition from `current` towards the tips.
pub fn mcmc_step<R: Rng + ?Sized>(
    state: &TangleState,
    current: SiteId,
    alpha: f64,
    link: Link,
    rng: &mut R,
) -> Result<SiteId, SelectionError> {
    let children = state.children(current);
    match children.len() {
        0 => Err(SelectionError::NoChildren(current)),
        1 => Ok(children[0]),
        _ => {
            let probs = mcmc_step_probabilities(state, current, alpha, link)?;
            let mut u: f64 = rng.random();
            for &(k, p) in &probs {
                if u < p {
                    return Ok(k);
                }
                u -= p;
            }
            Ok(probs.last().expect("non-empty").0)
        }
    }
}

/// Runs the walk from `start` until it reaches a site with no attached
/// approvers, i.e. a tip.
pub fn walk_from<R: Rng + ?Sized>(
    state: &TangleState,
    start: SiteId,
    alpha: f64,
    link: Link,
    rng: &mut R,
) -> Result<SiteId, SelectionError> {
    let mut current = start;
    while !state.children(current).is_empty() {
        current = mcmc_step(state, current, alpha, link, rng)?;
    }
    Ok(current)
}

/// MCMC tip selection: a walk from the genesis.
pub fn select_mcmc<R: Rng + ?Sized>(
    state: &TangleState,
    alpha: f64,
    rng: &mut R,
) -> Result<SiteId, SelectionError> {
    if state.attached_count() == 0 {
        return Err(SelectionError::EmptyTipSet);
    }
    walk_from(state, SiteId::GENESIS, alpha, Link::Exp, rng)
}

fn walk_start<R: Rng + ?Sized>(
    state: &TangleState,
    snapshot: &TipSnapshot,
    start: WalkStart,
    rng: &mut R,
) -> Result<SiteId, SelectionError> {
    match start {
        WalkStart::Genesis => Ok(SiteId::GENESIS),
        WalkStart::Depth(depth) => {
            let mut cur = select_uniform(snapshot, rng)?;
            for _ in 0..depth {
                match state.site(cur)?.parents.first() {
                    Some(&p) => cur = p,
                    None => break,
                }
            }
            Ok(cur)
        }
    }
}

/// Exit law of the walk from the genesis, by forward propagation of
/// probability mass in id order (ids are a topological order).
pub fn mcmc_exit_distribution(
    state: &TangleState,
    alpha: f64,
    link: Link,
) -> Result<Vec<(SiteId, f64)>, SelectionError> {
    let n = state.sites().len();
    let mut mass = vec![0.0; n];
    if n == 0 {
        return Err(SelectionError::EmptyTipSet);
    }
    mass[0] = 1.0;
    let mut exits = Vec::new();
    for site in state.sites() {
        let m = mass[site.id.index()];
        if m == 0.0 || !site.is_attached() {
            continue;
        }
        if state.children(site.id).is_empty() {
            exits.push((site.id, m));
            continue;
        }
        for (k, p) in mcmc_step_probabilities(state, site.id, alpha, link)? {
            mass[k.index()] += m * p;
        }
    }
    Ok(exits)
}

/// The tips chosen by one new transaction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionRecord {
    /// Slot `j` holds the tip chosen by the `j`-th selection.
    pub chosen: Vec<SiteId>,
    /// `U(T_a)`: distinct chosen tips that were free when marked.
    pub free_hits: usize,
}

impl SelectionRecord {
    /// `R_b^(j)`: whether slot `j` chose `b`.
    pub fn indicator(&self, b: SiteId, j: usize) -> bool {
        self.chosen.get(j) == Some(&b)
    }
}

#[derive(Debug, Clone)]
enum SlotSampler {
    Uniform,
    Mcmc { alpha: f64, link: Link, start: WalkStart },
    Age(AgeTable),
}

/// Per-step sampler bound to the start-of-step state.
#[derive(Debug)]
pub struct StepSelector<'a> {
    state: &'a TangleState,
    snapshot: TipSnapshot,
    policy: SelectionPolicy,
    first: SlotSampler,
    rest: SlotSampler,
}

impl<'a> StepSelector<'a> {
    pub fn new(state: &'a TangleState, policy: &SelectionPolicy) -> Result<Self, SelectionError> {
        let snapshot = TipSnapshot::capture(state);
        if snapshot.is_empty() {
            return Err(SelectionError::EmptyTipSet);
        }
        let build = |p: &SelectionPolicy| match p {
            SelectionPolicy::Uniform => SlotSampler::Uniform,
            SelectionPolicy::McmcWalk { alpha, link, start } => {
                SlotSampler::Mcmc { alpha: *alpha, link: *link, start: *start }
            }
            SelectionPolicy::AgeWeighted(g) => SlotSampler::Age(AgeTable::new(&snapshot, g)),
            SelectionPolicy::Hybrid { .. } => unreachable!("hybrid policies are flattened"),
        };
        let first = build(policy.slot(0));
        let rest = build(policy.slot(1));
        Ok(Self { state, snapshot, policy: policy.clone(), first, rest })
    }

    pub fn snapshot(&self) -> &TipSnapshot {
        &self.snapshot
    }

    fn draw<R: Rng + ?Sized>(&self, slot: &SlotSampler, rng: &mut R) -> Result<SiteId, SelectionError> {
        match slot {
            SlotSampler::Uniform => select_uniform(&self.snapshot, rng),
            SlotSampler::Mcmc { alpha, link, start } => {
                let from = walk_start(self.state, &self.snapshot, *start, rng)?;
                walk_from(self.state, from, *alpha, *link, rng)
            }
            SlotSampler::Age(table) => table.sample(&self.snapshot, rng),
        }
    }

    /// Draws `m` slots independently; slot 1 from the first policy, the
    /// others from the second. `free_hits` is computed against the current
    /// tip partition without modifying it.
    pub fn select<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<SelectionRecord, SelectionError> {
        if m < 2 {
            return Err(SelectionError::TooFewSlots(m));
        }
        let mut chosen = Vec::with_capacity(m);
        chosen.push(self.draw(&self.first, rng)?);
        for _ in 1..m {
            chosen.push(self.draw(&self.rest, rng)?);
        }
        let free_hits = distinct_free(self.state, &chosen);
        Ok(SelectionRecord { chosen, free_hits })
    }

    /// Exact law of slot `j`. Walks started from a random depth have no
    /// closed form and return `None`.
    pub fn slot_distribution(&self, j: usize) -> Option<Vec<(SiteId, f64)>> {
        match self.policy.slot(j) {
            SelectionPolicy::Uniform => {
                let p = 1.0 / self.snapshot.len() as f64;
                Some(self.snapshot.tips.iter().map(|&b| (b, p)).collect())
            }
            SelectionPolicy::AgeWeighted(g) => Some(age_weighted_probabilities(&self.snapshot, g)),
            SelectionPolicy::McmcWalk { alpha, link, start: WalkStart::Genesis } => {
                mcmc_exit_distribution(self.state, *alpha, *link).ok()
            }
            _ => None,
        }
    }

    /// `E[U] = Σ_{b free} [1 - Π_j (1 - Q_b^(j))]` for an `m`-slot draw.
    pub fn expected_free_hits(&self, m: usize) -> Option<f64> {
        let first = self.slot_distribution(0)?;
        let rest = self.slot_distribution(1)?;
        let lookup = |dist: &[(SiteId, f64)], b: SiteId| {
            dist.iter().find(|(k, _)| *k == b).map_or(0.0, |(_, p)| *p)
        };
        Some(
            self.state
                .free_tips()
                .iter()
                .map(|&b| {
                    let miss_first = 1.0 - lookup(&first, b);
                    let miss_rest = (1.0 - lookup(&rest, b)).powi(m as i32 - 1);
                    1.0 - miss_first * miss_rest
                })
                .sum(),
        )
    }
}

fn distinct_free(state: &TangleState, chosen: &[SiteId]) -> usize {
    chosen
        .iter()
        .enumerate()
        .filter(|&(i, b)| !chosen[..i].contains(b) && state.tip_status(*b) == Some(TipStatus::Free))
        .count()
}

/// Draws one transaction's `m` selections from a fresh start-of-step view.
pub fn select_m_tips<R: Rng + ?Sized>(
    state: &TangleState,
    policy: &SelectionPolicy,
    m: usize,
    rng: &mut R,
) -> Result<SelectionRecord, SelectionError> {
    StepSelector::new(state, policy)?.select(m, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// genesis <- 1, 2 ; 1 <- 3 ; 2 <- 4, with extra sites to shape weights.
    fn two_child_state(extra_left: usize, extra_right: usize) -> (TangleState, SiteId, SiteId) {
        let mut state = TangleState::with_genesis(1, 2, true);
        let g = SiteId::GENESIS;
        let a = state.add_arrival(0).unwrap();
        let b = state.add_arrival(0).unwrap();
        state.advance_clock();
        state.commit_attachment(a, &[g, g], 1).unwrap();
        state.commit_attachment(b, &[g, g], 1).unwrap();
        let mut left = a;
        let mut right = b;
        let mut t = 1;
        for i in 0..extra_left.max(extra_right) {
            let l = (i < extra_left).then(|| state.add_arrival(t).unwrap());
            let r = (i < extra_right).then(|| state.add_arrival(t).unwrap());
            state.advance_clock();
            t += 1;
            if let Some(l) = l {
                state.commit_attachment(l, &[left, left], t).unwrap();
                left = l;
            }
            if let Some(r) = r {
                state.commit_attachment(r, &[right, right], t).unwrap();
                right = r;
            }
        }
        (state, a, b)
    }

    #[test]
    fn equal_weights_split_evenly() {
        let (state, a, b) = two_child_state(0, 0);
        let p = mcmc_step_probabilities(&state, SiteId::GENESIS, 0.7, Link::Exp).unwrap();
        assert_eq!(p, vec![(a, 0.5), (b, 0.5)]);
    }

    #[test]
    fn weighted_step_matches_normalized_exponential() {
        // ϑ_a = 5, ϑ_b = 3.
        let (state, a, b) = two_child_state(4, 2);
        assert_eq!(state.cumulative_weight(a), Ok(5));
        assert_eq!(state.cumulative_weight(b), Ok(3));
        let p = mcmc_step_probabilities(&state, SiteId::GENESIS, 0.5, Link::Exp).unwrap();
        let e = std::f64::consts::E;
        assert!((p[0].1 - e / (1.0 + e)).abs() < 1e-12);
        assert!((p[1].1 - 1.0 / (1.0 + e)).abs() < 1e-12);
        assert!((p[0].1 - 0.7311).abs() < 1e-4);
    }

    #[test]
    fn alpha_limits() {
        let (state, _, _) = two_child_state(4, 2);
        let cold = mcmc_step_probabilities(&state, SiteId::GENESIS, 1e-12, Link::Exp).unwrap();
        assert!((cold[0].1 - 0.5).abs() < 1e-9);
        let hot = mcmc_step_probabilities(&state, SiteId::GENESIS, 500.0, Link::Exp).unwrap();
        assert!(hot[0].1 > 1.0 - 1e-12);
        let (tied, _, _) = two_child_state(3, 3);
        let hot = mcmc_step_probabilities(&tied, SiteId::GENESIS, 500.0, Link::Exp).unwrap();
        assert!((hot[0].1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn step_without_children_is_an_error() {
        let state = TangleState::with_genesis(1, 2, true);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            mcmc_step(&state, SiteId::GENESIS, 1.0, Link::Exp, &mut rng),
            Err(SelectionError::NoChildren(SiteId::GENESIS))
        );
        assert_eq!(select_mcmc(&state, 1.0, &mut rng), Ok(SiteId::GENESIS));
    }

    #[test]
    fn linear_chain_walk_reaches_the_end() {
        let (state, _, _) = two_child_state(3, 0);
        // Right branch has no extension; only the left chain is long.
        let tips: Vec<_> = state.tips().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            assert!(tips.contains(&select_mcmc(&state, 0.2, &mut rng).unwrap()));
        }
        let mut chain = TangleState::with_genesis(1, 2, true);
        let a = chain.add_arrival(0).unwrap();
        chain.advance_clock();
        chain.commit_attachment(a, &[SiteId::GENESIS, SiteId::GENESIS], 1).unwrap();
        let b = chain.add_arrival(1).unwrap();
        chain.advance_clock();
        chain.commit_attachment(b, &[a, a], 2).unwrap();
        for _ in 0..20 {
            assert_eq!(select_mcmc(&chain, 5.0, &mut rng), Ok(b));
        }
    }

    #[test]
    fn age_weighted_two_tips() {
        let snapshot = TipSnapshot { time: 5, tips: vec![SiteId(1), SiteId(2)], ages: vec![1, 3] };
        let p = age_weighted_probabilities(&snapshot, &WeightFunction::exponential(1.0));
        let expected = (-1.0f64).exp() / ((-1.0f64).exp() + (-3.0f64).exp());
        assert!((p[0].1 - expected).abs() < 1e-12);
        assert!((p[0].1 - 0.8808).abs() < 1e-4);
        assert!((p[1].1 - 0.1192).abs() < 1e-4);
    }

    #[test]
    fn degenerate_age_weights_fall_back_to_uniform() {
        let snapshot = TipSnapshot { time: 9, tips: vec![SiteId(1), SiteId(2)], ages: vec![5, 7] };
        let g = WeightFunction::Window { width: 2.0 };
        let p = age_weighted_probabilities(&snapshot, &g);
        assert_eq!(p, vec![(SiteId(1), 0.5), (SiteId(2), 0.5)]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(select_age_weighted(&snapshot, &g, &mut rng).is_ok());
    }

    #[test]
    fn single_tip_selections() {
        let state = TangleState::with_genesis(1, 2, false);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let rec = select_m_tips(&state, &SelectionPolicy::Uniform, 2, &mut rng).unwrap();
        assert_eq!(rec.chosen, vec![SiteId::GENESIS, SiteId::GENESIS]);
        assert_eq!(rec.free_hits, 1);
        let snapshot = TipSnapshot::capture(&state);
        let g = WeightFunction::exponential(3.0);
        assert_eq!(select_age_weighted(&snapshot, &g, &mut rng), Ok(SiteId::GENESIS));
        assert_eq!(
            select_m_tips(&state, &SelectionPolicy::Uniform, 1, &mut rng),
            Err(SelectionError::TooFewSlots(1))
        );
        let empty = TipSnapshot { time: 0, tips: vec![], ages: vec![] };
        assert_eq!(select_uniform(&empty, &mut rng), Err(SelectionError::EmptyTipSet));
    }

    #[test]
    fn policy_grammar() {
        let cases = [
            ("uniform", SelectionPolicy::Uniform),
            ("mcmc{0.1}", SelectionPolicy::mcmc(0.1)),
            ("age{exp,2}", SelectionPolicy::AgeWeighted(WeightFunction::exponential(2.0))),
            ("age{g=exp,beta=2}", SelectionPolicy::AgeWeighted(WeightFunction::exponential(2.0))),
            (
                "hybrid{mcmc{1},uniform}",
                SelectionPolicy::hybrid(SelectionPolicy::mcmc(1.0), SelectionPolicy::Uniform),
            ),
            (
                "mcmc{0.5,depth=12}",
                SelectionPolicy::McmcWalk { alpha: 0.5, link: Link::Exp, start: WalkStart::Depth(12) },
            ),
        ];
        for (text, policy) in cases {
            let parsed: SelectionPolicy = text.parse().unwrap();
            assert_eq!(parsed, policy, "{text}");
            assert_eq!(parsed.to_string().parse::<SelectionPolicy>().unwrap(), policy);
        }
        for bad in ["mcmc{-1}", "mcmc{0}", "hybrid{uniform}", "hybrid{hybrid{uniform,uniform},uniform}", "age{exp,1", "walk"] {
            assert!(bad.parse::<SelectionPolicy>().is_err(), "{bad}");
        }
        let hybrid: SelectionPolicy = "hybrid{mcmc{1},age{exp,1}}".parse().unwrap();
        assert!(hybrid.needs_weights());
        assert!(!SelectionPolicy::Uniform.needs_weights());
        assert_eq!(hybrid.slot(0), &SelectionPolicy::mcmc(1.0));
    }

    #[test]
    fn depth_start_walk_ends_at_a_tip() {
        let (state, _, _) = two_child_state(5, 3);
        let policy: SelectionPolicy = "mcmc{0.3,depth=2}".parse().unwrap();
        let selector = StepSelector::new(&state, &policy).unwrap();
        let tips: Vec<_> = state.tips().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let rec = selector.select(2, &mut rng).unwrap();
            assert!(rec.chosen.iter().all(|b| tips.contains(b)));
        }
        assert!(selector.slot_distribution(0).is_none());
    }
}
