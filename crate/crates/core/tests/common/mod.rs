#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tipflow::tangle::{SiteId, TangleState};

/// Builds a tangle with `h = 1` and one arrival per step. `parents[i]` are
/// the parents of site `i + 1`; every parent id must be smaller.
pub fn chain_built(parents: &[[u32; 2]]) -> TangleState {
    let mut state = TangleState::with_genesis(1, 2, true);
    state.advance_clock();
    let mut waiting: Option<(SiteId, [u32; 2])> = None;
    for p in parents {
        let t = state.clock();
        if let Some((site, ps)) = waiting.take() {
            state.commit_attachment(site, &[SiteId(ps[0]), SiteId(ps[1])], t).unwrap();
        }
        let id = state.add_arrival(t).unwrap();
        waiting = Some((id, *p));
        state.advance_clock();
    }
    if let Some((site, ps)) = waiting {
        let t = state.clock();
        state.commit_attachment(site, &[SiteId(ps[0]), SiteId(ps[1])], t).unwrap();
    }
    state
}

/// The 10-site DAG used by the walk tests. Tips are 7, 8 and 9.
pub const FIXED_DAG: [[u32; 2]; 9] =
    [[0, 0], [0, 0], [1, 2], [1, 1], [2, 3], [4, 3], [4, 1], [5, 5], [6, 6]];

/// Random DAG of up to `max_sites` sites, built through the public
/// commit path with a random number of arrivals per step and parents drawn
/// from every attached site.
pub fn random_dag(seed: u64, max_sites: usize, track_weights: bool) -> TangleState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = rng.random_range(1..=3u64);
    let mut state = TangleState::with_genesis(h, 2, track_weights);
    state.advance_clock();
    let mut queue: Vec<(u64, SiteId, Vec<SiteId>)> = Vec::new();
    let mut created = 1usize;
    while created < max_sites || !queue.is_empty() {
        let t = state.clock();
        let (due, later): (Vec<_>, Vec<_>) = queue.into_iter().partition(|c| c.0 == t);
        queue = later;
        for (_, site, parents) in due {
            state.commit_attachment(site, &parents, t).unwrap();
        }
        let k = if created < max_sites { rng.random_range(0..=3usize).min(max_sites - created) } else { 0 };
        let attached: Vec<SiteId> =
            state.sites().iter().filter(|s| s.is_attached()).map(|s| s.id).collect();
        for _ in 0..k {
            let site = state.add_arrival(t).unwrap();
            let parents =
                (0..2).map(|_| attached[rng.random_range(0..attached.len())]).collect::<Vec<_>>();
            queue.push((t + h, site, parents));
            created += 1;
        }
        state.advance_clock();
    }
    state
}

/// Self-inclusive reverse reachability from the parent lists alone, via a
/// full transitive closure.
pub fn closure_weights(state: &TangleState) -> Vec<u64> {
    let n = state.sites().len();
    // reach[u][v]: v is reachable from u along parent edges.
    let mut reach = vec![vec![false; n]; n];
    for site in state.sites() {
        if !site.is_attached() {
            continue;
        }
        let u = site.id.index();
        reach[u][u] = true;
        for p in &site.parents {
            let row = reach[p.index()].clone();
            for (v, r) in row.into_iter().enumerate() {
                reach[u][v] |= r;
            }
        }
    }
    (0..n).map(|v| (0..n).filter(|&u| reach[u][v]).count() as u64).collect()
}

/// Exit probabilities of the walk by enumerating every genesis-to-tip path.
pub fn enumerate_paths(state: &TangleState, alpha: f64) -> Vec<f64> {
    let n = state.sites().len();
    let weights = closure_weights(state);
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for site in state.sites() {
        let mut seen = Vec::new();
        for p in &site.parents {
            if !seen.contains(p) {
                seen.push(*p);
                children[p.index()].push(site.id.index());
            }
        }
    }
    let mut exits = vec![0.0; n];
    fn go(v: usize, p: f64, alpha: f64, ch: &[Vec<usize>], w: &[u64], exits: &mut [f64]) {
        if ch[v].is_empty() {
            exits[v] += p;
            return;
        }
        let raw: Vec<f64> =
            ch[v].iter().map(|&k| (-alpha * (w[v] as f64 - w[k] as f64)).exp()).collect();
        let z: f64 = raw.iter().sum();
        for (&k, r) in ch[v].iter().zip(raw) {
            go(k, p * r / z, alpha, ch, w, exits);
        }
    }
    go(0, 1.0, alpha, &children, &weights, &mut exits);
    exits
}

/// Pearson statistic of observed counts against expected probabilities.
pub fn chi_square(counts: &[u64], probs: &[f64]) -> f64 {
    let n: u64 = counts.iter().sum();
    counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| {
            let e = p * n as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum()
}

/// Upper 0.1% critical values of the chi-square law, by degrees of freedom.
pub fn chi_square_critical_001(df: usize) -> f64 {
    const TABLE: [f64; 12] =
        [10.828, 13.816, 16.266, 18.467, 20.515, 22.458, 24.322, 26.124, 27.877, 29.588, 31.264, 32.909];
    TABLE[df - 1]
}

/// `|freq - p| <= 3σ` for a binomial proportion.
pub fn within_three_sigma(hits: u64, n: u64, p: f64) -> bool {
    let freq = hits as f64 / n as f64;
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    (freq - p).abs() <= 3.0 * sigma + 1e-12
}

/// `l = h + q/(1-q)` with `q = exp(-m/l)`: the large-λ level of `L/λ` for
/// uniform selection in discrete time, where a tip can be selected in the
/// step it attaches.
pub fn discrete_uniform_level(h: f64, m: f64) -> f64 {
    let mut l = 2.0 * h;
    for _ in 0..500 {
        let q = (-m / l).exp();
        l = h + q / (1.0 - q);
    }
    l
}
