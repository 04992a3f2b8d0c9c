//! The growing DAG: sites, approval edges, the free/pending tip partition and
//! cumulative weights.
//!
//! Time is a discrete step counter. A transaction is created at step `T_a`,
//! spends `h` steps on proof of work and is attached at `T_a + h`, at which
//! point edges to its `m` parents are added. The genesis site is created and
//! attached at step 0 and is the only initial tip.

use std::fmt;

use thiserror::Error;

/// Discrete simulation time.
pub type Step = u64;

/// Dense site index. Ids grow with creation order, so every parent has a
/// smaller id than its child.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SiteId(pub u32);

impl SiteId {
    pub const GENESIS: SiteId = SiteId(0);

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for SiteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TangleError {
    #[error("unknown site {0}")]
    UnknownSite(SiteId),
    #[error("site {0} is not attached")]
    NotAttached(SiteId),
    #[error("site {0} is already attached")]
    AlreadyAttached(SiteId),
    #[error("site {0} is not a tip")]
    NotATip(SiteId),
    #[error("parent {parent} of {child} must precede it")]
    ParentOrder { child: SiteId, parent: SiteId },
    #[error("expected {expected} parents, got {got}")]
    ParentCount { expected: usize, got: usize },
    #[error("site {site} must attach at step {expected}, not {got}")]
    AttachTime { site: SiteId, expected: Step, got: Step },
    #[error("operation at step {got} but the clock reads {clock}")]
    ClockMismatch { clock: Step, got: Step },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Site {
    pub id: SiteId,
    pub created_at: Step,
    pub attached_at: Option<Step>,
    /// Exactly `m` entries once attached (repetitions allowed); empty for
    /// genesis and for sites still doing proof of work.
    pub parents: Vec<SiteId>,
    pub is_genesis: bool,
}

impl Site {
    pub fn is_attached(&self) -> bool {
        self.attached_at.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Detached,
    Free,
    Pending,
    Approved,
}

/// Membership of an attached site in the tip partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TipStatus {
    Free,
    Pending,
}

/// Vector-backed set with O(1) insert/remove, indexed by site.
#[derive(Debug, Clone, Default)]
struct IndexedSet {
    members: Vec<SiteId>,
}

impl IndexedSet {
    fn insert(&mut self, id: SiteId, pos: &mut [u32]) {
        pos[id.index()] = self.members.len() as u32;
        self.members.push(id);
    }

    fn remove(&mut self, id: SiteId, pos: &mut [u32]) {
        let at = pos[id.index()] as usize;
        debug_assert_eq!(self.members[at], id);
        let last = self.members.pop().expect("non-empty set");
        if last != id {
            self.members[at] = last;
            pos[last.index()] = at as u32;
        }
        pos[id.index()] = u32::MAX;
    }

    fn len(&self) -> usize {
        self.members.len()
    }
}

/// Incrementally maintained cumulative weights.
///
/// `weights[i]` counts the attached sites with a directed path (of length
/// zero or more) to `i`, so a tip weighs 1 and the genesis weighs the number
/// of attached sites.
#[derive(Debug, Clone, Default)]
pub struct CumulativeWeightCache {
    weights: Vec<u64>,
    stamp: Vec<u32>,
    generation: u32,
    stack: Vec<SiteId>,
}

impl CumulativeWeightCache {
    fn grow(&mut self, len: usize) {
        self.weights.resize(len, 0);
        self.stamp.resize(len, 0);
    }

    /// Adds one to every site reachable from `site` along parent edges,
    /// itself included.
    fn on_attach(&mut self, site: SiteId, sites: &[Site]) {
        self.generation = self.generation.wrapping_add(1);
        if self.generation == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.generation = 1;
        }
        let gen = self.generation;
        self.stack.clear();
        self.stack.push(site);
        self.stamp[site.index()] = gen;
        while let Some(cur) = self.stack.pop() {
            self.weights[cur.index()] += 1;
            for &p in &sites[cur.index()].parents {
                if self.stamp[p.index()] != gen {
                    self.stamp[p.index()] = gen;
                    self.stack.push(p);
                }
            }
        }
    }

    pub fn get(&self, site: SiteId) -> u64 {
        self.weights[site.index()]
    }
}

/// The DAG together with its tip partition.
#[derive(Debug, Clone)]
pub struct TangleState {
    h: Step,
    m: usize,
    sites: Vec<Site>,
    /// Attached direct approvers of each site, in attachment order.
    children: Vec<Vec<SiteId>>,
    status: Vec<Status>,
    pos: Vec<u32>,
    free: IndexedSet,
    pending: IndexedSet,
    clock: Step,
    weights: Option<CumulativeWeightCache>,
    attached: usize,
}

impl TangleState {
    /// Empty state. The first [`add_arrival`](Self::add_arrival) creates the
    /// genesis.
    pub fn new(h: Step, m: usize, track_weights: bool) -> Self {
        Self {
            h,
            m,
            sites: Vec::new(),
            children: Vec::new(),
            status: Vec::new(),
            pos: Vec::new(),
            free: IndexedSet::default(),
            pending: IndexedSet::default(),
            clock: 0,
            weights: track_weights.then(CumulativeWeightCache::default),
            attached: 0,
        }
    }

    /// State holding only the genesis, attached at step 0.
    pub fn with_genesis(h: Step, m: usize, track_weights: bool) -> Self {
        let mut state = Self::new(h, m, track_weights);
        state.add_arrival(0).expect("clock starts at zero");
        state
    }

    pub fn pow_delay(&self) -> Step {
        self.h
    }

    pub fn parents_per_site(&self) -> usize {
        self.m
    }

    pub fn clock(&self) -> Step {
        self.clock
    }

    pub fn advance_clock(&mut self) {
        self.clock += 1;
    }

    pub fn tracks_weights(&self) -> bool {
        self.weights.is_some()
    }

    /// `N(t)`: every created transaction, genesis included.
    pub fn arrival_count(&self) -> u64 {
        self.sites.len() as u64
    }

    /// `|G(t)|`.
    pub fn attached_count(&self) -> usize {
        self.attached
    }

    pub fn free_count(&self) -> usize {
        self.free.len()
    }

    pub fn pending_count(&self) -> usize {
        self.pending.len()
    }

    /// `L(t) = X(t) + W(t)`.
    pub fn tip_count(&self) -> usize {
        self.free.len() + self.pending.len()
    }

    pub fn free_tips(&self) -> &[SiteId] {
        &self.free.members
    }

    pub fn pending_tips(&self) -> &[SiteId] {
        &self.pending.members
    }

    /// All tips: free ones first, then pending ones.
    pub fn tips(&self) -> impl Iterator<Item = SiteId> + '_ {
        self.free.members.iter().chain(self.pending.members.iter()).copied()
    }

    pub fn tip_status(&self, site: SiteId) -> Option<TipStatus> {
        match self.status.get(site.index()) {
            Some(Status::Free) => Some(TipStatus::Free),
            Some(Status::Pending) => Some(TipStatus::Pending),
            _ => None,
        }
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn site(&self, id: SiteId) -> Result<&Site, TangleError> {
        self.sites.get(id.index()).ok_or(TangleError::UnknownSite(id))
    }

    /// Attached sites approving `id` directly.
    pub fn children(&self, id: SiteId) -> &[SiteId] {
        &self.children[id.index()]
    }

    /// Age of an attached site at the current clock.
    pub fn age(&self, id: SiteId) -> Result<Step, TangleError> {
        let site = self.site(id)?;
        let at = site.attached_at.ok_or(TangleError::NotAttached(id))?;
        Ok(self.clock.saturating_sub(at))
    }

    /// Creates a transaction at step `t`. It joins the DAG only when
    /// [`commit_attachment`](Self::commit_attachment) runs at `t + h`; the
    /// very first arrival is the genesis and is attached immediately.
    pub fn add_arrival(&mut self, t: Step) -> Result<SiteId, TangleError> {
        if t != self.clock {
            return Err(TangleError::ClockMismatch { clock: self.clock, got: t });
        }
        let id = SiteId(self.sites.len() as u32);
        let is_genesis = self.sites.is_empty();
        self.sites.push(Site {
            id,
            created_at: t,
            attached_at: is_genesis.then_some(t),
            parents: Vec::new(),
            is_genesis,
        });
        self.children.push(Vec::new());
        self.status.push(Status::Detached);
        self.pos.push(u32::MAX);
        if let Some(cache) = self.weights.as_mut() {
            cache.grow(self.sites.len());
        }
        if is_genesis {
            self.attach(id);
        }
        Ok(id)
    }

    fn attach(&mut self, id: SiteId) {
        self.status[id.index()] = Status::Free;
        self.free.insert(id, &mut self.pos);
        self.attached += 1;
        if let Some(cache) = self.weights.as_mut() {
            cache.on_attach(id, &self.sites);
        }
    }

    /// Adds the approval edges of `site` after its proof of work.
    ///
    /// The site becomes a free tip of age zero. Parents that are still tips
    /// leave the tip set; parents approved earlier by someone else are left
    /// alone.
    pub fn commit_attachment(
        &mut self,
        site: SiteId,
        parents: &[SiteId],
        t: Step,
    ) -> Result<(), TangleError> {
        let record = self.site(site)?;
        if record.is_attached() {
            return Err(TangleError::AlreadyAttached(site));
        }
        let expected = record.created_at + self.h;
        if t != expected {
            return Err(TangleError::AttachTime { site, expected, got: t });
        }
        if parents.len() != self.m {
            return Err(TangleError::ParentCount { expected: self.m, got: parents.len() });
        }
        for &p in parents {
            if p >= site {
                return Err(TangleError::ParentOrder { child: site, parent: p });
            }
            if !self.site(p)?.is_attached() {
                return Err(TangleError::NotAttached(p));
            }
        }

        let record = &mut self.sites[site.index()];
        record.parents = parents.to_vec();
        record.attached_at = Some(t);
        for (i, &p) in parents.iter().enumerate() {
            if parents[..i].contains(&p) {
                continue;
            }
            self.children[p.index()].push(site);
            match self.status[p.index()] {
                Status::Free => self.free.remove(p, &mut self.pos),
                Status::Pending => self.pending.remove(p, &mut self.pos),
                Status::Approved | Status::Detached => continue,
            }
            self.status[p.index()] = Status::Approved;
        }
        self.attach(site);
        Ok(())
    }

    /// Moves the selected free tips to the pending set and returns how many
    /// moved, i.e. `U(T_a)`. Pending tips and repeated ids count once at
    /// most.
    pub fn mark_pending(&mut self, tips: &[SiteId]) -> Result<usize, TangleError> {
        for &id in tips {
            match self.status.get(id.index()) {
                None => return Err(TangleError::UnknownSite(id)),
                Some(Status::Free | Status::Pending) => {}
                Some(_) => return Err(TangleError::NotATip(id)),
            }
        }
        let mut moved = 0;
        for &id in tips {
            if self.status[id.index()] == Status::Free {
                self.free.remove(id, &mut self.pos);
                self.pending.insert(id, &mut self.pos);
                self.status[id.index()] = Status::Pending;
                moved += 1;
            }
        }
        Ok(moved)
    }

    /// `ϑ`: number of attached sites approving `site` directly or
    /// indirectly, itself included.
    pub fn cumulative_weight(&self, site: SiteId) -> Result<u64, TangleError> {
        if !self.site(site)?.is_attached() {
            return Err(TangleError::NotAttached(site));
        }
        Ok(match &self.weights {
            Some(cache) => cache.get(site),
            None => self.count_approvers(site),
        })
    }

    /// Cumulative weight by traversal of the approver edges.
    pub fn count_approvers(&self, site: SiteId) -> u64 {
        let mut seen = vec![false; self.sites.len()];
        let mut stack = vec![site];
        seen[site.index()] = true;
        let mut count = 0;
        while let Some(cur) = stack.pop() {
            count += 1;
            for &c in &self.children[cur.index()] {
                if !seen[c.index()] {
                    seen[c.index()] = true;
                    stack.push(c);
                }
            }
        }
        count
    }

    /// Full rescan of the tip partition: free ⊎ pending must equal the set
    /// of attached sites without attached children.
    pub fn check_partition(&self) -> Result<(), String> {
        let mut free = 0;
        let mut pending = 0;
        for site in &self.sites {
            let i = site.id.index();
            let is_tip = site.is_attached() && self.children[i].is_empty();
            match self.status[i] {
                Status::Free => {
                    free += 1;
                    if self.free.members[self.pos[i] as usize] != site.id {
                        return Err(format!("{} misplaced in free set", site.id));
                    }
                }
                Status::Pending => {
                    pending += 1;
                    if self.pending.members[self.pos[i] as usize] != site.id {
                        return Err(format!("{} misplaced in pending set", site.id));
                    }
                }
                _ => {}
            }
            let in_tips = matches!(self.status[i], Status::Free | Status::Pending);
            if is_tip != in_tips {
                return Err(format!("{} tip={is_tip} but membership={in_tips}", site.id));
            }
            if site.parents.iter().any(|&p| p >= site.id) {
                return Err(format!("{} has a parent with a larger id", site.id));
            }
        }
        if free != self.free.len() || pending != self.pending.len() {
            return Err("set sizes disagree with statuses".into());
        }
        Ok(())
    }
}
