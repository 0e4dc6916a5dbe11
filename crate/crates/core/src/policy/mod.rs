//! Cache eviction policies over a bounded per-worker memory store.
//!
//! Every worker owns one [`CacheEngine`]: the resident set ([`CacheState`])
//! plus the bookkeeping each policy ranks victims by ([`PolicyState`]).
//! Reference counts (`rc`) and effective reference counts (`erc`) are kept
//! for every policy so they can be checked against the oracles; only LRC,
//! LERC and sticky eviction read them.
//!
//! Accounting is per (task, block) reference. A task's reference to a block
//! is live until the task's output is materialized; it is effective while
//! the task's peer-group is labelled complete. Labels only ever move from
//! complete to incomplete.

mod oracle;

pub use oracle::{effective_reference_count_oracle, reference_count_oracle};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dag::{BlockRef, GroupLabel, TaskId};
use crate::topology::{BlockIdx, TaskIdx, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Lru,
    Lfu,
    Lrc,
    Lerc,
    Sticky,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] =
        [PolicyKind::Lru, PolicyKind::Lfu, PolicyKind::Lrc, PolicyKind::Lerc, PolicyKind::Sticky];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Lru => "lru",
            PolicyKind::Lfu => "lfu",
            PolicyKind::Lrc => "lrc",
            PolicyKind::Lerc => "lerc",
            PolicyKind::Sticky => "sticky",
        }
    }

    /// Policies that track peer-group labels across workers.
    pub fn tracks_peers(self) -> bool {
        matches!(self, PolicyKind::Lerc | PolicyKind::Sticky)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyKind::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| PolicyError::UnknownPolicy(s.to_owned()))
    }
}

/// How blocks with equal policy keys are ordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    /// Least recently used first.
    #[default]
    LruFallback,
    /// Uniformly random among tied blocks, from the engine's seeded RNG.
    Random,
}

impl TieBreak {
    pub fn name(self) -> &'static str {
        match self {
            TieBreak::LruFallback => "lru-fallback",
            TieBreak::Random => "random",
        }
    }
}

impl fmt::Display for TieBreak {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TieBreak {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lru-fallback" => Ok(TieBreak::LruFallback),
            "random" => Ok(TieBreak::Random),
            other => Err(PolicyError::UnknownTieBreak(other.to_owned())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("unknown policy {0:?} (expected lru, lfu, lrc, lerc or sticky)")]
    UnknownPolicy(String),
    #[error("unknown tie-break mode {0:?} (expected lru-fallback or random)")]
    UnknownTieBreak(String),
    #[error("unknown block {0}")]
    UnknownBlock(String),
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("task {0} completed twice")]
    DoubleComplete(String),
    #[error("block {0} is already resident")]
    AlreadyResident(String),
    #[error("cannot free {needed} units: capacity {capacity}, evictable {evictable}")]
    InsufficientCapacity { needed: u64, capacity: u64, evictable: u64 },
}

/// The resident set of one worker's memory store.
#[derive(Debug, Clone, Default)]
pub struct CacheState {
    capacity: u64,
    used: u64,
    resident: BTreeMap<BlockIdx, u64>,
    pins: BTreeMap<BlockIdx, u32>,
}

impl CacheState {
    pub fn new(capacity: u64) -> Self {
        Self { capacity, ..Default::default() }
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn used(&self) -> u64 {
        self.used
    }

    pub fn free(&self) -> u64 {
        self.capacity.saturating_sub(self.used)
    }

    pub fn contains(&self, b: BlockIdx) -> bool {
        self.resident.contains_key(&b)
    }

    pub fn is_pinned(&self, b: BlockIdx) -> bool {
        self.pins.contains_key(&b)
    }

    pub fn len(&self) -> usize {
        self.resident.len()
    }

    pub fn is_empty(&self) -> bool {
        self.resident.is_empty()
    }

    pub fn resident(&self) -> impl Iterator<Item = (BlockIdx, u64)> + '_ {
        self.resident.iter().map(|(b, s)| (*b, *s))
    }
}

/// A group turned incomplete by an eviction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupInvalidation {
    pub group: TaskIdx,
    pub block: BlockIdx,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EvictionDecision {
    pub victims: Vec<BlockIdx>,
    pub freed: u64,
}

/// Per-worker policy bookkeeping.
#[derive(Debug, Clone)]
pub struct PolicyState {
    topo: Arc<Topology>,
    kind: PolicyKind,
    tie_break: TieBreak,
    rng: ChaCha8Rng,
    clock: u64,
    last_access: Vec<u64>,
    frequency: Vec<u32>,
    rc: Vec<u32>,
    erc: Vec<u32>,
    labels: Vec<GroupLabel>,
    retired: Vec<bool>,
}

impl PolicyState {
    /// Fresh state with every task pending and every group complete.
    pub fn new(topo: Arc<Topology>, kind: PolicyKind, tie_break: TieBreak, seed: u64) -> Self {
        let nb = topo.num_blocks();
        let nt = topo.num_tasks();
        let mut rc = vec![0u32; nb];
        for (_, t) in topo.tasks() {
            for b in &t.inputs {
                rc[b.index()] += 1;
            }
        }
        Self {
            kind,
            tie_break,
            rng: ChaCha8Rng::seed_from_u64(seed),
            clock: 0,
            last_access: vec![0; nb],
            frequency: vec![0; nb],
            erc: rc.clone(),
            rc,
            labels: vec![GroupLabel::Complete; nt],
            retired: vec![false; nt],
            topo,
        }
    }

    /// Labels every group whose materialized members are not all in memory
    /// as incomplete, without emitting notices. Used once, for the state a
    /// workload starts in.
    pub fn init_labels(&mut self, materialized: &[bool], in_memory: &[bool]) {
        let topo = Arc::clone(&self.topo);
        for (t, info) in topo.tasks() {
            if self.retired[t.index()] || self.labels[t.index()] == GroupLabel::Incomplete {
                continue;
            }
            let broken = info.inputs.iter().any(|b| materialized[b.index()] && !in_memory[b.index()]);
            if broken {
                self.invalidate(t);
            }
        }
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn tie_break(&self) -> TieBreak {
        self.tie_break
    }

    pub fn topology(&self) -> &Arc<Topology> {
        &self.topo
    }

    pub fn rc(&self, b: BlockIdx) -> u32 {
        self.rc[b.index()]
    }

    pub fn erc(&self, b: BlockIdx) -> u32 {
        self.erc[b.index()]
    }

    pub fn rc_all(&self) -> &[u32] {
        &self.rc
    }

    pub fn erc_all(&self) -> &[u32] {
        &self.erc
    }

    pub fn frequency(&self, b: BlockIdx) -> u32 {
        self.frequency[b.index()]
    }

    pub fn last_access(&self, b: BlockIdx) -> u64 {
        self.last_access[b.index()]
    }

    pub fn label(&self, t: TaskIdx) -> GroupLabel {
        self.labels[t.index()]
    }

    pub fn is_retired(&self, t: TaskIdx) -> bool {
        self.retired[t.index()]
    }

    fn touch(&mut self, b: BlockIdx) {
        self.clock += 1;
        self.last_access[b.index()] = self.clock;
    }

    /// Records a read of `b`: recency and frequency only.
    pub fn on_access(&mut self, b: BlockIdx) {
        self.touch(b);
        self.frequency[b.index()] += 1;
    }

    pub fn on_task_complete(&mut self, t: TaskIdx) -> Result<(), PolicyError> {
        if t.index() >= self.retired.len() {
            return Err(PolicyError::UnknownTask(format!("#{}", t.0)));
        }
        if self.retired[t.index()] {
            return Err(PolicyError::DoubleComplete(self.topo.task_name(t).to_owned()));
        }
        self.retired[t.index()] = true;
        let effective = self.labels[t.index()] == GroupLabel::Complete;
        for b in &self.topo.task(t).inputs {
            self.rc[b.index()] -= 1;
            if effective {
                self.erc[b.index()] -= 1;
            }
        }
        Ok(())
    }

    fn invalidate(&mut self, t: TaskIdx) {
        self.labels[t.index()] = GroupLabel::Incomplete;
        for b in &self.topo.task(t).inputs {
            self.erc[b.index()] -= 1;
        }
    }

    /// Marks every pending complete group containing `b` incomplete and
    /// returns one notice per group that changed.
    pub fn on_block_evicted(&mut self, b: BlockIdx) -> Vec<GroupInvalidation> {
        let topo = Arc::clone(&self.topo);
        let mut notices = Vec::new();
        for &t in &topo.block(b).consumers {
            if !self.retired[t.index()] && self.labels[t.index()] == GroupLabel::Complete {
                self.invalidate(t);
                notices.push(GroupInvalidation { group: t, block: b });
            }
        }
        notices
    }

    /// True when `b` sits in a pending group that is already incomplete.
    fn in_broken_group(&self, b: BlockIdx) -> bool {
        self.topo
            .block(b)
            .consumers
            .iter()
            .any(|t| !self.retired[t.index()] && self.labels[t.index()] == GroupLabel::Incomplete)
    }

    fn primary_key(&self, b: BlockIdx) -> Key {
        let i = b.index();
        let live = u64::from(self.rc[i] > 0);
        match self.kind {
            PolicyKind::Lru => (0, 0, self.last_access[i]),
            PolicyKind::Lfu => (0, u64::from(self.frequency[i]), 0),
            PolicyKind::Lrc => (0, u64::from(self.rc[i]), 0),
            PolicyKind::Lerc => (live, u64::from(self.erc[i]), 0),
            PolicyKind::Sticky => (u64::from(!self.in_broken_group(b)), u64::from(self.rc[i]), 0),
        }
    }
}

/// One worker's store plus its policy.
/// Primary eviction key; smallest goes first.
type Key = (u64, u64, u64);

#[derive(Debug, Clone)]
pub struct CacheEngine {
    cache: CacheState,
    policy: PolicyState,
}

impl CacheEngine {
    pub fn new(topo: Arc<Topology>, kind: PolicyKind, tie_break: TieBreak, seed: u64, capacity: u64) -> Self {
        Self { cache: CacheState::new(capacity), policy: PolicyState::new(topo, kind, tie_break, seed) }
    }

    pub fn cache(&self) -> &CacheState {
        &self.cache
    }

    pub fn policy(&self) -> &PolicyState {
        &self.policy
    }

    pub fn policy_mut(&mut self) -> &mut PolicyState {
        &mut self.policy
    }

    fn resolve(&self, b: &BlockRef) -> Result<BlockIdx, PolicyError> {
        self.policy.topo.block_idx(b).ok_or_else(|| PolicyError::UnknownBlock(b.to_string()))
    }

    fn resolve_task(&self, t: &TaskId) -> Result<TaskIdx, PolicyError> {
        self.policy.topo.task_idx(t).ok_or_else(|| PolicyError::UnknownTask(t.to_string()))
    }

    /// Places `b` in memory. The caller must have made room.
    pub fn insert(&mut self, b: BlockIdx) -> Result<(), PolicyError> {
        let size = self.policy.topo.block(b).size;
        if self.cache.contains(b) {
            return Err(PolicyError::AlreadyResident(self.policy.topo.label(b)));
        }
        if size > self.cache.free() {
            return Err(PolicyError::InsufficientCapacity {
                needed: size - self.cache.free(),
                capacity: self.cache.capacity,
                evictable: 0,
            });
        }
        self.cache.resident.insert(b, size);
        self.cache.used += size;
        self.policy.touch(b);
        Ok(())
    }

    pub fn insert_ref(&mut self, b: &BlockRef) -> Result<(), PolicyError> {
        let idx = self.resolve(b)?;
        self.insert(idx)
    }

    pub fn on_access(&mut self, b: BlockIdx) {
        self.policy.on_access(b);
    }

    pub fn on_access_ref(&mut self, b: &BlockRef) -> Result<(), PolicyError> {
        let idx = self.resolve(b)?;
        self.policy.on_access(idx);
        Ok(())
    }

    pub fn on_task_complete(&mut self, t: TaskIdx) -> Result<(), PolicyError> {
        self.policy.on_task_complete(t)
    }

    pub fn on_task_complete_id(&mut self, t: &TaskId) -> Result<(), PolicyError> {
        let idx = self.resolve_task(t)?;
        self.policy.on_task_complete(idx)
    }

    pub fn pin(&mut self, b: BlockIdx) {
        *self.cache.pins.entry(b).or_insert(0) += 1;
    }

    pub fn unpin(&mut self, b: BlockIdx) {
        if let Some(n) = self.cache.pins.get_mut(&b) {
            *n -= 1;
            if *n == 0 {
                self.cache.pins.remove(&b);
            }
        }
    }

    /// Removes a resident block and updates group labels.
    pub fn evict(&mut self, b: BlockIdx) -> Result<Vec<GroupInvalidation>, PolicyError> {
        let size =
            self.cache.resident.remove(&b).ok_or_else(|| PolicyError::UnknownBlock(self.policy.topo.label(b)))?;
        self.cache.used -= size;
        Ok(self.policy.on_block_evicted(b))
    }

    pub fn evict_ref(&mut self, b: &BlockRef) -> Result<Vec<GroupInvalidation>, PolicyError> {
        let idx = self.resolve(b)?;
        self.evict(idx)
    }

    /// Picks victims freeing at least `needed` units, in the policy's order.
    /// `exclude` is never chosen (the block being inserted). Pinned blocks are
    /// never chosen either.
    pub fn choose_victims(&mut self, needed: u64, exclude: Option<BlockIdx>) -> Result<EvictionDecision, PolicyError> {
        if needed == 0 {
            return Ok(EvictionDecision::default());
        }
        let candidates: Vec<(BlockIdx, u64)> =
            self.cache.resident().filter(|(b, _)| Some(*b) != exclude && !self.cache.is_pinned(*b)).collect();
        let evictable: u64 = candidates.iter().map(|(_, s)| s).sum();
        if needed > self.cache.capacity || evictable < needed {
            return Err(PolicyError::InsufficientCapacity { needed, capacity: self.cache.capacity, evictable });
        }

        let mut keyed: Vec<(Key, u64, BlockIdx, u64)> = candidates
            .into_iter()
            .map(|(b, size)| {
                let tie = match self.policy.tie_break {
                    TieBreak::LruFallback => self.policy.last_access[b.index()],
                    TieBreak::Random => self.policy.rng.random::<u64>(),
                };
                (self.policy.primary_key(b), tie, b, size)
            })
            .collect();
        keyed.sort_unstable_by_key(|k| (k.0, k.1, k.2));

        let mut decision = EvictionDecision::default();
        let mut chosen = std::collections::BTreeSet::new();
        for &(_, _, b, size) in &keyed {
            if decision.freed >= needed {
                break;
            }
            if !chosen.insert(b) {
                continue;
            }
            decision.victims.push(b);
            decision.freed += size;
            if self.policy.kind == PolicyKind::Sticky {
                // Whole-group eviction: resident peers of the victim go too.
                for peer in self.sticky_peers(b, exclude) {
                    if chosen.insert(peer) {
                        decision.victims.push(peer);
                        decision.freed += self.cache.resident[&peer];
                    }
                }
            }
        }
        Ok(decision)
    }

    fn sticky_peers(&self, b: BlockIdx, exclude: Option<BlockIdx>) -> Vec<BlockIdx> {
        let topo = &self.policy.topo;
        let mut peers = Vec::new();
        for t in &topo.block(b).consumers {
            if self.policy.retired[t.index()] {
                continue;
            }
            for &p in &topo.task(*t).inputs {
                if p != b && Some(p) != exclude && self.cache.contains(p) && !self.cache.is_pinned(p) {
                    peers.push(p);
                }
            }
        }
        peers
    }

    /// `choose_victims` in `BlockRef` terms.
    pub fn choose_victims_ref(
        &mut self,
        needed: u64,
        exclude: Option<&BlockRef>,
    ) -> Result<Vec<BlockRef>, PolicyError> {
        let exclude = exclude.map(|b| self.resolve(b)).transpose()?;
        let d = self.choose_victims(needed, exclude)?;
        Ok(d.victims.iter().map(|b| self.policy.topo.block(*b).block).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::{JobDag, Tier};
    use crate::workload::{gen_fig1, gen_random_dag, Fig1Reading};

    fn fig1_engine(kind: PolicyKind, tie: TieBreak, seed: u64, reading: Fig1Reading) -> (CacheEngine, JobDag) {
        let (dag, setup) = gen_fig1(reading);
        let topo = Arc::new(crate::topology::Topology::new(std::slice::from_ref(&dag)));
        let mut engine = CacheEngine::new(Arc::clone(&topo), kind, tie, seed, setup.capacity);
        let mut materialized = vec![false; topo.num_blocks()];
        let mut in_memory = vec![false; topo.num_blocks()];
        for s in &dag.sources {
            let b = topo.block_idx(&s.block).unwrap();
            materialized[b.index()] = s.tier.is_materialized();
            if s.tier == Tier::Memory {
                in_memory[b.index()] = true;
                engine.insert(b).unwrap();
            }
        }
        engine.policy_mut().init_labels(&materialized, &in_memory);
        (engine, dag)
    }

    fn idx(engine: &CacheEngine, dag: &JobDag, name: &str) -> BlockIdx {
        engine.policy().topology().block_idx(&dag.find_block(name, 0).unwrap()).unwrap()
    }

    #[test]
    fn names_round_trip() {
        for p in PolicyKind::ALL {
            assert_eq!(p.name().parse::<PolicyKind>(), Ok(p));
        }
        assert!("arc".parse::<PolicyKind>().is_err());
        assert_eq!("random".parse::<TieBreak>(), Ok(TieBreak::Random));
        assert_eq!("lru-fallback".parse::<TieBreak>(), Ok(TieBreak::LruFallback));
    }

    #[test]
    fn lru_recency_order() {
        let (mut e, dag) = fig1_engine(PolicyKind::Lru, TieBreak::LruFallback, 0, Fig1Reading::MaterializedOnDisk);
        let (a, b) = (idx(&e, &dag, "a"), idx(&e, &dag, "b"));
        e.on_access(a);
        e.on_access(b);
        e.on_access(a);
        assert!(e.policy().last_access(b) < e.policy().last_access(a));
        // c was inserted before any access, so it is the LRU victim.
        let d = e.choose_victims(1, None).unwrap();
        assert_eq!(d.victims, vec![idx(&e, &dag, "c")]);
    }

    #[test]
    fn lfu_counts_accesses() {
        let (mut e, dag) = fig1_engine(PolicyKind::Lfu, TieBreak::LruFallback, 0, Fig1Reading::MaterializedOnDisk);
        let a = idx(&e, &dag, "a");
        for _ in 0..3 {
            e.on_access(a);
        }
        assert_eq!(e.policy().frequency(a), 3);
        e.on_access(idx(&e, &dag, "b"));
        assert_eq!(e.choose_victims(1, None).unwrap().victims, vec![idx(&e, &dag, "c")]);
    }

    #[test]
    fn access_leaves_erc_untouched() {
        let (mut e, dag) = fig1_engine(PolicyKind::Lerc, TieBreak::LruFallback, 0, Fig1Reading::MaterializedOnDisk);
        let before = e.policy().erc_all().to_vec();
        for name in ["a", "b", "c", "d"] {
            e.on_access(idx(&e, &dag, name));
        }
        assert_eq!(e.policy().erc_all(), &before[..]);
    }

    #[test]
    fn fig1_lerc_evicts_c() {
        let (mut e, dag) = fig1_engine(PolicyKind::Lerc, TieBreak::LruFallback, 0, Fig1Reading::MaterializedOnDisk);
        let ee = idx(&e, &dag, "e");
        assert_eq!(e.policy().erc(idx(&e, &dag, "a")), 1);
        assert_eq!(e.policy().erc(idx(&e, &dag, "b")), 1);
        assert_eq!(e.policy().erc(idx(&e, &dag, "c")), 0);
        let d = e.choose_victims(1, Some(ee)).unwrap();
        assert_eq!(d.victims, vec![idx(&e, &dag, "c")]);
        assert_eq!(d.freed, 1);
    }

    #[test]
    fn fig1_lrc_random_tie_is_uniform() {
        let mut counts = BTreeMap::new();
        for seed in 0..3000 {
            let (mut e, dag) = fig1_engine(PolicyKind::Lrc, TieBreak::Random, seed, Fig1Reading::MaterializedOnDisk);
            let v = e.choose_victims(1, Some(idx(&e, &dag, "e"))).unwrap().victims[0];
            *counts.entry(v).or_insert(0u32) += 1;
        }
        assert_eq!(counts.len(), 3);
        for &c in counts.values() {
            assert!((900..=1100).contains(&c), "{counts:?}");
        }
    }

    #[test]
    fn empty_request_evicts_nothing() {
        let topo = Arc::new(crate::topology::Topology::new(&[]));
        let mut e = CacheEngine::new(topo, PolicyKind::Lerc, TieBreak::LruFallback, 0, 4);
        assert_eq!(e.choose_victims(0, None).unwrap(), EvictionDecision::default());
    }

    #[test]
    fn over_capacity_request_fails() {
        let (mut e, _) = fig1_engine(PolicyKind::Lru, TieBreak::LruFallback, 0, Fig1Reading::MaterializedOnDisk);
        assert!(matches!(e.choose_victims(4, None), Err(PolicyError::InsufficientCapacity { .. })));
    }

    #[test]
    fn pinned_blocks_are_never_victims() {
        let (mut e, dag) = fig1_engine(PolicyKind::Lru, TieBreak::LruFallback, 0, Fig1Reading::MaterializedOnDisk);
        let c = idx(&e, &dag, "c");
        e.pin(c);
        let d = e.choose_victims(1, None).unwrap();
        assert_ne!(d.victims, vec![c]);
        e.pin(idx(&e, &dag, "a"));
        e.pin(idx(&e, &dag, "b"));
        assert!(matches!(e.choose_victims(1, None), Err(PolicyError::InsufficientCapacity { .. })));
        e.unpin(c);
        assert_eq!(e.choose_victims(1, None).unwrap().victims, vec![c]);
    }

    #[test]
    fn completing_a_zip_task_releases_its_inputs() {
        let dag = crate::workload::gen_zip(0, 10, 4);
        let topo = Arc::new(crate::topology::Topology::new(std::slice::from_ref(&dag)));
        let mut p = PolicyState::new(Arc::clone(&topo), PolicyKind::Lrc, TieBreak::LruFallback, 0);
        let a1 = topo.block_idx(&dag.find_block("A", 1).unwrap()).unwrap();
        let b1 = topo.block_idx(&dag.find_block("B", 1).unwrap()).unwrap();
        assert_eq!((p.rc(a1), p.rc(b1)), (1, 1));
        p.on_task_complete(TaskIdx(0)).unwrap();
        assert_eq!((p.rc(a1), p.rc(b1)), (0, 0));
        assert_eq!(p.on_task_complete(TaskIdx(0)), Err(PolicyError::DoubleComplete("zip_1".into())));
        assert!(matches!(p.on_task_complete(TaskIdx(99)), Err(PolicyError::UnknownTask(_))));
    }

    #[test]
    fn completing_an_incomplete_group_keeps_erc() {
        let (mut e, dag) = fig1_engine(PolicyKind::Lerc, TieBreak::LruFallback, 0, Fig1Reading::MaterializedOnDisk);
        let c = idx(&e, &dag, "c");
        assert_eq!(e.policy().erc(c), 0);
        e.on_task_complete(TaskIdx(1)).unwrap();
        assert_eq!(e.policy().erc(c), 0);
        assert_eq!(e.policy().rc(c), 0);
    }

    #[test]
    fn evicting_c_when_d_is_uncomputed_emits_one_notice() {
        let (mut e, dag) = fig1_engine(PolicyKind::Lerc, TieBreak::LruFallback, 0, Fig1Reading::Uncomputed);
        let c = idx(&e, &dag, "c");
        assert_eq!(e.policy().erc(c), 1);
        let notices = e.evict(c).unwrap();
        assert_eq!(notices.len(), 1);
        assert_eq!(e.policy().label(TaskIdx(1)), GroupLabel::Incomplete);
        assert_eq!(e.policy().erc(c), 0);
        assert_eq!(e.policy().erc(idx(&e, &dag, "d")), 0);
    }

    #[test]
    fn evicting_a_block_outside_complete_groups_is_silent() {
        let (mut e, dag) = fig1_engine(PolicyKind::Lerc, TieBreak::LruFallback, 0, Fig1Reading::MaterializedOnDisk);
        // Under the on-disk reading {c, d} starts incomplete.
        assert!(e.evict(idx(&e, &dag, "c")).unwrap().is_empty());
        assert!(matches!(e.evict(idx(&e, &dag, "c")), Err(PolicyError::UnknownBlock(_))));
        assert!(matches!(e.evict_ref(&BlockRef::new(7, 7, 7)), Err(PolicyError::UnknownBlock(_))));
    }

    #[test]
    fn lerc_prefers_dead_blocks() {
        let (mut e, dag) = fig1_engine(PolicyKind::Lerc, TieBreak::LruFallback, 0, Fig1Reading::MaterializedOnDisk);
        // c has erc 0 but a live reference; once task 1 finishes, a and b are dead.
        e.on_task_complete(TaskIdx(0)).unwrap();
        let d = e.choose_victims(2, None).unwrap();
        let mut v = d.victims.clone();
        v.sort();
        assert_eq!(v, vec![idx(&e, &dag, "a"), idx(&e, &dag, "b")]);
    }

    #[test]
    fn sticky_evicts_whole_groups() {
        let (mut e, dag) = fig1_engine(PolicyKind::Sticky, TieBreak::LruFallback, 0, Fig1Reading::Uncomputed);
        // Nothing is broken yet, so sticky falls back to LRC order (a first),
        // and a's peer b leaves with it.
        let d = e.choose_victims(1, None).unwrap();
        assert_eq!(d.victims, vec![idx(&e, &dag, "a"), idx(&e, &dag, "b")]);
        assert_eq!(d.freed, 2);

        let (mut e, dag) = fig1_engine(PolicyKind::Sticky, TieBreak::LruFallback, 0, Fig1Reading::MaterializedOnDisk);
        // {c, d} is broken from the start: c goes first.
        let d = e.choose_victims(1, None).unwrap();
        assert_eq!(d.victims, vec![idx(&e, &dag, "c")]);
    }

    #[test]
    fn random_dags_keep_erc_below_rc() {
        for seed in 0..50 {
            let dag = gen_random_dag(seed, 12, 3);
            let topo = Arc::new(crate::topology::Topology::new(std::slice::from_ref(&dag)));
            let mut p = PolicyState::new(Arc::clone(&topo), PolicyKind::Lerc, TieBreak::LruFallback, seed);
            for (b, _) in topo.blocks().step_by(2) {
                p.on_block_evicted(b);
                for (bb, _) in topo.blocks() {
                    assert!(p.erc(bb) <= p.rc(bb));
                }
            }
        }
    }
}
