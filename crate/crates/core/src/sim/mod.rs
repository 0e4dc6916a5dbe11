//! Discrete-event cluster simulator.
//!
//! Workers run tasks in slots and cache blocks in a bounded memory store
//! managed by a [`CacheEngine`]. A task becomes ready once all its inputs are
//! materialized; it reads every input from memory only if all of them are
//! resident when it starts, and from disk otherwise. Its output is cached on
//! the worker that ran it.
//!
//! Events at one instant are drained in (kind, sequence) order before any
//! task is dispatched: message deliveries first, then source insertions, then
//! task completions.

mod config;
mod staircase;

pub use config::{ClusterConfig, ConfigError, Placement};
pub use staircase::{staircase_experiment, StaircasePoint};

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dag::{validate_workload, BlockRef, DagError, JobDag, TaskId, Tier};
use crate::policy::{CacheEngine, PolicyError, PolicyKind};
use crate::protocol::{MessageCounts, MessageKind, Payload, PeerTrackerMaster, ProtocolMessage};
use crate::topology::{BlockIdx, TaskIdx, Topology};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dag(#[from] DagError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("source {block} is pinned to worker {worker}, but there are only {workers}")]
    Placement { block: String, worker: usize, workers: usize },
    #[error("deadlock: {pending} tasks can never run")]
    Deadlock { pending: usize },
}

/// Derives a stream seed from a base seed and a path of indices.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    parts.iter().fold(splitmix(base), |acc, p| splitmix(acc ^ splitmix(*p)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessRecord {
    pub task: TaskId,
    pub block: BlockRef,
    pub hit: bool,
    pub effective: bool,
}

/// Classifies one read against a residency snapshot taken at task start.
/// A hit is effective when every materialized input of the task is in memory.
pub fn classify_access(
    topo: &Topology,
    task: TaskIdx,
    block: BlockIdx,
    materialized: &[bool],
    in_memory: &[bool],
) -> AccessRecord {
    let info = topo.task(task);
    let hit = in_memory[block.index()];
    let peers_in = info.inputs.iter().all(|b| !materialized[b.index()] || in_memory[b.index()]);
    AccessRecord { task: info.id, block: topo.block(block).block, hit, effective: hit && peers_in }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvictionRecord {
    pub time: f64,
    pub worker: usize,
    pub block: BlockRef,
    pub label: String,
    /// The block never entered memory: it was written straight to disk
    /// because pinned blocks left no room.
    pub spilled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub policy: PolicyKind,
    pub makespan: f64,
    pub accesses: u64,
    pub hits: u64,
    pub effective_hits: u64,
    pub hit_ratio: f64,
    pub effective_hit_ratio: f64,
    pub evictions: u64,
    pub spills: u64,
    pub messages: MessageCounts,
    pub peer_groups: usize,
    /// Sum of all task durations.
    pub total_task_time: f64,
    pub first_victim: Option<String>,
    pub eviction_log: Vec<EvictionRecord>,
    pub access_log: Vec<AccessRecord>,
    pub message_log: Vec<ProtocolMessage>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    Deliver(usize),
    SourceInsert(BlockIdx),
    TaskFinish(TaskIdx),
}

impl EventKind {
    fn priority(&self) -> u8 {
        match self {
            EventKind::Deliver(_) => 0,
            EventKind::SourceInsert(_) => 1,
            EventKind::TaskFinish(_) => 2,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl Event {
    fn key(&self) -> (u8, u64) {
        (self.kind.priority(), self.seq)
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Reversed so that BinaryHeap pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then_with(|| other.key().cmp(&self.key()))
    }
}

#[derive(Debug, Clone)]
struct Running {
    worker: usize,
    pinned: Vec<(usize, BlockIdx)>,
}

/// A message in flight.
#[derive(Debug, Clone)]
struct Delivery {
    to: Option<usize>,
    from: usize,
    block: BlockIdx,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    topo: Arc<Topology>,
    config: ClusterConfig,
    policy: PolicyKind,
    engines: Vec<CacheEngine>,
    master: PeerTrackerMaster,
    tracks_peers: bool,
    home: Vec<Option<usize>>,
    materialized: Vec<bool>,
    in_memory: Vec<bool>,
    waiting_on: Vec<u32>,
    ready: VecDeque<TaskIdx>,
    running: Vec<Option<Running>>,
    free_slots: Vec<usize>,
    queue: BinaryHeap<Event>,
    deliveries: Vec<Delivery>,
    in_flight: usize,
    seq: u64,
    now: f64,
    finished: usize,
    makespan: f64,
    total_task_time: f64,
    accesses: u64,
    hits: u64,
    effective_hits: u64,
    access_log: Vec<AccessRecord>,
    eviction_log: Vec<EvictionRecord>,
    message_log: Vec<ProtocolMessage>,
}

impl Simulation {
    pub fn new(workloads: &[JobDag], config: &ClusterConfig, policy: PolicyKind) -> Result<Self, SimError> {
        config.validate()?;
        validate_workload(workloads)?;
        let topo = Arc::new(Topology::new(workloads));
        let w = config.workers;
        let engines = (0..w)
            .map(|i| {
                let seed = derive_seed(config.seed, &[i as u64]);
                CacheEngine::new(Arc::clone(&topo), policy, config.tie_break, seed, config.cache_capacity_per_worker)
            })
            .collect();
        let nb = topo.num_blocks();
        let nt = topo.num_tasks();
        let mut sim = Self {
            master: PeerTrackerMaster::new(Arc::clone(&topo), w),
            tracks_peers: policy.tracks_peers(),
            engines,
            home: vec![None; nb],
            materialized: vec![false; nb],
            in_memory: vec![false; nb],
            waiting_on: topo.tasks().map(|(_, t)| t.inputs.len() as u32).collect(),
            ready: VecDeque::new(),
            running: vec![None; nt],
            free_slots: vec![config.slots_per_worker; w],
            queue: BinaryHeap::new(),
            deliveries: Vec::new(),
            in_flight: 0,
            seq: 0,
            now: 0.0,
            finished: 0,
            makespan: 0.0,
            total_task_time: 0.0,
            accesses: 0,
            hits: 0,
            effective_hits: 0,
            access_log: Vec::new(),
            eviction_log: Vec::new(),
            message_log: Vec::new(),
            config: config.clone(),
            policy,
            topo,
        };
        sim.place_sources()?;
        sim.load_initial_state()?;
        if sim.queue.peek().is_none_or(|e| e.time > 0.0) {
            sim.dispatch();
        }
        Ok(sim)
    }

    fn place_sources(&mut self) -> Result<(), SimError> {
        let w = self.config.workers;
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.placement_seed);
        let topo = Arc::clone(&self.topo);
        for (k, (b, _)) in topo.blocks().filter(|(_, info)| info.source.is_some()).enumerate() {
            let src = topo.source(b).expect("source block");
            let worker = match (src.worker, self.config.placement) {
                (Some(pinned), _) if pinned >= w => {
                    return Err(SimError::Placement { block: topo.label(b), worker: pinned, workers: w })
                }
                (Some(pinned), _) => pinned,
                (None, Placement::RoundRobin) => k % w,
                (None, Placement::Random) => rng.random_range(0..w),
            };
            self.home[b.index()] = Some(worker);
        }
        Ok(())
    }

    fn load_initial_state(&mut self) -> Result<(), SimError> {
        let topo = Arc::clone(&self.topo);
        let mut later: Vec<(f64, usize, usize, BlockIdx)> = Vec::new();
        for (b, info) in topo.blocks() {
            let Some(pos) = info.source else { continue };
            let src = topo.source(b).expect("source block");
            match src.tier {
                Tier::Memory => {
                    // Overflow at load time demotes to disk by policy order.
                    self.materialized[b.index()] = true;
                    let w = self.home[b.index()].expect("placed");
                    self.insert_quietly(w, b)?;
                }
                Tier::Disk => self.materialized[b.index()] = true,
                Tier::None => later.push((src.arrival, pos, info.job, b)),
            }
        }
        for e in &mut self.engines {
            e.policy_mut().init_labels(&self.materialized, &self.in_memory);
        }
        self.master.init_labels(&self.materialized, &self.in_memory);

        if self.tracks_peers {
            for j in 0..topo.jobs().len() {
                let msgs = self.master.broadcast_peer_profile(0.0, j);
                self.message_log.extend(msgs);
            }
        }

        // Jobs load in parallel: ties in arrival go round-robin across jobs.
        later.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))));
        for (time, _, _, b) in later {
            self.push(time, EventKind::SourceInsert(b));
        }

        let mut initial: Vec<(u32, usize, TaskIdx)> = Vec::new();
        for (t, info) in topo.tasks() {
            self.waiting_on[t.index()] = info.inputs.iter().filter(|b| !self.materialized[b.index()]).count() as u32;
            if self.waiting_on[t.index()] == 0 {
                initial.push((info.id.index, info.job, t));
            }
        }
        initial.sort();
        self.ready.extend(initial.into_iter().map(|(_, _, t)| t));
        Ok(())
    }

    fn insert_quietly(&mut self, w: usize, b: BlockIdx) -> Result<(), SimError> {
        let size = self.topo.block(b).size;
        let engine = &mut self.engines[w];
        let need = size.saturating_sub(engine.cache().free());
        let decision = engine.choose_victims(need, Some(b))?;
        for v in decision.victims {
            engine.evict(v)?;
            self.in_memory[v.index()] = false;
        }
        engine.insert(b)?;
        self.in_memory[b.index()] = true;
        Ok(())
    }

    fn push(&mut self, time: f64, kind: EventKind) {
        self.queue.push(Event { time, seq: self.seq, kind });
        self.seq += 1;
    }

    pub fn topology(&self) -> &Arc<Topology> {
        &self.topo
    }

    pub fn config(&self) -> &ClusterConfig {
        &self.config
    }

    pub fn engines(&self) -> &[CacheEngine] {
        &self.engines
    }

    pub fn materialized(&self) -> &[bool] {
        &self.materialized
    }

    pub fn in_memory(&self) -> &[bool] {
        &self.in_memory
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn messages(&self) -> &[ProtocolMessage] {
        &self.message_log
    }

    /// Messages sent but not yet delivered.
    pub fn in_flight(&self) -> usize {
        self.in_flight
    }

    pub fn is_quiescent(&self) -> bool {
        self.queue.is_empty()
    }

    /// Processes one event. Returns false once nothing is left to do.
    pub fn step(&mut self) -> Result<bool, SimError> {
        let Some(ev) = self.queue.pop() else {
            return Ok(false);
        };
        self.now = ev.time;
        match ev.kind {
            EventKind::Deliver(id) => self.deliver(id),
            EventKind::SourceInsert(b) => {
                let w = self.home[b.index()].expect("placed");
                self.materialize(w, b)?;
            }
            EventKind::TaskFinish(t) => self.finish(t)?,
        }
        if self.queue.peek().is_none_or(|e| e.time > self.now) {
            self.dispatch();
        }
        Ok(true)
    }

    pub fn run_to_end(mut self) -> Result<SimReport, SimError> {
        while self.step()? {}
        self.into_report()
    }

    pub fn into_report(self) -> Result<SimReport, SimError> {
        let pending = self.topo.num_tasks() - self.finished;
        if pending > 0 {
            return Err(SimError::Deadlock { pending });
        }
        let ratio = |n: u64| if self.accesses == 0 { 0.0 } else { n as f64 / self.accesses as f64 };
        Ok(SimReport {
            policy: self.policy,
            makespan: self.makespan,
            accesses: self.accesses,
            hits: self.hits,
            effective_hits: self.effective_hits,
            hit_ratio: ratio(self.hits),
            effective_hit_ratio: ratio(self.effective_hits),
            evictions: self.eviction_log.iter().filter(|e| !e.spilled).count() as u64,
            spills: self.eviction_log.iter().filter(|e| e.spilled).count() as u64,
            messages: MessageCounts::of(&self.message_log),
            peer_groups: self.topo.num_tasks(),
            total_task_time: self.total_task_time,
            first_victim: self.eviction_log.iter().find(|e| !e.spilled).map(|e| e.label.clone()),
            eviction_log: self.eviction_log,
            access_log: self.access_log,
            message_log: self.message_log,
        })
    }

    fn pick_worker(&self, t: TaskIdx) -> Option<usize> {
        let inputs = &self.topo.task(t).inputs;
        (0..self.config.workers).filter(|w| self.free_slots[*w] > 0).max_by_key(|&w| {
            let mut mem = 0u64;
            let mut local = 0u64;
            for b in inputs {
                if self.home[b.index()] == Some(w) {
                    let size = self.topo.block(*b).size;
                    local += size;
                    if self.in_memory[b.index()] {
                        mem += size;
                    }
                }
            }
            (mem, local, std::cmp::Reverse(w))
        })
    }

    fn dispatch(&mut self) {
        while let Some(&t) = self.ready.front() {
            let Some(w) = self.pick_worker(t) else { break };
            self.ready.pop_front();
            self.start(t, w);
        }
    }

    fn start(&mut self, t: TaskIdx, w: usize) {
        let topo = Arc::clone(&self.topo);
        let info = topo.task(t);
        let mut all_in = true;
        let mut bytes = 0u64;
        let mut pinned = Vec::new();
        for &b in &info.inputs {
            let rec = classify_access(&topo, t, b, &self.materialized, &self.in_memory);
            self.accesses += 1;
            self.hits += u64::from(rec.hit);
            self.effective_hits += u64::from(rec.effective);
            all_in &= rec.hit;
            self.access_log.push(rec);
            bytes += topo.block(b).size;
            let h = self.home[b.index()].expect("materialized inputs have a home");
            self.engines[h].on_access(b);
            if self.in_memory[b.index()] {
                self.engines[h].pin(b);
                pinned.push((h, b));
            }
        }
        let per_unit = if all_in { self.config.mem_read_cost } else { self.config.disk_read_cost };
        let duration = info.compute_cost + bytes as f64 * per_unit;
        self.total_task_time += duration;
        self.free_slots[w] -= 1;
        self.running[t.index()] = Some(Running { worker: w, pinned });
        self.push(self.now + duration, EventKind::TaskFinish(t));
    }

    fn finish(&mut self, t: TaskIdx) -> Result<(), SimError> {
        let run = self.running[t.index()].take().expect("task was running");
        for (h, b) in run.pinned {
            self.engines[h].unpin(b);
        }
        for e in &mut self.engines {
            e.on_task_complete(t)?;
        }
        let msg = self.master.retire(self.now, t);
        if self.tracks_peers {
            self.message_log.push(msg);
        }
        self.finished += 1;
        self.makespan = self.makespan.max(self.now);
        self.free_slots[run.worker] += 1;
        self.materialize(run.worker, self.topo.task(t).output)
    }

    fn materialize(&mut self, w: usize, b: BlockIdx) -> Result<(), SimError> {
        let size = self.topo.block(b).size;
        self.home[b.index()] = Some(w);
        self.materialized[b.index()] = true;
        let capacity = self.engines[w].cache().capacity();
        if size > capacity {
            return Err(PolicyError::InsufficientCapacity { needed: size, capacity, evictable: capacity }.into());
        }
        let need = size.saturating_sub(self.engines[w].cache().free());
        match self.engines[w].choose_victims(need, Some(b)) {
            Ok(decision) => {
                for v in decision.victims {
                    self.evict(w, v)?;
                }
                self.engines[w].insert(b)?;
                self.in_memory[b.index()] = true;
            }
            Err(PolicyError::InsufficientCapacity { .. }) => {
                self.eviction_log.push(EvictionRecord {
                    time: self.now,
                    worker: w,
                    block: self.topo.block(b).block,
                    label: self.topo.label(b),
                    spilled: true,
                });
                let notices = self.engines[w].policy_mut().on_block_evicted(b);
                self.propagate(w, b, notices.iter().map(|n| n.group).collect());
            }
            Err(e) => return Err(e.into()),
        }
        let topo = Arc::clone(&self.topo);
        for &c in &topo.block(b).consumers {
            self.waiting_on[c.index()] -= 1;
            if self.waiting_on[c.index()] == 0 {
                self.ready.push_back(c);
            }
        }
        Ok(())
    }

    fn evict(&mut self, w: usize, b: BlockIdx) -> Result<(), SimError> {
        let notices = self.engines[w].evict(b)?;
        self.in_memory[b.index()] = false;
        self.eviction_log.push(EvictionRecord {
            time: self.now,
            worker: w,
            block: self.topo.block(b).block,
            label: self.topo.label(b),
            spilled: false,
        });
        self.propagate(w, b, notices.iter().map(|n| n.group).collect());
        Ok(())
    }

    /// Brings every other worker's labels up to date after `b` left memory
    /// on worker `w`.
    fn propagate(&mut self, w: usize, b: BlockIdx, groups: Vec<TaskIdx>) {
        if !self.tracks_peers {
            // No protocol: labels are still kept for the metrics, for free.
            self.master.on_report(self.now, w, b);
            for (i, e) in self.engines.iter_mut().enumerate() {
                if i != w {
                    e.policy_mut().on_block_evicted(b);
                }
            }
            return;
        }
        if groups.is_empty() {
            return;
        }
        let latency = self.config.broadcast_latency;
        if latency == 0.0 {
            let msgs = self.master.report_and_broadcast_eviction(self.now, w, b, &groups);
            for m in &msgs {
                if let (MessageKind::EvictionBroadcast, crate::protocol::NodeId::Worker(dst)) = (m.kind, m.dst) {
                    self.engines[dst].policy_mut().on_block_evicted(b);
                }
            }
            self.message_log.extend(msgs);
        } else {
            self.message_log.push(self.master.report(self.now, w, b, &groups));
            self.send(Delivery { to: None, from: w, block: b });
        }
    }

    fn send(&mut self, d: Delivery) {
        let id = self.deliveries.len();
        self.deliveries.push(d);
        self.in_flight += 1;
        self.push(self.now + self.config.broadcast_latency, EventKind::Deliver(id));
    }

    fn deliver(&mut self, id: usize) {
        self.in_flight -= 1;
        let d = self.deliveries[id].clone();
        match d.to {
            None => {
                let fanout = self.master.on_report(self.now, d.from, d.block);
                for m in fanout {
                    if let crate::protocol::NodeId::Worker(dst) = m.dst {
                        self.send(Delivery { to: Some(dst), from: d.from, block: d.block });
                    }
                    self.message_log.push(m);
                }
            }
            Some(w) => {
                self.engines[w].policy_mut().on_block_evicted(d.block);
            }
        }
    }

    /// Groups named by broadcast messages, for tests that want them by task.
    pub fn broadcast_groups(&self) -> Vec<TaskId> {
        self.message_log
            .iter()
            .filter(|m| m.kind == MessageKind::EvictionBroadcast)
            .flat_map(|m| match &m.payload {
                Payload::Eviction { groups, .. } => groups.clone(),
                _ => Vec::new(),
            })
            .collect()
    }
}

/// Runs a workload to completion.
pub fn run(workloads: &[JobDag], config: &ClusterConfig, policy: PolicyKind) -> Result<SimReport, SimError> {
    Simulation::new(workloads, config, policy)?.run_to_end()
}
