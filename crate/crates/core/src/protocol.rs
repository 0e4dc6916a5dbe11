//! Driver/worker messages that keep peer-group labels in sync.
//!
//! The driver ([`PeerTrackerMaster`]) hands every worker the peer-groups of a
//! submitted job, collects eviction reports, and fans an eviction out to all
//! other workers when it turns at least one group incomplete. Workers keep
//! their labels in their own [`PolicyState`](crate::policy::PolicyState).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dag::{BlockRef, GroupLabel, TaskId};
use crate::topology::{BlockIdx, TaskIdx, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    PeerProfileBroadcast,
    EvictionReport,
    EvictionBroadcast,
    ErcUpdate,
}

impl MessageKind {
    pub fn name(self) -> &'static str {
        match self {
            MessageKind::PeerProfileBroadcast => "peer_profile_broadcast",
            MessageKind::EvictionReport => "eviction_report",
            MessageKind::EvictionBroadcast => "eviction_broadcast",
            MessageKind::ErcUpdate => "erc_update",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeId {
    Driver,
    Worker(usize),
    All,
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Driver => f.write_str("driver"),
            NodeId::Worker(w) => write!(f, "w{w}"),
            NodeId::All => f.write_str("all"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    Profile {
        job: u32,
        groups: usize,
    },
    /// An evicted block and the groups it turned incomplete at the sender.
    /// Broadcasts of one fan-out share a `round`.
    Eviction {
        block: BlockRef,
        groups: Vec<TaskId>,
        round: Option<u64>,
    },
    Retired {
        task: TaskId,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolMessage {
    pub time: f64,
    pub kind: MessageKind,
    pub src: NodeId,
    pub dst: NodeId,
    pub payload: Payload,
}

impl ProtocolMessage {
    pub fn summary(&self) -> String {
        match &self.payload {
            Payload::Profile { job, groups } => format!("job {job}: {groups} groups"),
            Payload::Eviction { block, groups, round } => {
                let groups: Vec<String> = groups.iter().map(|g| g.to_string()).collect();
                match round {
                    Some(r) => format!("{block} round {r} groups [{}]", groups.join(" ")),
                    None => format!("{block} groups [{}]", groups.join(" ")),
                }
            }
            Payload::Retired { task } => format!("{task}"),
        }
    }
}

/// Tally of a message log.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageCounts {
    pub profiles: u64,
    pub reports: u64,
    pub broadcasts: u64,
    pub erc_updates: u64,
    pub rounds: u64,
}

impl MessageCounts {
    pub fn total(&self) -> u64 {
        self.profiles + self.reports + self.broadcasts + self.erc_updates
    }

    pub fn of(log: &[ProtocolMessage]) -> Self {
        let mut c = MessageCounts::default();
        let mut rounds = BTreeSet::new();
        for m in log {
            match m.kind {
                MessageKind::PeerProfileBroadcast => c.profiles += 1,
                MessageKind::EvictionReport => c.reports += 1,
                MessageKind::EvictionBroadcast => {
                    c.broadcasts += 1;
                    if let Payload::Eviction { round: Some(r), .. } = m.payload {
                        rounds.insert(r);
                    }
                }
                MessageKind::ErcUpdate => c.erc_updates += 1,
            }
        }
        c.rounds = rounds.len() as u64;
        c
    }
}

/// Number of distinct broadcast rounds naming each group.
pub fn broadcast_rounds_per_group(log: &[ProtocolMessage]) -> BTreeMap<TaskId, usize> {
    let mut rounds: BTreeMap<TaskId, BTreeSet<u64>> = BTreeMap::new();
    for m in log.iter().filter(|m| m.kind == MessageKind::EvictionBroadcast) {
        if let Payload::Eviction { groups, round: Some(r), .. } = &m.payload {
            for g in groups {
                rounds.entry(*g).or_default().insert(*r);
            }
        }
    }
    rounds.into_iter().map(|(g, r)| (g, r.len())).collect()
}

/// One line per message: time, kind, src, dst, payload.
pub fn write_text<W: io::Write>(log: &[ProtocolMessage], mut out: W) -> io::Result<()> {
    for m in log {
        writeln!(out, "{:.3} {} {} -> {} {}", m.time, m.kind.name(), m.src, m.dst, m.summary())?;
    }
    Ok(())
}

pub fn write_csv<W: io::Write>(log: &[ProtocolMessage], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time", "kind", "src", "dst", "payload"])?;
    for m in log {
        w.write_record([
            m.time.to_string(),
            m.kind.name().to_owned(),
            m.src.to_string(),
            m.dst.to_string(),
            m.summary(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Driver-side tracker. Its labels are authoritative: a report only fans
/// out if it turns some group incomplete here.
#[derive(Debug, Clone)]
pub struct PeerTrackerMaster {
    topo: Arc<Topology>,
    workers: usize,
    labels: Vec<GroupLabel>,
    retired: Vec<bool>,
    next_round: u64,
}

impl PeerTrackerMaster {
    pub fn new(topo: Arc<Topology>, workers: usize) -> Self {
        let n = topo.num_tasks();
        Self { topo, workers, labels: vec![GroupLabel::Complete; n], retired: vec![false; n], next_round: 0 }
    }

    pub fn label(&self, t: TaskIdx) -> GroupLabel {
        self.labels[t.index()]
    }

    /// Same starting labels the workers compute for themselves.
    pub fn init_labels(&mut self, materialized: &[bool], in_memory: &[bool]) {
        for (t, info) in self.topo.tasks() {
            if info.inputs.iter().any(|b| materialized[b.index()] && !in_memory[b.index()]) {
                self.labels[t.index()] = GroupLabel::Incomplete;
            }
        }
    }

    /// One profile per worker for job `job` (an index into the topology).
    pub fn broadcast_peer_profile(&self, time: f64, job: usize) -> Vec<ProtocolMessage> {
        let dag = &self.topo.jobs()[job];
        (0..self.workers)
            .map(|w| ProtocolMessage {
                time,
                kind: MessageKind::PeerProfileBroadcast,
                src: NodeId::Driver,
                dst: NodeId::Worker(w),
                payload: Payload::Profile { job: dag.id, groups: dag.tasks.len() },
            })
            .collect()
    }

    pub fn retire(&mut self, time: f64, t: TaskIdx) -> ProtocolMessage {
        self.retired[t.index()] = true;
        ProtocolMessage {
            time,
            kind: MessageKind::ErcUpdate,
            src: NodeId::Driver,
            dst: NodeId::All,
            payload: Payload::Retired { task: self.topo.task(t).id },
        }
    }

    /// The report a worker sends after `block`'s eviction turned `groups`
    /// incomplete in its own labels.
    pub fn report(&self, time: f64, worker: usize, block: BlockIdx, groups: &[TaskIdx]) -> ProtocolMessage {
        ProtocolMessage {
            time,
            kind: MessageKind::EvictionReport,
            src: NodeId::Worker(worker),
            dst: NodeId::Driver,
            payload: Payload::Eviction {
                block: self.topo.block(block).block,
                groups: groups.iter().map(|t| self.topo.task(*t).id).collect(),
                round: None,
            },
        }
    }

    /// Handles a report delivered at `time`. Returns the fan-out to every
    /// worker but the reporter, empty when no group changed here.
    pub fn on_report(&mut self, time: f64, worker: usize, block: BlockIdx) -> Vec<ProtocolMessage> {
        let mut newly = Vec::new();
        for &t in &self.topo.block(block).consumers {
            if !self.retired[t.index()] && self.labels[t.index()] == GroupLabel::Complete {
                self.labels[t.index()] = GroupLabel::Incomplete;
                newly.push(self.topo.task(t).id);
            }
        }
        if newly.is_empty() {
            return Vec::new();
        }
        let round = self.next_round;
        self.next_round += 1;
        let blk = self.topo.block(block).block;
        (0..self.workers)
            .filter(|w| *w != worker)
            .map(|w| ProtocolMessage {
                time,
                kind: MessageKind::EvictionBroadcast,
                src: NodeId::Driver,
                dst: NodeId::Worker(w),
                payload: Payload::Eviction { block: blk, groups: newly.clone(), round: Some(round) },
            })
            .collect()
    }

    /// Report and fan-out with no delivery delay. Silent when the eviction
    /// changed no label at the worker.
    pub fn report_and_broadcast_eviction(
        &mut self,
        time: f64,
        worker: usize,
        block: BlockIdx,
        groups: &[TaskIdx],
    ) -> Vec<ProtocolMessage> {
        if groups.is_empty() {
            return Vec::new();
        }
        let mut msgs = vec![self.report(time, worker, block, groups)];
        msgs.extend(self.on_report(time, worker, block));
        msgs
    }
}
