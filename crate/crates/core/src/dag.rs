//! Job DAGs of blocks and tasks.
//!
//! A job is a set of source blocks plus tasks; each task reads a nonempty set
//! of input blocks (its peers) and materializes exactly one output block.
//! Reference counts and peer-groups are derived from this structure.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One partition of one RDD of one job.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BlockRef {
    pub job: u32,
    pub rdd: u32,
    pub partition: u32,
}

impl BlockRef {
    pub const fn new(job: u32, rdd: u32, partition: u32) -> Self {
        Self { job, rdd, partition }
    }
}

impl fmt::Display for BlockRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "j{}:r{}/{}", self.job, self.rdd, self.partition)
    }
}

/// Task identity: the owning job plus the task's position in that job.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TaskId {
    pub job: u32,
    pub index: u32,
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "j{}:t{}", self.job, self.index)
    }
}

/// Storage tier of a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Memory,
    Disk,
    /// Not materialized yet.
    None,
}

impl Tier {
    pub fn is_materialized(self) -> bool {
        !matches!(self, Tier::None)
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tier::Memory => "memory",
            Tier::Disk => "disk",
            Tier::None => "none",
        })
    }
}

/// Size, materialization state and tier of a block.
///
/// `materialized` is derived from `tier`, so the two can never disagree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockMeta {
    pub block: BlockRef,
    pub size: u64,
    pub tier: Tier,
}

impl BlockMeta {
    pub fn new(block: BlockRef, size: u64, tier: Tier) -> Self {
        debug_assert!(size > 0, "block sizes are positive");
        Self { block, size, tier }
    }

    pub fn materialized(&self) -> bool {
        self.tier.is_materialized()
    }
}

/// A block with no producing task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceBlock {
    pub block: BlockRef,
    pub size: u64,
    /// Where the block lives when the job is submitted. `None` sources are
    /// inserted into memory at `arrival`.
    pub tier: Tier,
    /// Time of the insertion event for `Tier::None` sources.
    #[serde(default)]
    pub arrival: f64,
    /// Pinned placement; the simulator places the block itself when absent.
    #[serde(default)]
    pub worker: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: TaskId,
    pub name: String,
    /// The task's peer set.
    pub inputs: Vec<BlockRef>,
    pub output: BlockRef,
    pub output_size: u64,
    pub compute_cost: f64,
}

/// The input blocks of one task, labelled complete while none of its
/// materialized members has left memory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerGroup {
    pub task: TaskId,
    pub members: Vec<BlockRef>,
    pub label: GroupLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupLabel {
    Complete,
    Incomplete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobDag {
    pub id: u32,
    pub name: String,
    /// RDD names, indexed by `BlockRef::rdd`.
    pub rdds: Vec<String>,
    pub sources: Vec<SourceBlock>,
    pub tasks: Vec<TaskSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DagError {
    #[error("cyclic dependency among tasks {tasks:?}")]
    CyclicDependency { tasks: Vec<String> },
    #[error("task {task} reads {block}, which is neither a source nor produced by any task")]
    DanglingBlock { task: String, block: String },
    #[error("block {block} has more than one producer: {producers:?}")]
    DuplicateProducer { block: String, producers: Vec<String> },
    #[error("task {task} has no inputs")]
    EmptyInputs { task: String },
    #[error("task {task} lists input {block} more than once")]
    DuplicateInput { task: String, block: String },
    #[error("block {block} does not belong to job {job}")]
    ForeignBlock { job: u32, block: String },
    #[error("block {block} has zero size")]
    ZeroSize { block: String },
    #[error("block {block} names unknown rdd {rdd}")]
    UnknownRdd { block: String, rdd: u32 },
    #[error("duplicate task id {task}")]
    DuplicateTask { task: String },
}

impl JobDag {
    pub fn new(id: u32, name: impl Into<String>) -> Self {
        Self { id, name: name.into(), rdds: Vec::new(), sources: Vec::new(), tasks: Vec::new() }
    }

    /// Index of the named RDD, registering it on first use.
    pub fn rdd(&mut self, name: &str) -> u32 {
        if let Some(pos) = self.rdds.iter().position(|r| r == name) {
            return pos as u32;
        }
        self.rdds.push(name.to_owned());
        (self.rdds.len() - 1) as u32
    }

    pub fn rdd_id(&self, name: &str) -> Option<u32> {
        self.rdds.iter().position(|r| r == name).map(|p| p as u32)
    }

    /// Block `partition` of the named RDD, registering the RDD if needed.
    pub fn block(&mut self, rdd: &str, partition: u32) -> BlockRef {
        let rdd = self.rdd(rdd);
        BlockRef::new(self.id, rdd, partition)
    }

    pub fn find_block(&self, rdd: &str, partition: u32) -> Option<BlockRef> {
        self.rdd_id(rdd).map(|r| BlockRef::new(self.id, r, partition))
    }

    pub fn add_source(&mut self, block: BlockRef, size: u64, tier: Tier) -> &mut SourceBlock {
        self.sources.push(SourceBlock { block, size, tier, arrival: 0.0, worker: None });
        self.sources.last_mut().unwrap()
    }

    pub fn add_task(
        &mut self,
        name: impl Into<String>,
        inputs: Vec<BlockRef>,
        output: BlockRef,
        output_size: u64,
        compute_cost: f64,
    ) -> TaskId {
        let id = TaskId { job: self.id, index: self.tasks.len() as u32 };
        self.tasks.push(TaskSpec { id, name: name.into(), inputs, output, output_size, compute_cost });
        id
    }

    /// Human-readable `rdd/partition` name of a block of this job.
    pub fn label(&self, block: &BlockRef) -> String {
        match self.rdds.get(block.rdd as usize) {
            Some(name) if block.job == self.id => format!("{}/{}", name, block.partition),
            _ => block.to_string(),
        }
    }

    pub fn source_blocks(&self) -> impl Iterator<Item = &BlockRef> {
        self.sources.iter().map(|s| &s.block)
    }

    /// Size of every block, sources and task outputs alike.
    pub fn block_sizes(&self) -> BTreeMap<BlockRef, u64> {
        let mut sizes: BTreeMap<BlockRef, u64> = self.sources.iter().map(|s| (s.block, s.size)).collect();
        for t in &self.tasks {
            sizes.insert(t.output, t.output_size);
        }
        sizes
    }

    pub fn total_source_size(&self) -> u64 {
        self.sources.iter().map(|s| s.size).sum()
    }
}

/// Checks every structural invariant of a job DAG.
pub fn validate_dag(dag: &JobDag) -> Result<(), DagError> {
    let mut seen_tasks = HashSet::new();
    let mut producers: BTreeMap<BlockRef, Vec<&TaskSpec>> = BTreeMap::new();
    let sources: HashSet<BlockRef> = dag.sources.iter().map(|s| s.block).collect();

    let check_block = |b: &BlockRef| -> Result<(), DagError> {
        if b.job != dag.id {
            return Err(DagError::ForeignBlock { job: dag.id, block: dag.label(b) });
        }
        if b.rdd as usize >= dag.rdds.len() {
            return Err(DagError::UnknownRdd { block: b.to_string(), rdd: b.rdd });
        }
        Ok(())
    };

    let mut source_seen = HashSet::new();
    for s in &dag.sources {
        check_block(&s.block)?;
        if s.size == 0 {
            return Err(DagError::ZeroSize { block: dag.label(&s.block) });
        }
        if !source_seen.insert(s.block) {
            return Err(DagError::DuplicateProducer {
                block: dag.label(&s.block),
                producers: vec!["<source>".into(), "<source>".into()],
            });
        }
    }

    for t in &dag.tasks {
        if !seen_tasks.insert(t.id) {
            return Err(DagError::DuplicateTask { task: t.name.clone() });
        }
        if t.inputs.is_empty() {
            return Err(DagError::EmptyInputs { task: t.name.clone() });
        }
        check_block(&t.output)?;
        if t.output_size == 0 {
            return Err(DagError::ZeroSize { block: dag.label(&t.output) });
        }
        let mut inputs = HashSet::new();
        for b in &t.inputs {
            check_block(b)?;
            if !inputs.insert(*b) {
                return Err(DagError::DuplicateInput { task: t.name.clone(), block: dag.label(b) });
            }
        }
        if inputs.contains(&t.output) {
            return Err(DagError::CyclicDependency { tasks: vec![t.name.clone()] });
        }
        producers.entry(t.output).or_default().push(t);
    }

    for (block, prods) in &producers {
        if prods.len() > 1 || sources.contains(block) {
            let mut names: Vec<String> = prods.iter().map(|t| t.name.clone()).collect();
            if sources.contains(block) {
                names.insert(0, "<source>".into());
            }
            return Err(DagError::DuplicateProducer { block: dag.label(block), producers: names });
        }
    }

    for t in &dag.tasks {
        for b in &t.inputs {
            if !sources.contains(b) && !producers.contains_key(b) {
                return Err(DagError::DanglingBlock { task: t.name.clone(), block: dag.label(b) });
            }
        }
    }

    // Kahn's algorithm over task -> consumer edges.
    let index: HashMap<TaskId, usize> = dag.tasks.iter().enumerate().map(|(i, t)| (t.id, i)).collect();
    let mut indegree = vec![0usize; dag.tasks.len()];
    let mut consumers: Vec<Vec<usize>> = vec![Vec::new(); dag.tasks.len()];
    for (i, t) in dag.tasks.iter().enumerate() {
        for b in &t.inputs {
            if let Some(prods) = producers.get(b) {
                let p = index[&prods[0].id];
                consumers[p].push(i);
                indegree[i] += 1;
            }
        }
    }
    let mut queue: VecDeque<usize> = (0..dag.tasks.len()).filter(|&i| indegree[i] == 0).collect();
    let mut visited = 0;
    while let Some(i) = queue.pop_front() {
        visited += 1;
        for &c in &consumers[i] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                queue.push_back(c);
            }
        }
    }
    if visited != dag.tasks.len() {
        let tasks = (0..dag.tasks.len()).filter(|&i| indegree[i] > 0).map(|i| dag.tasks[i].name.clone()).collect();
        return Err(DagError::CyclicDependency { tasks });
    }
    Ok(())
}

/// Validates a forest of jobs, additionally requiring distinct job ids.
pub fn validate_workload(jobs: &[JobDag]) -> Result<(), DagError> {
    let mut ids = BTreeSet::new();
    for dag in jobs {
        if !ids.insert(dag.id) {
            return Err(DagError::DuplicateTask { task: format!("job {}", dag.id) });
        }
        validate_dag(dag)?;
    }
    Ok(())
}

/// Per block, the number of tasks that read it and whose output is not yet
/// materialized. Every block of the DAG gets an entry, zero included.
pub fn reference_counts(dag: &JobDag, materialized: &HashSet<BlockRef>) -> BTreeMap<BlockRef, u32> {
    let mut counts: BTreeMap<BlockRef, u32> = dag.block_sizes().into_keys().map(|b| (b, 0)).collect();
    for t in dag.tasks.iter().filter(|t| !materialized.contains(&t.output)) {
        for b in &t.inputs {
            *counts.entry(*b).or_insert(0) += 1;
        }
    }
    counts
}

/// One peer-group per task, initially labelled complete.
pub fn peer_groups(dag: &JobDag) -> Vec<PeerGroup> {
    dag.tasks.iter().map(|t| PeerGroup { task: t.id, members: t.inputs.clone(), label: GroupLabel::Complete }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{gen_fig1, gen_zip, Fig1Reading};

    #[test]
    fn zip_dag_validates() {
        assert_eq!(validate_dag(&gen_zip(0, 10, 4)), Ok(()));
    }

    #[test]
    fn self_loop_is_a_cycle() {
        let mut dag = JobDag::new(0, "loop");
        let x = dag.block("x", 0);
        dag.add_task("t1", vec![x], x, 1, 0.0);
        assert!(matches!(validate_dag(&dag), Err(DagError::CyclicDependency { .. })));
    }

    #[test]
    fn two_task_cycle_names_both_tasks() {
        let mut dag = JobDag::new(0, "cycle");
        let x = dag.block("x", 0);
        let y = dag.block("y", 0);
        dag.add_task("t1", vec![x], y, 1, 0.0);
        dag.add_task("t2", vec![y], x, 1, 0.0);
        match validate_dag(&dag) {
            Err(DagError::CyclicDependency { tasks }) => assert_eq!(tasks, vec!["t1", "t2"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dangling_input() {
        let mut dag = JobDag::new(0, "dangling");
        let a = dag.block("a", 0);
        let b = dag.block("b", 0);
        let c = dag.block("c", 0);
        dag.add_source(a, 1, Tier::Disk);
        dag.add_task("t", vec![a, b], c, 1, 0.0);
        assert!(matches!(validate_dag(&dag), Err(DagError::DanglingBlock { .. })));
    }

    #[test]
    fn duplicate_producer() {
        let mut dag = JobDag::new(0, "dup");
        let a = dag.block("a", 0);
        let c = dag.block("c", 0);
        dag.add_source(a, 1, Tier::Disk);
        dag.add_task("t1", vec![a], c, 1, 0.0);
        dag.add_task("t2", vec![a], c, 1, 0.0);
        assert!(matches!(validate_dag(&dag), Err(DagError::DuplicateProducer { .. })));
    }

    #[test]
    fn source_that_is_also_produced_is_a_duplicate_producer() {
        let mut dag = JobDag::new(0, "dup");
        let a = dag.block("a", 0);
        let c = dag.block("c", 0);
        dag.add_source(a, 1, Tier::Disk);
        dag.add_source(c, 1, Tier::Disk);
        dag.add_task("t1", vec![a], c, 1, 0.0);
        assert!(matches!(validate_dag(&dag), Err(DagError::DuplicateProducer { .. })));
    }

    #[test]
    fn zip_reference_counts() {
        let dag = gen_zip(0, 10, 4);
        let sources: HashSet<BlockRef> = dag.source_blocks().copied().collect();
        let rc = reference_counts(&dag, &sources);
        for s in &sources {
            assert_eq!(rc[s], 1);
        }
        let everything: HashSet<BlockRef> = dag.block_sizes().into_keys().collect();
        assert!(reference_counts(&dag, &everything).values().all(|&c| c == 0));
    }

    #[test]
    fn block_consumed_twice_counts_twice() {
        let mut dag = JobDag::new(0, "fan");
        let a = dag.block("a", 0);
        let x = dag.block("x", 0);
        let y = dag.block("y", 0);
        dag.add_source(a, 1, Tier::Memory);
        dag.add_task("t1", vec![a], x, 1, 0.0);
        dag.add_task("t2", vec![a], y, 1, 0.0);
        let rc = reference_counts(&dag, &HashSet::from([a]));
        assert_eq!(rc[&a], 2);
        let rc = reference_counts(&dag, &HashSet::from([a, x]));
        assert_eq!(rc[&a], 1);
    }

    #[test]
    fn fig1_peer_groups() {
        let (dag, _) = gen_fig1(Fig1Reading::MaterializedOnDisk);
        let groups = peer_groups(&dag);
        let names: Vec<Vec<String>> = groups.iter().map(|g| g.members.iter().map(|b| dag.label(b)).collect()).collect();
        assert_eq!(names, vec![vec!["a/0", "b/0"], vec!["c/0", "d/0"]]);
        assert!(groups.iter().all(|g| g.label == GroupLabel::Complete));
    }

    #[test]
    fn zip_and_singleton_groups() {
        let dag = gen_zip(0, 10, 4);
        let groups = peer_groups(&dag);
        assert_eq!(groups.len(), 10);
        for (i, g) in groups.iter().enumerate() {
            let names: Vec<String> = g.members.iter().map(|b| dag.label(b)).collect();
            assert_eq!(names, vec![format!("A/{}", i + 1), format!("B/{}", i + 1)]);
        }

        let mut single = JobDag::new(0, "single");
        let a = single.block("a", 0);
        let b = single.block("b", 0);
        single.add_source(a, 1, Tier::Disk);
        single.add_task("t", vec![a], b, 1, 0.0);
        assert_eq!(peer_groups(&single)[0].members, vec![a]);
    }
}
