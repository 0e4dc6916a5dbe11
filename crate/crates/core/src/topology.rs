//! Dense, read-only index over a forest of job DAGs.
//!
//! Policies and the simulator address blocks and tasks by position in this
//! index rather than by `BlockRef`, which keeps their per-block state in
//! plain vectors.

use std::collections::HashMap;

use crate::dag::{BlockRef, JobDag, SourceBlock, TaskId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlockIdx(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TaskIdx(pub u32);

impl BlockIdx {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl TaskIdx {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone)]
pub struct BlockInfo {
    pub block: BlockRef,
    pub size: u64,
    pub job: usize,
    pub producer: Option<TaskIdx>,
    pub consumers: Vec<TaskIdx>,
    /// Position of the source entry in its job, if this is a source.
    pub source: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct TaskInfo {
    pub id: TaskId,
    pub job: usize,
    pub inputs: Vec<BlockIdx>,
    pub output: BlockIdx,
    pub compute_cost: f64,
}

#[derive(Debug, Clone)]
pub struct Topology {
    jobs: Vec<JobDag>,
    blocks: Vec<BlockInfo>,
    tasks: Vec<TaskInfo>,
    block_index: HashMap<BlockRef, BlockIdx>,
    task_index: HashMap<TaskId, TaskIdx>,
}

impl Topology {
    /// Builds the index. The jobs are expected to be valid.
    pub fn new(jobs: &[JobDag]) -> Self {
        let mut blocks = Vec::new();
        let mut block_index = HashMap::new();
        let mut tasks = Vec::new();
        let mut task_index = HashMap::new();

        for (j, dag) in jobs.iter().enumerate() {
            for (pos, s) in dag.sources.iter().enumerate() {
                let idx = BlockIdx(blocks.len() as u32);
                block_index.insert(s.block, idx);
                blocks.push(BlockInfo {
                    block: s.block,
                    size: s.size,
                    job: j,
                    producer: None,
                    consumers: Vec::new(),
                    source: Some(pos),
                });
            }
            for t in &dag.tasks {
                let idx = BlockIdx(blocks.len() as u32);
                block_index.insert(t.output, idx);
                blocks.push(BlockInfo {
                    block: t.output,
                    size: t.output_size,
                    job: j,
                    producer: Some(TaskIdx(tasks.len() as u32)),
                    consumers: Vec::new(),
                    source: None,
                });
                task_index.insert(t.id, TaskIdx(tasks.len() as u32));
                tasks.push(TaskInfo {
                    id: t.id,
                    job: j,
                    inputs: Vec::new(),
                    output: idx,
                    compute_cost: t.compute_cost,
                });
            }
        }
        for dag in jobs {
            for t in &dag.tasks {
                let tidx = task_index[&t.id];
                let inputs: Vec<BlockIdx> = t.inputs.iter().map(|b| block_index[b]).collect();
                for b in &inputs {
                    blocks[b.index()].consumers.push(tidx);
                }
                tasks[tidx.index()].inputs = inputs;
            }
        }
        Self { jobs: jobs.to_vec(), blocks, tasks, block_index, task_index }
    }

    pub fn jobs(&self) -> &[JobDag] {
        &self.jobs
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn block(&self, b: BlockIdx) -> &BlockInfo {
        &self.blocks[b.index()]
    }

    pub fn task(&self, t: TaskIdx) -> &TaskInfo {
        &self.tasks[t.index()]
    }

    pub fn blocks(&self) -> impl Iterator<Item = (BlockIdx, &BlockInfo)> {
        self.blocks.iter().enumerate().map(|(i, b)| (BlockIdx(i as u32), b))
    }

    pub fn tasks(&self) -> impl Iterator<Item = (TaskIdx, &TaskInfo)> {
        self.tasks.iter().enumerate().map(|(i, t)| (TaskIdx(i as u32), t))
    }

    pub fn block_idx(&self, b: &BlockRef) -> Option<BlockIdx> {
        self.block_index.get(b).copied()
    }

    pub fn task_idx(&self, t: &TaskId) -> Option<TaskIdx> {
        self.task_index.get(t).copied()
    }

    pub fn source(&self, b: BlockIdx) -> Option<&SourceBlock> {
        let info = self.block(b);
        info.source.map(|pos| &self.jobs[info.job].sources[pos])
    }

    /// `rdd/partition` label qualified by job name.
    pub fn label(&self, b: BlockIdx) -> String {
        let info = self.block(b);
        let dag = &self.jobs[info.job];
        if self.jobs.len() == 1 {
            dag.label(&info.block)
        } else {
            format!("{}:{}", dag.name, dag.label(&info.block))
        }
    }

    pub fn task_name(&self, t: TaskIdx) -> &str {
        let info = self.task(t);
        &self.jobs[info.job].tasks[info.id.index as usize].name
    }

    pub fn input_bytes(&self, t: TaskIdx) -> u64 {
        self.task(t).inputs.iter().map(|b| self.block(*b).size).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::gen_zip;

    #[test]
    fn zip_index_links_producers_and_consumers() {
        let topo = Topology::new(&[gen_zip(0, 3, 2)]);
        assert_eq!(topo.num_blocks(), 9);
        assert_eq!(topo.num_tasks(), 3);
        for (t, info) in topo.tasks() {
            assert_eq!(topo.block(info.output).producer, Some(t));
            for b in &info.inputs {
                assert_eq!(topo.block(*b).consumers, vec![t]);
            }
        }
        assert_eq!(topo.label(BlockIdx(0)), "A/1");
    }
}
