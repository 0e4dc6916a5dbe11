use serde::{Deserialize, Serialize};

use super::{run, ClusterConfig, SimError};
use crate::dag::Tier;
use crate::policy::PolicyKind;
use crate::workload::gen_zip;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaircasePoint {
    pub cached: usize,
    pub total_task_time: f64,
    pub makespan: f64,
    pub hit_ratio: f64,
    pub effective_hit_ratio: f64,
}

/// Runs a zip job once per prefix of the caching order A_1, B_1, A_2, B_2,
/// ...: the first `k` blocks start in memory, the rest on disk. The cache is
/// sized so nothing is ever evicted.
pub fn staircase_experiment(
    config: &ClusterConfig,
    partitions: u32,
    block_size: u64,
) -> Result<Vec<StaircasePoint>, SimError> {
    let base = gen_zip(0, partitions, block_size);
    let n = partitions as usize;
    let order: Vec<usize> = (0..n).flat_map(|i| [i, n + i]).collect();
    let everything: u64 = base.block_sizes().values().sum();
    let cfg =
        ClusterConfig { cache_capacity_per_worker: config.cache_capacity_per_worker.max(everything), ..config.clone() };
    (0..=order.len())
        .map(|k| {
            let mut dag = base.clone();
            for s in &mut dag.sources {
                s.tier = Tier::Disk;
            }
            for &pos in &order[..k] {
                dag.sources[pos].tier = Tier::Memory;
            }
            let report = run(&[dag], &cfg, PolicyKind::Lru)?;
            Ok(StaircasePoint {
                cached: k,
                total_task_time: report.total_task_time,
                makespan: report.makespan,
                hit_ratio: report.hit_ratio,
                effective_hit_ratio: report.effective_hit_ratio,
            })
        })
        .collect()
}
