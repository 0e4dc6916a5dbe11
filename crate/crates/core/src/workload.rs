//! Built-in workload generators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dag::{BlockRef, JobDag, Tier};

/// How block d of the coalesce example starts out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fig1Reading {
    /// d is materialized and sits on disk.
    #[default]
    MaterializedOnDisk,
    /// d has not been computed yet; it arrives in memory at t = 1.
    Uncomputed,
}

/// Cluster shape the coalesce example assumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fig1Setup {
    pub capacity: u64,
    pub workers: usize,
    pub slots: usize,
    /// The block whose insertion forces the eviction.
    pub pending_insert: BlockRef,
}

/// Two coalesce tasks, {a, b} -> x and {c, d} -> y, on a 3-entry cache
/// holding a, b and c, with e arriving before either task runs.
pub fn gen_fig1(reading: Fig1Reading) -> (JobDag, Fig1Setup) {
    let mut dag = JobDag::new(0, "coalesce");
    let [a, b, c, d, e, x, y] = ["a", "b", "c", "d", "e", "x", "y"].map(|n| dag.block(n, 0));
    for blk in [a, b, c] {
        dag.add_source(blk, 1, Tier::Memory);
    }
    match reading {
        Fig1Reading::MaterializedOnDisk => {
            dag.add_source(d, 1, Tier::Disk);
        }
        Fig1Reading::Uncomputed => {
            dag.add_source(d, 1, Tier::None).arrival = 1.0;
        }
    }
    dag.add_source(e, 1, Tier::None);
    dag.add_task("task1", vec![a, b], x, 1, 2.0);
    dag.add_task("task2", vec![c, d], y, 1, 2.0);
    (dag, Fig1Setup { capacity: 3, workers: 1, slots: 2, pending_insert: e })
}

/// Zip job over `n` partitions: sources A_i and B_i are loaded at t = 0,
/// then task zip_i combines them into C_i.
pub fn gen_zip(job_id: u32, n: u32, block_size: u64) -> JobDag {
    zip_job(job_id, "zip".to_owned(), &vec![block_size; n as usize])
}

fn zip_job(job_id: u32, name: String, sizes: &[u64]) -> JobDag {
    let mut dag = JobDag::new(job_id, name);
    for rdd in ["A", "B", "C"] {
        dag.rdd(rdd);
    }
    for rdd in ["A", "B"] {
        for (i, &size) in sizes.iter().enumerate() {
            let blk = dag.block(rdd, i as u32 + 1);
            dag.add_source(blk, size, Tier::None);
        }
    }
    for (i, &size) in sizes.iter().enumerate() {
        let p = i as u32 + 1;
        let inputs = vec![dag.block("A", p), dag.block("B", p)];
        let out = dag.block("C", p);
        dag.add_task(format!("zip_{p}"), inputs, out, 2 * size, (2 * size) as f64);
    }
    dag
}

/// Shape of the multi-tenant zip experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiTenantSpec {
    pub tenants: u32,
    pub partitions: u32,
    /// Size of each of a job's two input files.
    pub file_size: u64,
}

impl MultiTenantSpec {
    /// 10 tenants, two 400 MB files each, 100 blocks per file (sizes in MB).
    pub const FULL: MultiTenantSpec = MultiTenantSpec { tenants: 10, partitions: 100, file_size: 400 };
    /// `FULL` with a fifth of the blocks and a tenth of the bytes.
    pub const DESK: MultiTenantSpec = MultiTenantSpec { tenants: 10, partitions: 20, file_size: 40 };

    pub fn total_input(&self) -> u64 {
        u64::from(self.tenants) * 2 * self.file_size
    }

    pub fn generate(&self) -> Vec<JobDag> {
        gen_multi_tenant(self.tenants, self.partitions, self.file_size)
    }
}

impl Default for MultiTenantSpec {
    fn default() -> Self {
        Self::DESK
    }
}

/// `tenants` independent zip jobs. Each file of `file_size` units is split
/// into `partitions` blocks; sizes differ by at most one unit when the split
/// is uneven.
pub fn gen_multi_tenant(tenants: u32, partitions: u32, file_size: u64) -> Vec<JobDag> {
    assert!(tenants >= 1 && partitions >= 1, "counts must be positive");
    assert!(file_size >= u64::from(partitions), "every block needs at least one unit");
    let base = file_size / u64::from(partitions);
    let extra = file_size % u64::from(partitions);
    let sizes: Vec<u64> = (0..u64::from(partitions)).map(|p| base + u64::from(p < extra)).collect();
    (0..tenants)
        .map(|j| {
            let name = if tenants == 1 { "zip".to_owned() } else { format!("zip{j}") };
            zip_job(j, name, &sizes)
        })
        .collect()
}

/// A random valid DAG. Tasks are built in order, each reading only sources
/// and earlier outputs, so the result is acyclic by construction.
pub fn gen_random_dag(seed: u64, max_tasks: u32, max_fanin: u32) -> JobDag {
    assert!(max_tasks >= 1 && max_fanin >= 1, "bounds must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dag = JobDag::new(0, format!("random-{seed}"));
    let n_sources = rng.random_range(1..=max_fanin.max(2));
    let n_tasks = rng.random_range(1..=max_tasks);
    let mut pool: Vec<BlockRef> = Vec::new();
    for i in 0..n_sources {
        let blk = dag.block("s", i);
        let tier = match rng.random_range(0..3) {
            0 => Tier::Memory,
            1 => Tier::Disk,
            _ => Tier::None,
        };
        let size = rng.random_range(1..=4);
        let src = dag.add_source(blk, size, tier);
        if tier == Tier::None {
            src.arrival = f64::from(rng.random_range(0..4u32));
        }
        pool.push(blk);
    }
    for t in 0..n_tasks {
        let fanin = rng.random_range(1..=max_fanin.min(pool.len() as u32));
        let mut inputs = Vec::with_capacity(fanin as usize);
        while inputs.len() < fanin as usize {
            let pick = pool[rng.random_range(0..pool.len())];
            if !inputs.contains(&pick) {
                inputs.push(pick);
            }
        }
        let out = dag.block("t", t);
        let size = rng.random_range(1..=4);
        let cost = f64::from(rng.random_range(0..4u32));
        dag.add_task(format!("t{t}"), inputs, out, size, cost);
        pool.push(out);
    }
    dag
}
