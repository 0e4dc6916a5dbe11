//! Brute-force recomputation of reference counts from a state snapshot.

use std::collections::{BTreeMap, HashSet};

use crate::dag::{BlockRef, JobDag};

/// Reference counts recomputed from scratch: per block, the pending tasks
/// that read it.
pub fn reference_count_oracle(dag: &JobDag, materialized: &HashSet<BlockRef>) -> BTreeMap<BlockRef, u32> {
    crate::dag::reference_counts(dag, materialized)
}

/// Effective reference counts recomputed from scratch: per block, the
/// pending tasks that read it and whose materialized inputs are all in
/// memory.
pub fn effective_reference_count_oracle(
    dag: &JobDag,
    materialized: &HashSet<BlockRef>,
    resident: &HashSet<BlockRef>,
) -> BTreeMap<BlockRef, u32> {
    let mut counts: BTreeMap<BlockRef, u32> = dag.block_sizes().into_keys().map(|b| (b, 0)).collect();
    for t in &dag.tasks {
        if materialized.contains(&t.output) {
            continue;
        }
        let effective = t.inputs.iter().all(|b| !materialized.contains(b) || resident.contains(b));
        if effective {
            for b in &t.inputs {
                *counts.entry(*b).or_insert(0) += 1;
            }
        }
    }
    counts
}
