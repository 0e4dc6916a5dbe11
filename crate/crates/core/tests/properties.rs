use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::Arc;

use proptest::prelude::*;

use lerc_core::dag::{peer_groups, reference_counts, BlockRef, GroupLabel, JobDag};
use lerc_core::policy::{CacheEngine, PolicyKind, TieBreak};
use lerc_core::sim::{run, ClusterConfig, Placement, Simulation};
use lerc_core::topology::Topology;
use lerc_core::workload::gen_random_dag;

fn in_degree(dag: &JobDag) -> BTreeMap<BlockRef, u32> {
    let mut deg: BTreeMap<BlockRef, u32> = dag.block_sizes().keys().map(|b| (*b, 0)).collect();
    for t in &dag.tasks {
        for b in &t.inputs {
            *deg.get_mut(b).unwrap() += 1;
        }
    }
    deg
}

fn policy() -> impl Strategy<Value = PolicyKind> {
    prop::sample::select(PolicyKind::ALL.to_vec())
}

fn tie() -> impl Strategy<Value = TieBreak> {
    prop_oneof![Just(TieBreak::LruFallback), Just(TieBreak::Random)]
}

/// An engine over a random DAG with a random subset of blocks resident.
fn loaded_engine(seed: u64, kind: PolicyKind, tie: TieBreak, pick: &[bool]) -> (CacheEngine, Arc<Topology>) {
    let dag = gen_random_dag(seed, 20, 4);
    let topo = Arc::new(Topology::new(std::slice::from_ref(&dag)));
    let total: u64 = topo.blocks().map(|(_, b)| b.size).sum();
    let mut engine = CacheEngine::new(Arc::clone(&topo), kind, tie, seed, total);
    let mut in_memory = vec![false; topo.num_blocks()];
    for (b, _) in topo.blocks() {
        if pick[b.index() % pick.len()] {
            engine.insert(b).unwrap();
            in_memory[b.index()] = true;
        }
    }
    let materialized: Vec<bool> = topo
        .blocks()
        .map(|(b, info)| {
            in_memory[b.index()] || topo.source(b).is_some_and(|s| s.tier.is_materialized()) && info.producer.is_none()
        })
        .collect();
    engine.policy_mut().init_labels(&materialized, &in_memory);
    (engine, topo)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rc_with_nothing_computed_is_in_degree(seed in any::<u64>()) {
        let dag = gen_random_dag(seed, 30, 4);
        prop_assert_eq!(reference_counts(&dag, &HashSet::new()), in_degree(&dag));
    }

    #[test]
    fn rc_sum_counts_pending_pairs(seed in any::<u64>(), done in prop::collection::vec(any::<bool>(), 1..40)) {
        let dag = gen_random_dag(seed, 30, 4);
        let materialized: HashSet<BlockRef> = dag
            .tasks
            .iter()
            .enumerate()
            .filter(|(i, _)| done[i % done.len()])
            .map(|(_, t)| t.output)
            .collect();
        let pending: usize = dag.tasks.iter().filter(|t| !materialized.contains(&t.output)).map(|t| t.inputs.len()).sum();
        let total: u32 = reference_counts(&dag, &materialized).values().sum();
        prop_assert_eq!(total as usize, pending);
    }

    #[test]
    fn peer_groups_partition_the_references(seed in any::<u64>()) {
        let dag = gen_random_dag(seed, 30, 4);
        let groups = peer_groups(&dag);
        prop_assert_eq!(groups.len(), dag.tasks.len());
        let mut pairs = BTreeSet::new();
        for g in &groups {
            prop_assert_eq!(g.label, GroupLabel::Complete);
            for m in &g.members {
                prop_assert!(pairs.insert((g.task, *m)));
            }
        }
        let expected: BTreeSet<_> = dag.tasks.iter().flat_map(|t| t.inputs.iter().map(move |b| (t.id, *b))).collect();
        prop_assert_eq!(pairs, expected);
    }

    #[test]
    fn victims_are_resident_and_free_enough(
        seed in any::<u64>(),
        kind in policy(),
        tie in tie(),
        pick in prop::collection::vec(any::<bool>(), 1..16),
        frac in 0.0f64..=1.0,
    ) {
        let (mut engine, topo) = loaded_engine(seed, kind, tie, &pick);
        let resident: BTreeMap<_, _> = engine.cache().resident().collect();
        let evictable: u64 = resident.values().sum();
        let needed = (evictable as f64 * frac).ceil() as u64;
        let d = engine.choose_victims(needed, None).unwrap();
        prop_assert!(d.freed >= needed);
        let distinct: BTreeSet<_> = d.victims.iter().copied().collect();
        prop_assert_eq!(distinct.len(), d.victims.len());
        prop_assert!(d.victims.iter().all(|b| resident.contains_key(b)));
        prop_assert_eq!(d.freed, d.victims.iter().map(|b| topo.block(*b).size).sum::<u64>());
    }

    #[test]
    fn lerc_first_victim_minimises_key(
        seed in any::<u64>(),
        tie in tie(),
        pick in prop::collection::vec(any::<bool>(), 1..16),
    ) {
        let (mut engine, _) = loaded_engine(seed, PolicyKind::Lerc, tie, &pick);
        let key = |e: &CacheEngine, b| (e.policy().rc(b) > 0, e.policy().erc(b));
        let best = engine.cache().resident().map(|(b, _)| key(&engine, b)).min();
        if let Some(best) = best {
            let d = engine.choose_victims(1, None).unwrap();
            prop_assert_eq!(key(&engine, d.victims[0]), best);
        }
    }

    #[test]
    fn labels_never_return_to_complete(seed in any::<u64>(), kind in policy(), workers in 1usize..4, cap in 4u64..12) {
        let jobs = vec![gen_random_dag(seed, 25, 4)];
        let cfg = ClusterConfig {
            workers,
            cache_capacity_per_worker: cap,
            placement: Placement::Random,
            placement_seed: seed,
            seed,
            ..Default::default()
        };
        let mut sim = Simulation::new(&jobs, &cfg, kind).unwrap();
        let n = sim.topology().num_tasks();
        let mut broken = vec![false; n * workers];
        loop {
            for (w, e) in sim.engines().iter().enumerate() {
                for (t, _) in sim.topology().tasks() {
                    let now = e.policy().label(t) == GroupLabel::Incomplete;
                    prop_assert!(now || !broken[w * n + t.index()]);
                    broken[w * n + t.index()] = now;
                }
            }
            if !sim.step().unwrap() {
                break;
            }
        }
    }

    #[test]
    fn effective_within_hits_within_accesses(seed in any::<u64>(), kind in policy(), tie in tie(), cap in 4u64..16) {
        let jobs = vec![gen_random_dag(seed, 30, 4)];
        let cfg = ClusterConfig { workers: 2, cache_capacity_per_worker: cap, tie_break: tie, seed, ..Default::default() };
        let r = run(&jobs, &cfg, kind).unwrap();
        prop_assert!(r.effective_hits <= r.hits && r.hits <= r.accesses);
        prop_assert!(r.effective_hit_ratio <= r.hit_ratio && r.hit_ratio <= 1.0);
    }
}
