use criterion::{criterion_group, criterion_main, Criterion};

use lerc_core::experiment::{ExperimentPlan, MultiTenantRecipe};
use lerc_core::par;
use lerc_core::workload::MultiTenantSpec;

fn plan() -> ExperimentPlan {
    let recipe = MultiTenantRecipe {
        spec: MultiTenantSpec { tenants: 4, partitions: 10, file_size: 20 },
        reps: 4,
        ..Default::default()
    };
    recipe.plan()
}

fn sweep(c: &mut Criterion) {
    let plan = plan();
    let cells = plan.cells();
    let mut group = c.benchmark_group("sweep");
    group.sample_size(20);
    group.bench_function("parallel", |b| b.iter(|| par::map(&cells, |cell| plan.run_cell(cell).unwrap().makespan)));
    group.bench_function("sequential", |b| {
        b.iter(|| par::map_sequential(&cells, |cell| plan.run_cell(cell).unwrap().makespan))
    });
    group.finish();
}

criterion_group!(benches, sweep);
criterion_main!(benches);
