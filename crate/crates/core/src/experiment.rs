//! Parameter sweeps over (policy, capacity, repetition) and the built-in
//! recipes.
//!
//! Every cell of a plan gets its own tie-break seed. The placement seed only
//! depends on the repetition, so all policies of one repetition see the same
//! block placement.

use std::collections::BTreeMap;
use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dag::JobDag;
use crate::par;
use crate::policy::{PolicyKind, TieBreak};
use crate::sim::{derive_seed, run, ClusterConfig, Placement, SimError, SimReport, StaircasePoint};
use crate::workload::{gen_fig1, Fig1Reading, MultiTenantSpec};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("invalid plan: {0}")]
    Invalid(String),
    #[error("cell {cell} ({policy}, capacity {capacity}, rep {rep}): {source}")]
    Cell { cell: usize, policy: PolicyKind, capacity: u64, rep: u32, source: SimError },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    /// Name written to the `workload` column.
    pub workload: String,
    pub jobs: Vec<JobDag>,
    /// Everything but capacity, seed and placement seed, which vary per cell.
    pub config: ClusterConfig,
    pub policies: Vec<PolicyKind>,
    /// Per-worker cache capacities.
    pub capacities: Vec<u64>,
    pub reps: u32,
    pub seed_base: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub index: usize,
    pub policy: PolicyKind,
    pub capacity: u64,
    pub rep: u32,
    pub seed: u64,
    pub placement_seed: u64,
}

/// One CSV data row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub workload: String,
    pub policy: PolicyKind,
    pub capacity: u64,
    pub rep: u32,
    pub seed: u64,
    pub makespan: f64,
    pub hit_ratio: f64,
    pub effective_hit_ratio: f64,
    pub broadcasts: u64,
    pub reports: u64,
    pub evictions: u64,
    pub victim: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Stat {
    pub fn of(xs: impl IntoIterator<Item = f64>) -> Self {
        let (mut n, mut sum, mut min, mut max) = (0usize, 0.0, f64::INFINITY, f64::NEG_INFINITY);
        for x in xs {
            n += 1;
            sum += x;
            min = min.min(x);
            max = max.max(x);
        }
        if n == 0 {
            return Stat { mean: f64::NAN, min: f64::NAN, max: f64::NAN };
        }
        Stat { mean: sum / n as f64, min, max }
    }
}

/// Mean, min and max per (policy, capacity).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub workload: String,
    pub policy: PolicyKind,
    pub capacity: u64,
    pub runs: usize,
    pub makespan: Stat,
    pub hit_ratio: Stat,
    pub effective_hit_ratio: Stat,
    pub broadcasts: Stat,
}

#[derive(Debug, Clone)]
pub struct PlanOutput {
    pub workload: String,
    pub cells: Vec<Cell>,
    pub reports: Vec<SimReport>,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<(), PlanError> {
        if self.policies.is_empty() {
            return Err(PlanError::Invalid("no policies".into()));
        }
        if self.capacities.is_empty() {
            return Err(PlanError::Invalid("no capacities".into()));
        }
        if self.reps == 0 {
            return Err(PlanError::Invalid("repetitions must be at least 1".into()));
        }
        if self.jobs.is_empty() {
            return Err(PlanError::Invalid("no jobs".into()));
        }
        Ok(())
    }

    /// The full cartesian product, capacity-major then policy then rep.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for (ci, &capacity) in self.capacities.iter().enumerate() {
            for (pi, &policy) in self.policies.iter().enumerate() {
                for rep in 0..self.reps {
                    cells.push(Cell {
                        index: cells.len(),
                        policy,
                        capacity,
                        rep,
                        seed: derive_seed(self.seed_base, &[ci as u64, pi as u64, u64::from(rep)]),
                        placement_seed: derive_seed(self.seed_base, &[u64::MAX, u64::from(rep)]),
                    });
                }
            }
        }
        cells
    }

    pub fn cell_config(&self, cell: &Cell) -> ClusterConfig {
        ClusterConfig {
            cache_capacity_per_worker: cell.capacity,
            seed: cell.seed,
            placement_seed: cell.placement_seed,
            ..self.config.clone()
        }
    }

    pub fn run_cell(&self, cell: &Cell) -> Result<SimReport, PlanError> {
        run(&self.jobs, &self.cell_config(cell), cell.policy).map_err(|source| PlanError::Cell {
            cell: cell.index,
            policy: cell.policy,
            capacity: cell.capacity,
            rep: cell.rep,
            source,
        })
    }

    /// Runs every cell, in parallel when the feature is on. Output order is
    /// cell order regardless.
    pub fn run(&self) -> Result<PlanOutput, PlanError> {
        self.validate()?;
        let cells = self.cells();
        let reports = par::map(&cells, |c| self.run_cell(c)).into_iter().collect::<Result<Vec<_>, _>>()?;
        Ok(PlanOutput { workload: self.workload.clone(), cells, reports })
    }

    pub fn run_sequential(&self) -> Result<PlanOutput, PlanError> {
        self.validate()?;
        let cells = self.cells();
        let reports = par::map_sequential(&cells, |c| self.run_cell(c)).into_iter().collect::<Result<Vec<_>, _>>()?;
        Ok(PlanOutput { workload: self.workload.clone(), cells, reports })
    }
}

pub fn row(workload: &str, cell: &Cell, report: &SimReport) -> Row {
    Row {
        workload: workload.to_owned(),
        policy: cell.policy,
        capacity: cell.capacity,
        rep: cell.rep,
        seed: cell.seed,
        makespan: report.makespan,
        hit_ratio: report.hit_ratio,
        effective_hit_ratio: report.effective_hit_ratio,
        broadcasts: report.messages.broadcasts,
        reports: report.messages.reports,
        evictions: report.evictions,
        victim: report.first_victim.clone().unwrap_or_default(),
    }
}

impl PlanOutput {
    pub fn rows(&self) -> Vec<Row> {
        self.cells.iter().zip(&self.reports).map(|(c, r)| row(&self.workload, c, r)).collect()
    }

    pub fn summaries(&self) -> Vec<Summary> {
        let mut groups: BTreeMap<(u64, usize), (PolicyKind, Vec<&Row>)> = BTreeMap::new();
        let rows = self.rows();
        let mut order: Vec<PolicyKind> = Vec::new();
        for r in &rows {
            if !order.contains(&r.policy) {
                order.push(r.policy);
            }
        }
        for r in &rows {
            let pi = order.iter().position(|p| *p == r.policy).unwrap();
            groups.entry((r.capacity, pi)).or_insert_with(|| (r.policy, Vec::new())).1.push(r);
        }
        groups
            .into_iter()
            .map(|((capacity, _), (policy, rs))| Summary {
                workload: self.workload.clone(),
                policy,
                capacity,
                runs: rs.len(),
                makespan: Stat::of(rs.iter().map(|r| r.makespan)),
                hit_ratio: Stat::of(rs.iter().map(|r| r.hit_ratio)),
                effective_hit_ratio: Stat::of(rs.iter().map(|r| r.effective_hit_ratio)),
                broadcasts: Stat::of(rs.iter().map(|r| r.broadcasts as f64)),
            })
            .collect()
    }

    pub fn summary(&self, policy: PolicyKind, capacity: u64) -> Option<Summary> {
        self.summaries().into_iter().find(|s| s.policy == policy && s.capacity == capacity)
    }
}

pub fn write_rows_csv<W: io::Write>(rows: &[Row], out: W) -> Result<(), PlanError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: io::Write>(summaries: &[Summary], out: W) -> Result<(), PlanError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "workload",
        "policy",
        "capacity",
        "runs",
        "makespan_mean",
        "makespan_min",
        "makespan_max",
        "hit_ratio_mean",
        "hit_ratio_min",
        "hit_ratio_max",
        "effective_hit_ratio_mean",
        "effective_hit_ratio_min",
        "effective_hit_ratio_max",
        "broadcasts_mean",
    ])?;
    for s in summaries {
        let mut rec = vec![s.workload.clone(), s.policy.to_string(), s.capacity.to_string(), s.runs.to_string()];
        for st in [s.makespan, s.hit_ratio, s.effective_hit_ratio] {
            rec.extend([st.mean, st.min, st.max].map(|x| x.to_string()));
        }
        rec.push(s.broadcasts.mean.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_staircase_csv<W: io::Write>(points: &[StaircasePoint], out: W) -> Result<(), PlanError> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

/// Any serializable result as pretty JSON followed by a newline.
pub fn write_json<W: io::Write, T: Serialize + ?Sized>(value: &T, mut out: W) -> Result<(), PlanError> {
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

/// The coalesce example on its 1-worker, 3-entry cache.
pub fn fig1_plan(policies: Vec<PolicyKind>, tie_break: TieBreak, reps: u32, seed_base: u64) -> ExperimentPlan {
    let (dag, setup) = gen_fig1(Fig1Reading::MaterializedOnDisk);
    ExperimentPlan {
        workload: "fig1".into(),
        jobs: vec![dag],
        config: ClusterConfig {
            workers: setup.workers,
            slots_per_worker: setup.slots,
            cache_capacity_per_worker: setup.capacity,
            tie_break,
            ..Default::default()
        },
        policies,
        capacities: vec![setup.capacity],
        reps,
        seed_base,
    }
}

/// Cluster and sweep for the multi-tenant zip experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiTenantRecipe {
    pub spec: MultiTenantSpec,
    pub workers: usize,
    pub slots_per_worker: usize,
    /// Cluster-wide cache as fractions of the total input.
    pub fractions: Vec<f64>,
    pub policies: Vec<PolicyKind>,
    pub tie_break: TieBreak,
    pub reps: u32,
    pub seed_base: u64,
}

impl Default for MultiTenantRecipe {
    /// Desk scale keeps the full-size ratio of tasks to slots (1000 zip tasks
    /// on 20 dual-core nodes) by shrinking the cluster with the workload.
    fn default() -> Self {
        Self {
            spec: MultiTenantSpec::DESK,
            workers: 4,
            slots_per_worker: 2,
            fractions: vec![1.0 / 3.0, 0.5, 2.0 / 3.0, 5.0 / 6.0],
            policies: vec![PolicyKind::Lru, PolicyKind::Lrc, PolicyKind::Lerc],
            tie_break: TieBreak::Random,
            reps: 10,
            seed_base: 0,
        }
    }
}

impl MultiTenantRecipe {
    /// Per-worker capacity for a fraction of the total input.
    pub fn capacity(&self, fraction: f64) -> u64 {
        (fraction * self.spec.total_input() as f64 / self.workers as f64).round() as u64
    }

    pub fn plan(&self) -> ExperimentPlan {
        ExperimentPlan {
            workload: "multitenant".into(),
            jobs: self.spec.generate(),
            config: ClusterConfig {
                workers: self.workers,
                slots_per_worker: self.slots_per_worker,
                placement: Placement::Random,
                tie_break: self.tie_break,
                ..Default::default()
            },
            policies: self.policies.clone(),
            capacities: self.fractions.iter().map(|f| self.capacity(*f)).collect(),
            reps: self.reps,
            seed_base: self.seed_base,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cells_enumerate_the_product() {
        let mut plan = fig1_plan(vec![PolicyKind::Lru, PolicyKind::Lrc, PolicyKind::Lerc], TieBreak::Random, 10, 7);
        plan.capacities = vec![3, 4, 5, 6];
        let cells = plan.cells();
        assert_eq!(cells.len(), 120);
        let seeds: std::collections::HashSet<u64> = cells.iter().map(|c| c.seed).collect();
        assert_eq!(seeds.len(), 120);
        assert!(cells.iter().enumerate().all(|(i, c)| c.index == i));
        assert_eq!(plan.run().unwrap().rows().len(), 120);
    }

    #[test]
    fn invalid_plans() {
        let mut plan = fig1_plan(vec![], TieBreak::LruFallback, 1, 0);
        assert!(matches!(plan.run(), Err(PlanError::Invalid(_))));
        plan.policies = vec![PolicyKind::Lru];
        plan.reps = 0;
        assert!(matches!(plan.run(), Err(PlanError::Invalid(_))));
    }

    #[test]
    fn fig1_recipe_names_the_victim() {
        let out = fig1_plan(vec![PolicyKind::Lerc], TieBreak::LruFallback, 1, 0).run().unwrap();
        let rows = out.rows();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].victim, "c/0");
        assert_eq!(rows[0].effective_hit_ratio, 0.5);
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let plan = fig1_plan(PolicyKind::ALL.to_vec(), TieBreak::Random, 5, 3);
        assert_eq!(plan.run().unwrap().rows(), plan.run_sequential().unwrap().rows());
    }

    #[test]
    fn stat_and_summaries() {
        let s = Stat::of([1.0, 2.0, 6.0]);
        assert_eq!((s.mean, s.min, s.max), (3.0, 1.0, 6.0));
        let out = fig1_plan(vec![PolicyKind::Lrc, PolicyKind::Lerc], TieBreak::Random, 4, 0).run().unwrap();
        let sums = out.summaries();
        assert_eq!(sums.len(), 2);
        assert_eq!(sums[0].policy, PolicyKind::Lrc);
        assert!(sums.iter().all(|s| s.runs == 4));
        assert_eq!(out.summary(PolicyKind::Lerc, 3).unwrap().effective_hit_ratio.mean, 0.5);
    }

    #[test]
    fn csv_header_and_rows() {
        let out = fig1_plan(vec![PolicyKind::Lerc], TieBreak::LruFallback, 2, 0).run().unwrap();
        let mut buf = Vec::new();
        write_rows_csv(&out.rows(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "workload,policy,capacity,rep,seed,makespan,hit_ratio,effective_hit_ratio,broadcasts,reports,evictions,victim"
        );
        assert_eq!(lines.count(), 2);
    }

    #[test]
    fn multitenant_capacities() {
        let r = MultiTenantRecipe::default();
        let caps: Vec<u64> = r.fractions.iter().map(|f| r.capacity(*f)).collect();
        assert_eq!(caps, vec![67, 100, 133, 167]);
    }
}
