//! Workload files.
//!
//! A workload is a TOML document with one `[[job]]` table per job. Blocks
//! are written `"rdd/partition"`, RDD names being local to their job.
//!
//! ```toml
//! [[job]]
//! id = 0
//! name = "zip"
//! rdds = ["A", "B", "C"]     # optional; fixes RDD numbering
//!
//! [[job.source]]
//! block = "A/1"
//! size = 2
//! tier = "none"              # memory | disk | none (default)
//! arrival = 0.0              # optional, for tier "none"
//! worker = 1                 # optional placement
//!
//! [[job.task]]
//! name = "zip_1"
//! inputs = ["A/1", "B/1"]
//! output = "C/1"
//! output_size = 4
//! compute_cost = 4.0         # optional, default 0
//! ```

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::Spanned;

use crate::dag::{validate_dag, BlockRef, DagError, JobDag, Tier};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormatError {
    #[error("{}: {message}", Pos(*line, *column))]
    Parse { line: usize, column: usize, message: String },
    #[error("{}: bad block reference {text:?} (expected \"rdd/partition\")", Pos(*line, *column))]
    BadBlock { line: usize, column: usize, text: String },
    #[error("{}: duplicate job id {id}", Pos(*line, 1))]
    DuplicateJob { line: usize, id: u32 },
    #[error("{}job {job}: {error}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Invalid { line: Option<usize>, job: String, error: DagError },
}

impl FormatError {
    pub fn line(&self) -> Option<usize> {
        match self {
            FormatError::Parse { line, .. }
            | FormatError::BadBlock { line, .. }
            | FormatError::DuplicateJob { line, .. } => Some(*line),
            FormatError::Invalid { line, .. } => *line,
        }
    }

    /// True for structural problems in an otherwise well-formed file.
    pub fn is_validation(&self) -> bool {
        matches!(self, FormatError::Invalid { .. } | FormatError::DuplicateJob { .. })
    }
}

struct Pos(usize, usize);

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}", self.0, self.1)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileIn {
    #[serde(default)]
    job: Vec<JobIn>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JobIn {
    id: Option<Spanned<u32>>,
    name: Spanned<String>,
    #[serde(default)]
    rdds: Vec<String>,
    #[serde(default)]
    source: Vec<SourceIn>,
    #[serde(default)]
    task: Vec<TaskIn>,
}

fn default_tier() -> Tier {
    Tier::None
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SourceIn {
    block: Spanned<String>,
    size: u64,
    #[serde(default = "default_tier")]
    tier: Tier,
    #[serde(default)]
    arrival: f64,
    worker: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskIn {
    name: Spanned<String>,
    inputs: Vec<Spanned<String>>,
    output: Spanned<String>,
    output_size: u64,
    #[serde(default)]
    compute_cost: f64,
}

#[derive(Serialize)]
struct FileOut {
    job: Vec<JobOut>,
}

#[derive(Serialize)]
struct JobOut {
    id: u32,
    name: String,
    rdds: Vec<String>,
    source: Vec<SourceOut>,
    task: Vec<TaskOut>,
}

#[derive(Serialize)]
struct SourceOut {
    block: String,
    size: u64,
    tier: Tier,
    #[serde(skip_serializing_if = "is_zero")]
    arrival: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    worker: Option<usize>,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

#[derive(Serialize)]
struct TaskOut {
    name: String,
    inputs: Vec<String>,
    output: String,
    output_size: u64,
    compute_cost: f64,
}

/// 1-based (line, column) of a byte offset.
fn position(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

/// Where each named thing of one job was written.
#[derive(Default)]
struct JobLines {
    job: usize,
    tasks: HashMap<String, usize>,
    blocks: HashMap<String, usize>,
}

impl JobLines {
    fn locate(&self, error: &DagError) -> usize {
        let task = |name: &str| self.tasks.get(name).copied();
        let block = |label: &str| self.blocks.get(label).copied();
        let found = match error {
            DagError::CyclicDependency { tasks } => tasks.first().and_then(|t| task(t)),
            DagError::DanglingBlock { task: t, .. }
            | DagError::EmptyInputs { task: t }
            | DagError::DuplicateInput { task: t, .. }
            | DagError::DuplicateTask { task: t } => task(t),
            DagError::DuplicateProducer { block: b, producers } => {
                producers.iter().rev().find_map(|p| task(p)).or_else(|| block(b))
            }
            DagError::ZeroSize { block: b } | DagError::ForeignBlock { block: b, .. } => block(b),
            DagError::UnknownRdd { .. } => None,
        };
        found.unwrap_or(self.job)
    }
}

fn parse_block(dag: &mut JobDag, text: &Spanned<String>, src: &str) -> Result<BlockRef, FormatError> {
    let s = text.get_ref();
    let bad = || {
        let (line, column) = position(src, text.span().start);
        FormatError::BadBlock { line, column, text: s.clone() }
    };
    let (rdd, part) = s.rsplit_once('/').ok_or_else(bad)?;
    if rdd.is_empty() {
        return Err(bad());
    }
    let part: u32 = part.parse().map_err(|_| bad())?;
    Ok(dag.block(rdd, part))
}

/// Parses and validates a workload file.
pub fn parse_workload(src: &str) -> Result<Vec<JobDag>, FormatError> {
    let file: FileIn = toml::from_str(src).map_err(|e| {
        let (line, column) = e.span().map_or((1, 1), |s| position(src, s.start));
        FormatError::Parse { line, column, message: e.message().to_owned() }
    })?;

    let mut jobs = Vec::new();
    let mut lines = Vec::new();
    let mut ids: HashMap<u32, usize> = HashMap::new();
    for (i, j) in file.job.into_iter().enumerate() {
        let job_line = position(src, j.name.span().start).0;
        let id = j.id.as_ref().map_or(i as u32, |s| *s.get_ref());
        if ids.insert(id, job_line).is_some() {
            let line = j.id.as_ref().map_or(job_line, |s| position(src, s.span().start).0);
            return Err(FormatError::DuplicateJob { line, id });
        }
        let mut dag = JobDag::new(id, j.name.into_inner());
        for r in &j.rdds {
            dag.rdd(r);
        }
        let mut where_ = JobLines { job: job_line, ..Default::default() };
        for s in j.source {
            let block = parse_block(&mut dag, &s.block, src)?;
            where_.blocks.entry(s.block.get_ref().clone()).or_insert(position(src, s.block.span().start).0);
            let entry = dag.add_source(block, s.size, s.tier);
            entry.arrival = s.arrival;
            entry.worker = s.worker;
        }
        for t in j.task {
            let inputs = t.inputs.iter().map(|b| parse_block(&mut dag, b, src)).collect::<Result<Vec<_>, _>>()?;
            let output = parse_block(&mut dag, &t.output, src)?;
            let line = position(src, t.name.span().start).0;
            where_.tasks.entry(t.name.get_ref().clone()).or_insert(line);
            where_.blocks.entry(t.output.get_ref().clone()).or_insert(position(src, t.output.span().start).0);
            dag.add_task(t.name.into_inner(), inputs, output, t.output_size, t.compute_cost);
        }
        jobs.push(dag);
        lines.push(where_);
    }

    for (dag, where_) in jobs.iter().zip(&lines) {
        validate_dag(dag).map_err(|error| FormatError::Invalid {
            line: Some(where_.locate(&error)),
            job: dag.name.clone(),
            error,
        })?;
    }
    Ok(jobs)
}

/// Writes jobs in the workload format. `parse_workload` reads the result
/// back to equal jobs.
pub fn dump_workload(jobs: &[JobDag]) -> String {
    let block = |dag: &JobDag, b: &BlockRef| format!("{}/{}", dag.rdds[b.rdd as usize], b.partition);
    let file = FileOut {
        job: jobs
            .iter()
            .map(|dag| JobOut {
                id: dag.id,
                name: dag.name.clone(),
                rdds: dag.rdds.clone(),
                source: dag
                    .sources
                    .iter()
                    .map(|s| SourceOut {
                        block: block(dag, &s.block),
                        size: s.size,
                        tier: s.tier,
                        arrival: s.arrival,
                        worker: s.worker,
                    })
                    .collect(),
                task: dag
                    .tasks
                    .iter()
                    .map(|t| TaskOut {
                        name: t.name.clone(),
                        inputs: t.inputs.iter().map(|b| block(dag, b)).collect(),
                        output: block(dag, &t.output),
                        output_size: t.output_size,
                        compute_cost: t.compute_cost,
                    })
                    .collect(),
            })
            .collect(),
    };
    toml::to_string(&file).expect("workloads always serialize")
}
