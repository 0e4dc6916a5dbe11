//! `lerc`: run cache simulations and the built-in experiment recipes.
//!
//! Exit status is 0 on success, 1 when the input is invalid (workload file,
//! plan or cluster settings) and 2 on any other failure.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use lerc_core::dag::JobDag;
use lerc_core::experiment::{
    fig1_plan, write_json, write_rows_csv, write_staircase_csv, write_summary_csv, ExperimentPlan, MultiTenantRecipe,
    PlanError,
};
use lerc_core::format::{dump_workload, parse_workload, FormatError};
use lerc_core::policy::{PolicyKind, TieBreak};
use lerc_core::protocol;
use lerc_core::sim::{run, staircase_experiment, ClusterConfig, Placement, SimError};
use lerc_core::workload::{gen_fig1, gen_random_dag, gen_zip, Fig1Reading, MultiTenantSpec};

#[derive(Parser)]
#[command(name = "lerc", version, about = "Peer-aware cache eviction simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep a workload file over policies, capacities and repetitions.
    Run(RunArgs),
    /// Parse and check a workload file.
    Validate {
        #[arg(long)]
        workload: PathBuf,
    },
    /// Simulate a workload file once and print its protocol messages.
    Trace(TraceArgs),
    /// The two-task coalesce example on a 3-block cache.
    Fig1(Fig1Args),
    /// Zip job runtime as input blocks are cached one at a time.
    Staircase(StaircaseArgs),
    /// Concurrent zip tenants competing for the cluster cache.
    Multitenant(MultitenantArgs),
    /// Write a generated workload file.
    Gen(GenArgs),
}

#[derive(Clone, Copy, Default, ValueEnum)]
enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Args)]
struct Output {
    #[arg(long, value_enum, default_value_t)]
    format: Format,
    /// Data rows go here; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per (policy, capacity) mean/min/max go here; stderr table when absent.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct Cluster {
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = 1)]
    slots: usize,
    #[arg(long, default_value = "lru-fallback")]
    tie_break: TieBreak,
    #[arg(long, default_value = "round-robin")]
    placement: Placement,
    #[arg(long, default_value_t = 0.0)]
    latency: f64,
    #[arg(long, default_value_t = 1.0)]
    mem_cost: f64,
    #[arg(long, default_value_t = 10.0)]
    disk_cost: f64,
}

impl Cluster {
    fn config(&self) -> ClusterConfig {
        ClusterConfig {
            workers: self.workers,
            slots_per_worker: self.slots,
            tie_break: self.tie_break,
            placement: self.placement,
            broadcast_latency: self.latency,
            mem_read_cost: self.mem_cost,
            disk_read_cost: self.disk_cost,
            ..Default::default()
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    workload: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "lru,lrc,lerc")]
    policy: Vec<PolicyKind>,
    /// Per-worker cache capacities.
    #[arg(long, value_delimiter = ',', required = true)]
    capacity: Vec<u64>,
    #[arg(long, default_value_t = 1)]
    reps: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    cluster: Cluster,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct TraceArgs {
    #[arg(long)]
    workload: PathBuf,
    #[arg(long, default_value = "lerc")]
    policy: PolicyKind,
    #[arg(long)]
    capacity: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    cluster: Cluster,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Fig1Args {
    #[arg(long, value_delimiter = ',', default_value = "lru,lfu,lrc,lerc,sticky")]
    policy: Vec<PolicyKind>,
    #[arg(long, default_value = "random")]
    tie_break: TieBreak,
    #[arg(long, default_value_t = 1)]
    reps: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct StaircaseArgs {
    #[arg(long, default_value_t = 10)]
    partitions: u32,
    #[arg(long, default_value_t = 4)]
    block_size: u64,
    #[command(flatten)]
    cluster: Cluster,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MultitenantArgs {
    /// Use the full-size workload (10 tenants, 100 blocks per file).
    #[arg(long)]
    full_scale: bool,
    #[arg(long)]
    tenants: Option<u32>,
    #[arg(long)]
    partitions: Option<u32>,
    #[arg(long)]
    file_size: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    slots: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    policy: Option<Vec<PolicyKind>>,
    /// Cluster cache sizes as fractions of the total input.
    #[arg(long, value_delimiter = ',')]
    fraction: Option<Vec<f64>>,
    #[arg(long)]
    tie_break: Option<TieBreak>,
    #[arg(long)]
    reps: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct GenArgs {
    #[command(subcommand)]
    kind: GenKind,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum GenKind {
    Fig1 {
        /// Treat block d as not yet computed instead of on disk.
        #[arg(long)]
        uncomputed: bool,
    },
    Zip {
        #[arg(long, default_value_t = 10)]
        partitions: u32,
        #[arg(long, default_value_t = 4)]
        block_size: u64,
    },
    Multitenant {
        #[arg(long, default_value_t = 10)]
        tenants: u32,
        #[arg(long, default_value_t = 20)]
        partitions: u32,
        #[arg(long, default_value_t = 40)]
        file_size: u64,
    },
    Random {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 30)]
        max_tasks: u32,
        #[arg(long, default_value_t = 4)]
        max_fanin: u32,
    },
}

/// A failure tagged with the exit status it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn invalid(error: impl Into<anyhow::Error>) -> Self {
        Failure { code: 1, error: error.into() }
    }
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure { code: 2, error: e.into() }
    }
}

fn sim_failure(e: SimError) -> Failure {
    match e {
        SimError::Config(_) | SimError::Dag(_) | SimError::Placement { .. } => Failure::invalid(e),
        other => other.into(),
    }
}

fn plan_failure(e: PlanError) -> Failure {
    match e {
        PlanError::Invalid(_) => Failure::invalid(e),
        PlanError::Cell { source: SimError::Config(_) | SimError::Dag(_) | SimError::Placement { .. }, .. } => {
            Failure::invalid(e)
        }
        other => other.into(),
    }
}

fn load(path: &Path) -> Result<Vec<JobDag>, Failure> {
    let src = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_workload(&src).map_err(|e: FormatError| Failure::invalid(anyhow!("{}: {e}", path.display())))
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn sweep(plan: &ExperimentPlan, output: &Output) -> Result<(), Failure> {
    let result = plan.run().map_err(plan_failure)?;
    let rows = result.rows();
    let summaries = result.summaries();
    let mut out = sink(&output.out)?;
    match output.format {
        Format::Csv => write_rows_csv(&rows, &mut out)?,
        Format::Json => write_json(&rows, &mut out)?,
    }
    out.flush()?;
    match &output.summary {
        Some(p) => {
            let file = BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?);
            match output.format {
                Format::Csv => write_summary_csv(&summaries, file)?,
                Format::Json => write_json(&summaries, file)?,
            }
        }
        None => {
            let mut err = io::stderr().lock();
            writeln!(
                err,
                "{:<8} {:>9} {:>5} {:>26} {:>20} {:>20}",
                "policy", "capacity", "runs", "makespan mean [min, max]", "hit ratio", "effective"
            )?;
            for s in &summaries {
                writeln!(
                    err,
                    "{:<8} {:>9} {:>5} {:>10.2} [{:.2}, {:.2}] {:>7.4} [{:.3}, {:.3}] {:>7.4} [{:.3}, {:.3}]",
                    s.policy.name(),
                    s.capacity,
                    s.runs,
                    s.makespan.mean,
                    s.makespan.min,
                    s.makespan.max,
                    s.hit_ratio.mean,
                    s.hit_ratio.min,
                    s.hit_ratio.max,
                    s.effective_hit_ratio.mean,
                    s.effective_hit_ratio.min,
                    s.effective_hit_ratio.max,
                )?;
            }
        }
    }
    Ok(())
}

fn cmd_run(a: RunArgs) -> Result<(), Failure> {
    let jobs = load(&a.workload)?;
    let workload = a.workload.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let plan = ExperimentPlan {
        workload,
        jobs,
        config: a.cluster.config(),
        policies: a.policy,
        capacities: a.capacity,
        reps: a.reps,
        seed_base: a.seed,
    };
    sweep(&plan, &a.output)
}

fn cmd_validate(workload: PathBuf) -> Result<(), Failure> {
    let jobs = load(&workload)?;
    let tasks: usize = jobs.iter().map(|j| j.tasks.len()).sum();
    let sources: usize = jobs.iter().map(|j| j.sources.len()).sum();
    println!("{}: ok ({} jobs, {sources} sources, {tasks} tasks)", workload.display(), jobs.len());
    Ok(())
}

fn cmd_trace(a: TraceArgs) -> Result<(), Failure> {
    let jobs = load(&a.workload)?;
    let cfg = ClusterConfig { cache_capacity_per_worker: a.capacity, seed: a.seed, ..a.cluster.config() };
    let report = run(&jobs, &cfg, a.policy).map_err(sim_failure)?;
    let mut out = sink(&a.out)?;
    match a.format {
        Format::Csv => protocol::write_csv(&report.message_log, &mut out)?,
        Format::Json => write_json(&report.message_log, &mut out)?,
    }
    out.flush()?;
    eprintln!(
        "makespan {} hit ratio {:.4} effective {:.4} evictions {} messages {}",
        report.makespan,
        report.hit_ratio,
        report.effective_hit_ratio,
        report.evictions,
        report.messages.total()
    );
    Ok(())
}

fn cmd_fig1(a: Fig1Args) -> Result<(), Failure> {
    sweep(&fig1_plan(a.policy, a.tie_break, a.reps, a.seed), &a.output)
}

fn cmd_staircase(a: StaircaseArgs) -> Result<(), Failure> {
    let points = staircase_experiment(&a.cluster.config(), a.partitions, a.block_size).map_err(sim_failure)?;
    let mut out = sink(&a.out)?;
    match a.format {
        Format::Csv => write_staircase_csv(&points, &mut out)?,
        Format::Json => write_json(&points, &mut out)?,
    }
    out.flush()?;
    Ok(())
}

fn cmd_multitenant(a: MultitenantArgs) -> Result<(), Failure> {
    let mut r = MultiTenantRecipe::default();
    if a.full_scale {
        r.spec = MultiTenantSpec::FULL;
        r.workers = 20;
    }
    r.spec.tenants = a.tenants.unwrap_or(r.spec.tenants);
    r.spec.partitions = a.partitions.unwrap_or(r.spec.partitions);
    r.spec.file_size = a.file_size.unwrap_or(r.spec.file_size);
    r.workers = a.workers.unwrap_or(r.workers);
    r.slots_per_worker = a.slots.unwrap_or(r.slots_per_worker);
    r.policies = a.policy.unwrap_or(r.policies);
    r.fractions = a.fraction.unwrap_or(r.fractions);
    r.tie_break = a.tie_break.unwrap_or(r.tie_break);
    r.reps = a.reps.unwrap_or(r.reps);
    r.seed_base = a.seed.unwrap_or(r.seed_base);
    if r.workers == 0 {
        return Err(Failure::invalid(anyhow!("--workers must be at least 1")));
    }
    sweep(&r.plan(), &a.output)
}

fn cmd_gen(a: GenArgs) -> Result<(), Failure> {
    let jobs = match a.kind {
        GenKind::Fig1 { uncomputed } => {
            let reading = if uncomputed { Fig1Reading::Uncomputed } else { Fig1Reading::MaterializedOnDisk };
            vec![gen_fig1(reading).0]
        }
        GenKind::Zip { partitions, block_size } => vec![gen_zip(0, partitions, block_size)],
        GenKind::Multitenant { tenants, partitions, file_size } => {
            MultiTenantSpec { tenants, partitions, file_size }.generate()
        }
        GenKind::Random { seed, max_tasks, max_fanin } => vec![gen_random_dag(seed, max_tasks, max_fanin)],
    };
    let mut out = sink(&a.out)?;
    out.write_all(dump_workload(&jobs).as_bytes())?;
    out.flush()?;
    Ok(())
}

/// The error chain joined with ": ", skipping causes the outer message
/// already spells out.
fn message(e: &anyhow::Error) -> String {
    let mut text = e.to_string();
    for cause in e.chain().skip(1) {
        let c = cause.to_string();
        if !text.ends_with(&c) {
            text = format!("{text}: {c}");
        }
    }
    text
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Validate { workload } => cmd_validate(workload),
        Command::Trace(a) => cmd_trace(a),
        Command::Fig1(a) => cmd_fig1(a),
        Command::Staircase(a) => cmd_staircase(a),
        Command::Multitenant(a) => cmd_multitenant(a),
        Command::Gen(a) => cmd_gen(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", message(&f.error));
            ExitCode::from(f.code)
        }
    }
}
