use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use robust_median::generate::{self, RandomSpec};
use robust_median::io::{instance_to_string, parse_instance, to_pretty, InstanceBundle};
use robust_median::oracle::{brute_force, lp_basic_value, Constraint};
use robust_median::pipeline::{self, Fault, Mode, Problem, RunConfig};
use robust_median::preprocess::EnumerationCaps;
use robust_median::variants::{KnapsackConstraint, PartitionMatroid};
use robust_median::{Error, Rational};
use serde_json::json;

#[derive(Parser)]
#[command(name = "rmed", version, about = "Iterative LP rounding for robust k-median, k-means and their matroid and knapsack variants")]
struct Cli {
    /// Worker threads for parallel oracle and benchmark sweeps.
    #[arg(long, env = "RMED_WORKERS", global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a generated instance as JSON.
    Generate(GenerateArgs),
    /// Solve an instance and print the solution report.
    Run(RunArgs),
    /// Solve with every invariant tallied and print the per-invariant report.
    Verify(VerifyArgs),
    /// Exact optimum by exhaustive search, plus the basic LP value.
    Oracle(OracleArgs),
    /// Oracle-guided ratios over seeded random metrics.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    GapA,
    GapB,
    RandomMetric,
    Euclidean,
}

#[derive(Args)]
struct GenerateArgs {
    family: Family,
    /// Gap fixture parameter.
    #[arg(long, default_value_t = 3)]
    t: usize,
    #[arg(long, default_value_t = 5)]
    facilities: usize,
    #[arg(long, default_value_t = 10)]
    clients: usize,
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Clients to serve; defaults to all but two.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, default_value_t = 1)]
    q: u32,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 20)]
    max_weight: i64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Attach a partition matroid with this many round-robin classes of capacity 1.
    #[arg(long)]
    classes: Option<usize>,
    /// Attach unit facility weights with this knapsack budget.
    #[arg(long)]
    knapsack_budget: Option<Rational>,
    #[arg(long, short, default_value = "-")]
    output: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProblemArg {
    Rkmed,
    Rkmeans,
    Matmed,
    Knapmed,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Full,
    Pseudo,
    OracleGuided,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "rkmed")]
    problem: ProblemArg,
    #[arg(long, value_enum, default_value = "oracle-guided")]
    mode: ModeArg,
    /// Shorthand for `--mode pseudo`.
    #[arg(long)]
    pseudo: bool,
    #[arg(long, default_value = "1/2")]
    epsilon: Rational,
    #[arg(long, default_value = "1/10")]
    rho: Rational,
    #[arg(long, default_value = "1/4")]
    delta: Rational,
    #[arg(long)]
    tau: Option<Rational>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Try an evenly spaced grid of this many offsets instead of one sampled offset.
    #[arg(long)]
    offsets: Option<usize>,
    #[arg(long, default_value_t = 2)]
    max_balls: usize,
    #[arg(long, default_value_t = 2)]
    max_preopen: usize,
    #[arg(long, short, default_value = "-")]
    output: String,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    solve: SolveArgs,
    /// Include the objective trace of the winning attempt.
    #[arg(long)]
    trace: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    InnerBall,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    solve: SolveArgs,
    /// Corrupt the terminal state before the last check.
    #[arg(long, value_enum)]
    inject_fault: Option<FaultArg>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "rkmed")]
    problem: ProblemArg,
    #[arg(long, default_value_t = robust_median::oracle::DEFAULT_CAP)]
    cap: usize,
    #[arg(long, short, default_value = "-")]
    output: String,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 6)]
    facilities: usize,
    #[arg(long, default_value_t = 10)]
    clients: usize,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, default_value_t = 1)]
    q: u32,
    #[arg(long, default_value_t = 20)]
    max_weight: i64,
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long, default_value = "1/2")]
    epsilon: Rational,
    #[arg(long, short, default_value = "-")]
    output: String,
}

fn emit(output: &str, text: &str) -> Result<()> {
    if output == "-" {
        std::io::stdout().write_all(text.as_bytes())?;
    } else {
        fs::write(output, text).with_context(|| format!("writing {output}"))?;
    }
    Ok(())
}

fn read_bundle(path: &PathBuf) -> Result<InstanceBundle> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(parse_instance(&text)?)
}

fn problem(p: ProblemArg) -> Problem {
    match p {
        ProblemArg::Rkmed => Problem::RkMed,
        ProblemArg::Rkmeans => Problem::RkMeans,
        ProblemArg::Matmed => Problem::MatMed,
        ProblemArg::Knapmed => Problem::KnapMed,
    }
}

fn run_config(a: &SolveArgs, trace: bool) -> RunConfig {
    let mode = match (a.pseudo, a.mode) {
        (true, _) | (_, ModeArg::Pseudo) => Mode::Pseudo,
        (_, ModeArg::Full) => Mode::Full,
        (_, ModeArg::OracleGuided) => Mode::OracleGuided,
    };
    RunConfig {
        problem: problem(a.problem),
        mode,
        epsilon: a.epsilon.clone(),
        rho: a.rho.clone(),
        delta: a.delta.clone(),
        tau: a.tau.clone(),
        seed: a.seed,
        offsets: a.offsets,
        caps: EnumerationCaps { max_balls: a.max_balls, max_preopen: a.max_preopen },
        trace,
        ..RunConfig::default()
    }
}

fn cmd_generate(a: &GenerateArgs) -> Result<()> {
    let m = a.m.unwrap_or(a.clients.saturating_sub(2));
    let (instance, coords) = match a.family {
        Family::GapA => (generate::gap_a(a.t)?.instance, None),
        Family::GapB => (generate::gap_b(a.t)?.instance, None),
        Family::RandomMetric => {
            if a.facilities + a.clients < 2 {
                bail!("random-metric needs at least two points");
            }
            let spec = RandomSpec { facilities: a.facilities, clients: a.clients, k: a.k, m, q: a.q, max_weight: a.max_weight };
            (generate::random_metric(&spec, a.seed)?, None)
        }
        Family::Euclidean => {
            let (inst, coords) = generate::euclidean(a.facilities, a.clients, a.dim, a.k, m, a.q, a.seed)?;
            (inst, Some(coords))
        }
    };
    let nf = instance.num_facilities();
    let mut bundle = InstanceBundle::plain(instance);
    if let Some(g) = a.classes {
        if g == 0 {
            bail!("--classes must be positive");
        }
        let mut classes = vec![Vec::new(); g];
        for i in 0..nf {
            classes[i % g].push(i);
        }
        bundle.partition = Some(PartitionMatroid::new(classes, vec![1; g], nf)?);
    }
    if let Some(w) = &a.knapsack_budget {
        bundle.knapsack = Some(KnapsackConstraint::new(vec![Rational::one(); nf], w.clone())?);
    }
    emit(&a.output, &instance_to_string(&bundle, coords.as_deref()))
}

fn cmd_run(a: &RunArgs) -> Result<()> {
    let bundle = read_bundle(&a.solve.input)?;
    let report = pipeline::run(&bundle, &run_config(&a.solve, a.trace))?;
    emit(&a.solve.output, &to_pretty(&report))
}

/// Returns whether every invariant passed.
fn cmd_verify(a: &VerifyArgs) -> Result<bool> {
    let bundle = read_bundle(&a.solve.input)?;
    let fault = a.inject_fault.map(|FaultArg::InnerBall| Fault::InnerBall);
    let report = pipeline::verify(&bundle, &run_config(&a.solve, false), fault);
    emit(&a.solve.output, &to_pretty(&report))?;
    Ok(report.passed)
}

fn cmd_oracle(a: &OracleArgs) -> Result<()> {
    let bundle = read_bundle(&a.input)?;
    let q = if matches!(a.problem, ProblemArg::Rkmeans) { 2 } else { 1 };
    let mut inst = bundle.instance.with_exponent(q)?;
    let constraint = match a.problem {
        ProblemArg::Rkmed | ProblemArg::Rkmeans => Constraint::Cardinality,
        ProblemArg::Matmed => Constraint::Partition(bundle.partition.as_ref().context("matmed needs a partition")?),
        ProblemArg::Knapmed => Constraint::Knapsack(bundle.knapsack.as_ref().context("knapmed needs weights")?),
    };
    if !matches!(constraint, Constraint::Cardinality) {
        inst = inst.with_budget(None, inst.num_clients())?;
    }
    let res = brute_force(&inst, &constraint, a.cap)?;
    let lp = if matches!(constraint, Constraint::Cardinality) { Some(lp_basic_value(&inst)?) } else { None };
    let fid = |i: &usize| inst.facility_ids()[*i].clone();
    let cid = |j: &usize| inst.client_ids()[*j].clone();
    let value = json!({
        "best_open": res.best_open.iter().map(fid).collect::<Vec<_>>(),
        "best_served": res.best_served.iter().map(cid).collect::<Vec<_>>(),
        "opt_cost": res.opt_cost,
        "enumerated": res.enumerated,
        "lp_basic_value": lp,
    });
    emit(&a.output, &to_pretty(&value))
}

fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let spec = RandomSpec {
        facilities: a.facilities,
        clients: a.clients,
        k: a.k,
        m: a.m.unwrap_or(a.clients.saturating_sub(2)),
        q: a.q,
        max_weight: a.max_weight,
    };
    let cfg = RunConfig { epsilon: a.epsilon.clone(), ..RunConfig::default() };
    let report = pipeline::bench(&spec, 0..a.seeds, &cfg)?;
    emit(&a.output, &to_pretty(&report))
}

fn main() -> ExitCode {
    // Exit code 2 is reserved for instances without a feasible solution.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let outcome = match &cli.command {
        Command::Generate(a) => cmd_generate(a).map(|_| true),
        Command::Run(a) => cmd_run(a).map(|_| true),
        Command::Verify(a) => cmd_verify(a),
        Command::Oracle(a) => cmd_oracle(a).map(|_| true),
        Command::Bench(a) => cmd_bench(a).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<Error>() {
                Some(Error::NoFeasibleSolution) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
