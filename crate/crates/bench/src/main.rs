use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use adlmh::harness::default_checkpoints;
use adlmh::tables::{write_b_table, write_fixed_point_table, write_oracle_table};
use adlmh::{reference_posterior, run_benchmark, Algorithm, BenchConfig, BenchError, Corpus, ReferenceBudget, ReferenceSet};
use adlmh_core::adaptive::DEFAULT_EXPLORATION;
use clap::{Args, Parser, Subcommand};

/// Seed offset for a reference set built on the fly, so it does not share
/// streams with the run it scores.
const REFERENCE_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Parser)]
#[command(name = "adlmh", version, about = "Lightweight and adaptive Metropolis-Hastings benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run restarts of one sampler on a corpus program and write metric CSVs.
    Run(RunArgs),
    /// Tables of the two-variable equilibrium analysis.
    Equilibrium(EquilibriumArgs),
    /// Exact smoothing marginals of the benchmark HMM.
    Oracle {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build a reference posterior sample set for the gp program.
    Reference(ReferenceArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    program: Corpus,
    #[arg(long)]
    algorithm: Algorithm,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_EXPLORATION)]
    exploration_c: f64,
    /// Comma-separated sample counts.
    #[arg(long, value_delimiter = ',')]
    checkpoints: Option<Vec<usize>>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// 25 restarts of 500000 samples unless overridden.
    #[arg(long)]
    full_scale: bool,
    /// Reference sample file for gp; built on the fly when absent.
    #[arg(long)]
    reference: Option<PathBuf>,
}

#[derive(Args)]
struct EquilibriumArgs {
    /// Number of p1 points in [0, 1].
    #[arg(long, default_value_t = 101)]
    grid: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.25, 0.5, 0.75, 1.0])]
    beta1: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.25, 0.5, 0.75, 1.0])]
    beta2: Vec<f64>,
    /// Directory for b.csv and fixed_point.csv; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReferenceArgs {
    #[arg(long, default_value = "gp")]
    program: Corpus,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    tail: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    full_scale: bool,
    #[arg(long)]
    out: PathBuf,
}

fn create(path: &PathBuf) -> Result<std::fs::File, BenchError> {
    std::fs::File::create(path).map_err(|e| BenchError::Io(path.display().to_string(), e))
}

fn run(args: RunArgs) -> Result<(), BenchError> {
    let mut cfg = BenchConfig::new(args.program, args.algorithm);
    if args.full_scale {
        cfg = cfg.full_scale();
    }
    if let Some(n) = args.samples {
        cfg.samples = n;
        cfg.checkpoints = default_checkpoints(n);
    }
    if let Some(r) = args.restarts {
        cfg.restarts = r;
    }
    if let Some(c) = args.checkpoints {
        cfg.checkpoints = c;
    }
    cfg.seed = args.seed;
    cfg.exploration = args.exploration_c;
    if cfg.program == Corpus::Gp {
        let reference = match &args.reference {
            Some(path) => ReferenceSet::read(path)?,
            None => {
                cfg.validate_schedule()?;
                let budget = if args.full_scale { ReferenceBudget::full_scale() } else { ReferenceBudget::default() };
                eprintln!("building gp reference set ({} restarts of {} steps)", budget.restarts, budget.steps);
                let set = reference_posterior(Corpus::Gp, budget, args.seed.wrapping_add(REFERENCE_SEED_OFFSET))?;
                std::fs::create_dir_all(&args.out).map_err(|e| BenchError::Io(args.out.display().to_string(), e))?;
                set.write(&args.out.join("gp_reference.csv"))?;
                set
            }
        };
        cfg.reference = Some(Arc::new(reference));
    }
    let report = run_benchmark(&cfg)?;
    for r in report.restarts.iter().filter(|r| r.error.is_some()) {
        eprintln!("restart {} stopped early: {}", r.restart, r.error.as_deref().unwrap_or_default());
    }
    for p in report.write_files(&args.out)? {
        println!("{}", p.display());
    }
    for (n, q) in report.checkpoints.iter().zip(report.quartiles()?) {
        eprintln!("{:>8}  {} median {:.5}  [{:.5}, {:.5}]", n, report.metric, q[1], q[0], q[2]);
    }
    Ok(())
}

fn equilibrium(args: EquilibriumArgs) -> Result<(), BenchError> {
    match &args.out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| BenchError::Io(dir.display().to_string(), e))?;
            write_b_table(args.grid, create(&dir.join("b.csv"))?)?;
            write_fixed_point_table(&args.beta1, &args.beta2, create(&dir.join("fixed_point.csv"))?)
        }
        None => {
            let mut out = io::stdout().lock();
            write_b_table(args.grid, &mut out)?;
            writeln!(out).map_err(|e| BenchError::Io("stdout".into(), e))?;
            write_fixed_point_table(&args.beta1, &args.beta2, &mut out)
        }
    }
}

fn reference(args: ReferenceArgs) -> Result<(), BenchError> {
    let mut budget = if args.full_scale { ReferenceBudget::full_scale() } else { ReferenceBudget::default() };
    budget.restarts = args.restarts.unwrap_or(budget.restarts);
    budget.steps = args.steps.unwrap_or(budget.steps);
    budget.tail = args.tail.unwrap_or(budget.tail);
    budget.thin = args.thin.unwrap_or(budget.thin);
    let set = reference_posterior(args.program, budget, args.seed)?;
    set.write(&args.out)?;
    println!("{}", args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Equilibrium(a) => equilibrium(a),
        Command::Oracle { out: Some(path) } => create(&path).and_then(write_oracle_table),
        Command::Oracle { out: None } => write_oracle_table(io::stdout().lock()),
        Command::Reference(a) => reference(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
