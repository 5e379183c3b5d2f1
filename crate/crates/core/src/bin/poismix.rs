//! `poismix`: fit Poisson mixing distributions, compare them, and test for
//! distributional differences between groups of subjects.
//!
//! ```bash
//! poismix test counts.tsv --out results --n-perm 100000 --seed 1
//! poismix simulate A 1a --cells 50 --rounds 300 --n-perm 200 --out size_a_1a
//! poismix generate A 2a --cells 500 --genes 5 --out synthetic.tsv
//! poismix signal 2a --mc-reps 2000
//! poismix fit counts.tsv --gene ACTB --b 20
//! poismix w1 first.json second.json --smoothed both
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use env_logger::Env;
use serde::Serialize;

use poismix::cli_io::{
    dataset_table, emit_counts, ingest_counts, run_simulate_command, run_test_command, select_bound, CountTable,
    DistanceKind, RunConfig, SimulateArgs, TableFormat,
};
use poismix::measures::{w1_pmfs_with_error, DEFAULT_TAIL_TOL};
use poismix::rng::child_seed;
use poismix::simulate::{generate_dataset, model_pair, signal_strength, DesignSpec};
use poismix::{fit, poisson_smooth, w1_measures, Algorithm, DiscreteMeasure, SolverConfig};

#[derive(Parser)]
#[command(name = "poismix", version, about)]
struct Cli {
    /// Worker threads (POISMIX_THREADS takes precedence)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the mixing distribution of every subject in a count table
    Fit(FitArgs),
    /// W1 distance between two mixing distributions stored as JSON
    W1(W1Args),
    /// Per-gene permutation tests with BH adjustment across genes
    Test(TestArgs),
    /// Size/power study on one design and population model
    Simulate(SimArgs),
    /// Write a synthetic count table drawn from a design and model
    Generate(GenerateArgs),
    /// Monte Carlo signal strengths of a population model
    Signal(SignalArgs),
}

#[derive(Args)]
struct BoundArgs {
    /// Support bound B; chosen from the data when absent
    #[arg(long = "b")]
    b: Option<f64>,
    #[arg(long, default_value_t = 0.99)]
    b_quantile: f64,
    #[arg(long, default_value_t = 4.0 / 3.0)]
    b_factor: f64,
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, default_value = "vem")]
    algorithm: Algorithm,
    #[arg(long, default_value_t = 0.01)]
    stop_tol: f64,
    #[arg(long, default_value_t = 2000)]
    max_iters: usize,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            algorithm: self.algorithm,
            stop_tol: self.stop_tol,
            max_iters: self.max_iters,
            ..SolverConfig::default()
        }
    }
}

#[derive(Args)]
struct FitArgs {
    counts: PathBuf,
    /// Only this gene
    #[arg(long)]
    gene: Option<String>,
    #[command(flatten)]
    bound: BoundArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// JSON output file (stdout when absent)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct W1Args {
    first: PathBuf,
    second: PathBuf,
    #[arg(long, default_value = "both")]
    smoothed: DistanceKind,
}

#[derive(Args)]
struct TestArgs {
    counts: PathBuf,
    #[command(flatten)]
    bound: BoundArgs,
    /// Pick B per gene instead of pooling across genes
    #[arg(long)]
    b_per_gene: bool,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value_t = 100_000)]
    n_perm: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "both")]
    smoothed: DistanceKind,
    /// CSV with a subject column and numeric covariates
    #[arg(long)]
    covariates: Option<PathBuf>,
    #[arg(long)]
    diagnosis_col: Option<String>,
    #[arg(long, default_value_t = 0.05)]
    fdr_q: f64,
    /// Output path; `.csv` and `.json` files are written next to it
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimArgs {
    /// A, B or C
    design: String,
    /// 1a through 4c
    model: String,
    /// Cells per subject (designs A and B)
    #[arg(long)]
    cells: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    rounds: usize,
    #[arg(long, default_value_t = 1000)]
    n_perm: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Store wall-clock time in the JSON report (breaks byte stability)
    #[arg(long)]
    record_timing: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    design: String,
    model: String,
    #[arg(long)]
    cells: Option<usize>,
    #[arg(long, default_value_t = 1)]
    genes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Count table to write; `.tsv` selects tabs
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SignalArgs {
    model: String,
    #[arg(long, default_value_t = 2000)]
    mc_reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn run_fit(args: FitArgs) -> Result<()> {
    let mut table = ingest_counts(&args.counts, TableFormat::from_path(&args.counts))?;
    if let Some(gene) = &args.gene {
        table.retain(|g, _| g == gene);
        if table.is_empty() {
            bail!("gene {gene:?} not found");
        }
    }
    let cfg = RunConfig {
        b: args.bound.b,
        b_quantile: args.bound.b_quantile,
        b_factor: args.bound.b_factor,
        ..RunConfig::default()
    };
    cfg.validate()?;
    let solver = args.solver.config();
    let mut out = BTreeMap::new();
    for (gene, data) in &table {
        let bound = select_bound(&data.ratios().collect::<Vec<_>>(), &cfg)?;
        let mut fits = BTreeMap::new();
        for (subject, s) in data.subjects.iter().zip(data.samples(bound)?) {
            fits.insert(subject.clone(), fit(&s, &solver)?);
        }
        out.insert(gene.clone(), fits);
    }
    emit_json(&out, args.out.as_deref())
}

#[derive(Serialize)]
struct W1Report {
    mixing: Option<f64>,
    mixture: Option<f64>,
    mixture_error_bound: Option<f64>,
}

fn read_measure(path: &Path) -> Result<DiscreteMeasure> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let raw: DiscreteMeasure = serde_json::from_str(&text)?;
    Ok(DiscreteMeasure::new(raw.support().to_vec(), raw.weights().to_vec(), raw.bound())?)
}

fn run_w1(args: W1Args) -> Result<()> {
    let a = read_measure(&args.first)?;
    let b = read_measure(&args.second)?;
    let mut report = W1Report {
        mixing: None,
        mixture: None,
        mixture_error_bound: None,
    };
    if args.smoothed != DistanceKind::Mixture {
        report.mixing = Some(w1_measures(&a, &b));
    }
    if args.smoothed != DistanceKind::Mixing {
        let (v, err) = w1_pmfs_with_error(&poisson_smooth(&a, DEFAULT_TAIL_TOL)?, &poisson_smooth(&b, DEFAULT_TAIL_TOL)?);
        report.mixture = Some(v);
        report.mixture_error_bound = Some(err);
    }
    emit_json(&report, None)
}

fn run_test(args: TestArgs) -> Result<()> {
    let cfg = RunConfig {
        b: args.bound.b,
        b_quantile: args.bound.b_quantile,
        b_factor: args.bound.b_factor,
        b_per_gene: args.b_per_gene,
        solver: args.solver.config(),
        n_perm: args.n_perm,
        seed: args.seed,
        distances: args.smoothed,
        fdr_q: args.fdr_q,
        covariates_path: args.covariates,
        diagnosis_col: args.diagnosis_col,
        tail_tol: DEFAULT_TAIL_TOL,
    };
    let report = run_test_command(&cfg, &args.counts, &args.out)?;
    let failed = report.genes.iter().filter(|g| g.error.is_some()).count();
    log::info!("tested {} genes ({failed} failed)", report.genes.len());
    Ok(())
}

fn run_simulate(args: SimArgs) -> Result<()> {
    let sim = SimulateArgs {
        design: args.design,
        model: args.model,
        n_cells: args.cells,
        rounds: args.rounds,
        n_perm: args.n_perm,
        alpha: args.alpha,
        seed: args.seed,
        record_timing: args.record_timing,
    };
    let report = run_simulate_command(&sim, &args.out)?;
    log::info!(
        "rejection rates: mixing {:.3}, smoothed {:.3} ({} failed rounds)",
        report.rejection_rate_mixing,
        report.rejection_rate_smoothed,
        report.failed_rounds
    );
    Ok(())
}

fn run_generate(args: GenerateArgs) -> Result<()> {
    let design = DesignSpec::from_id(&args.design, args.cells)?;
    let (m0, m1) = model_pair(&args.model)?;
    if args.genes == 0 {
        bail!("--genes must be at least 1");
    }
    let width = args.genes.to_string().len();
    let mut table = CountTable::new();
    for k in 0..args.genes {
        let data = generate_dataset(&design, &m0, &m1, child_seed(args.seed, k as u64, 7))?;
        table.extend(dataset_table(&format!("gene{k:0width$}"), &data));
    }
    emit_counts(&args.out, &table, TableFormat::from_path(&args.out))?;
    Ok(())
}

fn run_signal(args: SignalArgs) -> Result<()> {
    let (m0, m1) = model_pair(&args.model)?;
    emit_json(&signal_strength(&m0, &m1, args.mc_reps, args.seed)?, args.out.as_deref())
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    match std::env::var("POISMIX_THREADS") {
        Ok(v) => Ok(Some(v.trim().parse().with_context(|| format!("POISMIX_THREADS={v:?}"))?)),
        Err(_) => Ok(flag),
    }
}

fn main() {
    env_logger::Builder::from_env(Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = thread_count(cli.threads).and_then(|threads| {
        if let Some(n) = threads.filter(|&n| n > 0) {
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
        }
        match cli.command {
            Command::Fit(a) => run_fit(a),
            Command::W1(a) => run_w1(a),
            Command::Test(a) => run_test(a),
            Command::Simulate(a) => run_simulate(a),
            Command::Generate(a) => run_generate(a),
            Command::Signal(a) => run_signal(a),
        }
    });
    if let Err(err) = result {
        log::error!("{err:#}");
        std::process::exit(1);
    }
}
