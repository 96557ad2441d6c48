use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ssp_po::env::{generate_instance, EnvSpec, Generator};
use ssp_po::error::SspError;
use ssp_po::harness::run::curves_from_csv;
use ssp_po::harness::verify::{run_suite, write_results, Scale};
use ssp_po::harness::{plot::render_regret_svg, run_experiment, ExperimentConfig};
use ssp_po::po::Setting;
use ssp_po::ssp::{key_params, InstanceDocument};

#[derive(Parser)]
#[command(name = "ssp-po", version, about = "Policy optimization experiments on stochastic shortest path problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write episodes.csv, summary.csv and regret.svg.
    Run(RunArgs),
    /// Redraw regret.svg from an existing episodes.csv.
    Plot(PlotArgs),
    /// Run invariant suites and write verify.csv.
    Verify(VerifyArgs),
    /// Generate an instance and print it as JSON.
    GenInstance(GenArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Learner seed; repeat to run several. Replaces the seeds of the config.
    #[arg(long)]
    seed: Vec<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    setting: Option<Setting>,
    #[arg(long)]
    episodes: Option<usize>,
    /// `key=value`, applied after the config file; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct PlotArgs {
    /// Directory holding episodes.csv.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value = "regret")]
    title: String,
}

#[derive(Args)]
struct VerifyArgs {
    /// Suite name, or `all`.
    #[arg(default_value = "all")]
    suite: String,
    /// Smaller problem sizes.
    #[arg(long)]
    quick: bool,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct GenArgs {
    /// Take the environment from an experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    states: usize,
    #[arg(long, default_value_t = 2)]
    actions: usize,
    #[arg(long, default_value_t = 0.05)]
    p_goal: f64,
    #[arg(long, default_value_t = 0.0)]
    c_min: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(e: &SspError) -> ExitCode {
    match e {
        SspError::Config(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn run(args: RunArgs) -> Result<bool, SspError> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if !args.seed.is_empty() {
        config.seeds = args.seed;
    }
    if let Some(s) = args.setting {
        config.setting = s;
    }
    if let Some(k) = args.episodes {
        config.episodes = k;
    }
    for o in &args.overrides {
        config.apply_override(o)?;
    }
    config.validate()?;
    let dir = args
        .out_dir
        .or_else(|| config.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let report = run_experiment(&config)?;
    report.write(&dir)?;
    let mean = report.mean_regret();
    if let Some(last) = mean.last() {
        println!(
            "{} [{}]: {} seed(s), mean R_K = {last:.3}, R_K/K = {:.4} -> {}",
            config.setting,
            report.config_hash,
            report.runs.len(),
            last / mean.len() as f64,
            dir.display()
        );
    }
    for r in report.runs.iter().filter(|r| r.error.is_some()) {
        eprintln!("seed {}: {}", r.seed, r.error.as_deref().unwrap_or_default());
    }
    Ok(!report.failed())
}

fn plot(args: PlotArgs) -> Result<bool, SspError> {
    let text = std::fs::read_to_string(args.out_dir.join("episodes.csv"))?;
    let curves = curves_from_csv(&text)?;
    if curves.is_empty() {
        return Err(SspError::Parse("episodes.csv has no rows".into()));
    }
    std::fs::write(args.out_dir.join("regret.svg"), render_regret_svg(&curves, &args.title))?;
    Ok(true)
}

fn verify(args: VerifyArgs) -> Result<bool, SspError> {
    let scale = if args.quick { Scale::Quick } else { Scale::Full };
    let results = run_suite(&args.suite, scale)?;
    std::fs::create_dir_all(&args.out_dir)?;
    write_results(&results, &args.out_dir.join("verify.csv"))?;
    for r in &results {
        println!(
            "{} {}/{}: observed {} limit {} ({})",
            if r.passed { "PASS" } else { "FAIL" },
            r.suite,
            r.check,
            r.observed,
            r.limit,
            r.detail
        );
    }
    Ok(results.iter().all(|r| r.passed))
}

fn gen_instance(args: GenArgs) -> Result<bool, SspError> {
    let spec = match &args.config {
        Some(path) => ExperimentConfig::load(path)?.env,
        None => EnvSpec {
            generator: Generator::RandomSsp { num_states: args.states, num_actions: args.actions, p_goal: args.p_goal },
            costs: Default::default(),
            c_min: args.c_min,
            seed: args.seed,
        },
    };
    let (inst, cost) = generate_instance(&spec)?;
    let kp = key_params(&inst, &cost)?;
    eprintln!("B* = {:.4}, T* = {:.4}, Tmax = {:.4}, D = {:.4}", kp.b_star, kp.t_star, kp.t_max, kp.diameter);
    let json = InstanceDocument::from_parts(&inst, &cost).to_json();
    match args.out {
        Some(path) => std::fs::write(path, json + "\n")?,
        None => println!("{json}"),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => run(a),
        Command::Plot(a) => plot(a),
        Command::Verify(a) => verify(a),
        Command::GenInstance(a) => gen_instance(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
