use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use frg_flow::compare::compare;
use frg_flow::config::{Config, Experiment};
use frg_flow::error::{CliError, CliResult, EXIT_OK};

#[derive(Parser)]
#[command(name = "frg-flow", version, about = "GP-collocated functional renormalization group flows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Gaussian Wilson-Polchinski benchmark.
    WpGaussian(RunArgs),
    /// Gaussian Wetterich benchmark.
    WetterichGaussian(RunArgs),
    /// Continuum φ⁴ against the LPA reference.
    Phi4Continuum(RunArgs),
    /// Lattice φ⁴: LPA, GP and transfer matrix.
    Phi4Lattice(RunArgs),
    /// Lattice LPA flow only.
    Lpa(RunArgs),
    /// Transfer-matrix magnetization and susceptibility.
    TransferMatrix(RunArgs),
    /// LPA and transfer-matrix observables.
    Observables(RunArgs),
    /// Joins the artifacts of several runs of one experiment.
    Compare(CompareArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML config (JSON when the extension is .json); defaults otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: out/<experiment>].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write SVG plots.
    #[arg(long)]
    plots: bool,
    /// Worker threads [env: FRG_FLOW_THREADS].
    #[arg(long)]
    threads: Option<usize>,
    /// Print the resolved config and exit without running.
    #[arg(long)]
    dry_run: bool,
    /// Override a config entry, e.g. `--set wp.n=50`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct CompareArgs {
    /// Run directories; the first is the reference.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// Also write compare.json into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn threads(flag: Option<usize>) -> CliResult<Option<usize>> {
    if let Some(k) = flag {
        return Ok(Some(k));
    }
    match std::env::var("FRG_FLOW_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Validation(format!("FRG_FLOW_THREADS: not a thread count: {v}"))),
        Err(_) => Ok(None),
    }
}

fn run(experiment: Experiment, args: RunArgs) -> CliResult<()> {
    let mut config = match &args.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    for o in &args.overrides {
        config.set(o)?;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.validate(experiment)?;
    if args.dry_run {
        print!("{}", config.to_toml());
        return Ok(());
    }
    if let Some(k) = threads(args.threads)? {
        if k == 0 {
            return Err(CliError::Validation("--threads: must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Validation(format!("--threads: {e}")))?;
    }
    let out = args.out.unwrap_or_else(|| PathBuf::from("out").join(experiment.name()));
    let summary = frg_flow::execute(experiment, &config, &out, args.plots)?;
    println!("{}", serde_json::to_string_pretty(&summary["results"]).unwrap());
    eprintln!("artifacts written to {}", out.display());
    Ok(())
}

fn compare_runs(args: CompareArgs) -> CliResult<()> {
    let c = compare(&args.runs)?;
    print!("{}", c.report());
    for w in &c.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(out) = args.out {
        std::fs::create_dir_all(&out)?;
        std::fs::write(out.join("compare.json"), serde_json::to_string_pretty(&c.to_json()).unwrap() + "\n")?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::WpGaussian(a) => run(Experiment::WpGaussian, a),
        Command::WetterichGaussian(a) => run(Experiment::WetterichGaussian, a),
        Command::Phi4Continuum(a) => run(Experiment::Phi4Continuum, a),
        Command::Phi4Lattice(a) => run(Experiment::Phi4Lattice, a),
        Command::Lpa(a) => run(Experiment::Lpa, a),
        Command::TransferMatrix(a) => run(Experiment::TransferMatrix, a),
        Command::Observables(a) => run(Experiment::Observables, a),
        Command::Compare(a) => compare_runs(a),
    };
    match result {
        Ok(()) => ExitCode::from(EXIT_OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
