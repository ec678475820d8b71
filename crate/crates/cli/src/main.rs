use clap::{Args, Parser, Subcommand, ValueEnum};
use parallel_mcmc::targets::{LohModel, LohParameters};
use pmcmc_cli::config::{ConfigError, Design, ExperimentConfig};
use pmcmc_cli::pipeline::{self, Layout, Pipeline, StageError};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "pmcmc", version, about = "Parallel MCMC by partitioned recombination")]
struct Cli {
    /// Experiment config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; overrides the config.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Validate the config and print the stage plan without sampling.
    #[arg(long, global = true)]
    dry_run: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the whole pipeline (the default).
    Run,
    /// Write a simulated data set.
    Simulate(SimulateArgs),
    /// Run one stage on files from an earlier run.
    Stage(StageArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SimModel {
    ProbitSingle,
    ProbitMulti,
    Loh,
}

#[derive(Args)]
struct SimulateArgs {
    model: SimModel,
    /// Number of observations.
    #[arg(long)]
    n: usize,
    /// Output CSV.
    #[arg(long)]
    output: PathBuf,
    /// Probit coefficients, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    beta: Option<Vec<f64>>,
    /// LOH parameters `eta,pi1,pi2,gamma`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    loh: Option<Vec<f64>>,
    /// LOH sample size per observation.
    #[arg(long, default_value_t = 50)]
    trials: u32,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StageName {
    Partition,
    Weights,
    Combine,
    Diagnose,
}

#[derive(Args)]
struct StageArgs {
    stage: StageName,
    /// Directory of chain CSVs (default: `<out>/draws`).
    #[arg(long)]
    draws: Option<PathBuf>,
    /// Partition JSON (default: `<out>/partition.json`).
    #[arg(long)]
    partition: Option<PathBuf>,
    /// Weights JSON (default: `<out>/weights.json`).
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Reference CSV; drawn afresh when absent.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Cluster only the first this-many post-burn-in draws of each chain.
    #[arg(long)]
    prefix: Option<usize>,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Stage(#[from] StageError),
    #[error("simulate failed: {0}")]
    Simulate(String),
}

const SINGLE_BETA: f64 = 3.535_533_905_932_737_6; // 5 / sqrt(2)
const MULTI_BETA: [f64; 8] = [0.25, 5.0, 1.0, -1.5, -0.1, 0.0, 0.0, 0.0];

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command.as_ref().unwrap_or(&Command::Run) {
        Command::Simulate(args) => simulate(args, cli.seed.unwrap_or(1)),
        Command::Run => {
            let (cfg, layout) = load(&cli)?;
            let p = Pipeline::new(cfg)?;
            if cli.dry_run {
                print_plan(&p, &layout);
                return Ok(());
            }
            p.run(&layout)?;
            println!("wrote {}", layout.root.display());
            Ok(())
        }
        Command::Stage(args) => {
            let (cfg, layout) = load(&cli)?;
            let p = Pipeline::new(cfg)?;
            if cli.dry_run {
                print_plan(&p, &layout);
                return Ok(());
            }
            stage(&p, &layout, args)
        }
    }
}

fn load(cli: &Cli) -> Result<(ExperimentConfig, Layout), CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| ConfigError::Invalid("--config is required".into()))?;
    let mut cfg = ExperimentConfig::from_path(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(o) = &cli.out {
        cfg.out = Some(o.clone());
    }
    cfg.validate()?;
    let root = cfg.out.clone().unwrap_or_else(|| Path::new("out").join(&cfg.name));
    Ok((cfg, Layout::new(root)))
}

fn print_plan(p: &Pipeline, layout: &Layout) {
    for line in p.plan() {
        println!("{line}");
    }
    println!("output: {}", layout.root.display());
}

fn stage(p: &Pipeline, layout: &Layout, args: &StageArgs) -> Result<(), CliError> {
    let draws = pipeline::read_draws(&args.draws.clone().unwrap_or_else(|| layout.draws()))?;
    if args.stage == StageName::Partition {
        let part = p.partition(&draws, args.prefix)?;
        pipeline::write_partition(&part, layout)?;
        println!("wrote {}", layout.partition().display());
        return Ok(());
    }
    let part = pipeline::read_partition(&args.partition.clone().unwrap_or_else(|| layout.partition()))?;
    if args.stage == StageName::Weights {
        let w = p.weights(&draws, &part)?;
        pipeline::write_weights(&w, layout)?;
        println!("wrote {}", layout.weights().display());
        return Ok(());
    }
    let weights = pipeline::read_weights(&args.weights.clone().unwrap_or_else(|| layout.weights()))?;
    if args.stage == StageName::Combine {
        let r = p.combine(&draws, &part, &weights)?;
        pipeline::write_report(&r, layout)?;
        println!("wrote {}", layout.report().display());
        return Ok(());
    }
    let reference = match &args.reference {
        Some(path) => pipeline::read_reference(path)?,
        None => {
            let r = p.reference()?;
            pipeline::write_reference(&r, layout)?;
            r
        }
    };
    let d = p.diagnose(&draws, &part, &weights, &reference)?;
    pipeline::write_diagnosis(&d, layout)?;
    println!("wrote {}", layout.diagnostics().display());
    Ok(())
}

fn simulate(args: &SimulateArgs, seed: u64) -> Result<(), CliError> {
    let err = |e: parallel_mcmc::Error| CliError::Simulate(e.to_string());
    let file = std::fs::File::create(&args.output)
        .map_err(|e| CliError::Simulate(format!("{}: {e}", args.output.display())))?;
    let w = std::io::BufWriter::new(file);
    match args.model {
        SimModel::ProbitSingle | SimModel::ProbitMulti => {
            let (design, default) = match args.model {
                SimModel::ProbitSingle => (Design::Single, vec![SINGLE_BETA]),
                _ => (Design::Multi, MULTI_BETA.to_vec()),
            };
            let beta = args.beta.clone().unwrap_or(default);
            let data = pipeline::simulate_probit(design, args.n, &beta, seed).map_err(err)?;
            data.write_csv(w).map_err(err)?;
        }
        SimModel::Loh => {
            let v = args
                .loh
                .clone()
                .ok_or_else(|| CliError::Simulate("--loh eta,pi1,pi2,gamma is required".into()))?;
            if v.len() != 4 {
                return Err(CliError::Simulate("--loh takes four values".into()));
            }
            let params = LohParameters {
                eta: v[0],
                pi1: v[1],
                pi2: v[2],
                gamma: v[3],
            };
            if args.n == 0 {
                write_header(w, "x,n")?;
            } else {
                let sizes = vec![args.trials; args.n];
                LohModel::simulate(params, &sizes, seed).map_err(err)?.write_csv(w).map_err(err)?;
            }
        }
    }
    println!("wrote {}", args.output.display());
    Ok(())
}

fn write_header(mut w: impl std::io::Write, header: &str) -> Result<(), CliError> {
    writeln!(w, "{header}")
        .and_then(|_| w.flush())
        .map_err(|e| CliError::Simulate(e.to_string()))
}
