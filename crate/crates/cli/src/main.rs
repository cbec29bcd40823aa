use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use postsel_cli::config::{self, ConfigError, Experiment, ExperimentConfig};
use postsel_cli::experiments::resolve_output;
use postsel_cli::{execute, EXIT_CONFIG};

/// Postselected Lindblad dynamics experiments.
#[derive(Parser)]
#[command(name = "postsel", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Purity and excited population of the atom for several efficiencies.
    AtomPurity(RunArgs),
    /// Atom population from NLME, QT1 and QT2.
    AtomMethodCompare(RunArgs),
    /// NLME against the reduced LME on the monitored chain.
    TrivialChain(RunArgs),
    /// Steady occupation profile and tanh fit of the skin chain.
    SkinSteadyState(RunArgs),
    /// Steady β for several γ and the fit β = kγ.
    BetaScan(RunArgs),
    /// Trajectory-averaged entropy against interval length and chain size.
    EntropyScan(RunArgs),
    /// Parse and range-check a config without running it.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct Overrides {
    /// Override any config key.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    eta: Option<String>,
    /// Chain length.
    #[arg(short = 'L', long = "sites")]
    sites: Option<String>,
    #[arg(long)]
    dt: Option<String>,
    /// Time horizon.
    #[arg(short = 'T', long = "horizon")]
    horizon: Option<String>,
    #[arg(long)]
    n_traj: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    threads: Option<String>,
    /// Output directory.
    #[arg(short, long)]
    output: Option<String>,
}

impl Overrides {
    fn assignments(&self) -> Vec<String> {
        let mut out = Vec::new();
        let flags = [
            ("model.gamma", &self.gamma),
            ("model.eta", &self.eta),
            ("model.L", &self.sites),
            ("run.dt", &self.dt),
            ("run.T", &self.horizon),
            ("run.n_traj", &self.n_traj),
            ("run.master_seed", &self.seed),
            ("run.threads", &self.threads),
            ("output.dir", &self.output),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                out.push(format!("{key}={v}"));
            }
        }
        out.extend(self.set.iter().cloned());
        out
    }
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file.
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
    /// Root for relative output directories.
    #[arg(long, env = "POSTSEL_OUTPUT_ROOT")]
    output_root: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    config: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

fn report_errors(errors: &[ConfigError]) -> ExitCode {
    for e in errors {
        eprintln!("error: {e}");
    }
    ExitCode::from(EXIT_CONFIG)
}

fn load(
    path: Option<&PathBuf>,
    overrides: &Overrides,
    implied: Option<Experiment>,
) -> Result<ExperimentConfig, Vec<ConfigError>> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| {
            vec![ConfigError {
                origin: None,
                message: format!("cannot read {}: {e}", p.display()),
            }]
        })?,
        None => String::new(),
    };
    config::load(&text, &overrides.assignments(), implied)
}

fn run(experiment: Experiment, args: RunArgs) -> ExitCode {
    let cfg = match load(args.config.as_ref(), &args.overrides, Some(experiment)) {
        Ok(c) => c,
        Err(e) => return report_errors(&e),
    };
    if cfg.run.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.run.threads)
            .build_global()
        {
            log::warn!("thread pool: {e}");
        }
    }
    let dir = resolve_output(&cfg.output_dir, args.output_root.as_deref());
    let (manifest, code) = execute(&cfg, &dir);
    match &manifest.error {
        Some(e) => eprintln!("error: {e}"),
        None => {
            for v in &manifest.invariant_violations {
                eprintln!("invariant violation: {v}");
            }
            println!(
                "{}: wrote {} files to {} in {:.1}s",
                manifest.experiment,
                manifest.outputs.len() + 1,
                dir.display(),
                manifest.wall_clock_seconds
            );
        }
    }
    ExitCode::from(code)
}

fn validate(args: ValidateArgs) -> ExitCode {
    match load(Some(&args.config), &args.overrides, None) {
        Ok(cfg) => {
            print!("{}", cfg.echo());
            ExitCode::SUCCESS
        }
        Err(e) => report_errors(&e),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let experiment = match cli.command {
        Command::Validate(args) => return validate(args),
        Command::AtomPurity(a) => (Experiment::AtomPurity, a),
        Command::AtomMethodCompare(a) => (Experiment::AtomMethodCompare, a),
        Command::TrivialChain(a) => (Experiment::TrivialChain, a),
        Command::SkinSteadyState(a) => (Experiment::SkinSteadyState, a),
        Command::BetaScan(a) => (Experiment::BetaScan, a),
        Command::EntropyScan(a) => (Experiment::EntropyScan, a),
    };
    run(experiment.0, experiment.1)
}
