use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fqw::config::{load_config, ExperimentConfig};
use fqw::{acceptance, run, Failure};

#[derive(Parser)]
#[command(name = "fqw", version, about = "Fermionic quantum walks coupled to a bosonic reservoir")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate an observable over a grid of times and coupling strengths.
    Propagate(Common),
    /// Peripheral spectrum of the pinched walk and the spectral assumptions.
    Spectral(Common),
    /// Convergence of a state to its long-time limit.
    Converge(Common),
    /// Haar sampling study of minors and assumptions.
    Genericity(Common),
    /// Run the acceptance criteria.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct Common {
    /// TOML experiment file; layered on top of --preset when both are given.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    /// Overrides the master seed of the configuration.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// Criteria to run, all when omitted.
    #[arg(long, value_delimiter = ',')]
    only: Vec<usize>,
    #[arg(long)]
    threads: Option<usize>,
}

fn init_threads(threads: Option<usize>) -> fqw::Result<()> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(fqw_core::error::Error::Config("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Io(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn load(c: &Common) -> fqw::Result<ExperimentConfig> {
    init_threads(c.threads)?;
    let mut cfg = load_config(c.config.as_deref(), c.preset.as_deref())?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: Cli) -> fqw::Result<String> {
    match cli.command {
        Command::Propagate(c) => run::run_propagate(&load(&c)?, &c.out),
        Command::Spectral(c) => run::run_spectral(&load(&c)?, &c.out),
        Command::Converge(c) => run::run_converge(&load(&c)?, &c.out),
        Command::Genericity(c) => run::run_genericity(&load(&c)?, &c.out),
        Command::Verify(v) => {
            init_threads(v.threads)?;
            let exe = std::env::current_exe().map_err(|e| Failure::Io(e.to_string()))?;
            let reports = acceptance::run_selected(&v.only, &exe);
            for r in &reports {
                println!("{r}");
            }
            let failed: Vec<usize> = reports.iter().filter(|r| !r.passed).map(|r| r.id).collect();
            if failed.is_empty() {
                Ok(format!("all {} criteria passed", reports.len()))
            } else {
                Err(Failure::Acceptance(failed))
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
