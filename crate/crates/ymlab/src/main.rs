use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ymlab::harness::{self, Experiment, RunConfig, EXIT_ASSERTION, EXIT_CONFIG, EXIT_OK, WORKERS_ENV};
use ymlab::Error;

#[derive(Parser)]
#[command(name = "ymlab", version, about = "Cut-off Yang-Mills numerical laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads
    #[arg(long, global = true, env = WORKERS_ENV)]
    workers: Option<usize>,
    /// Output directory (overrides the config)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// d_G and the singular-fraction scan of M(Φ)
    MassScan,
    /// Quadratic-form nondegeneracy scan and free propagator check
    Propagator,
    /// Correlation estimates and decay fits over a (Λ, κ) ladder
    Correlate,
    /// Boson/fermion coefficients, ε ladder and bounds
    FermionCheck,
    /// Mollifier norm table
    MollifierCheck,
    /// Strong-coupling toy model
    ToyStrong,
}

impl Command {
    fn experiment(self) -> Experiment {
        match self {
            Command::MassScan => Experiment::MassScan,
            Command::Propagator => Experiment::Propagator,
            Command::Correlate => Experiment::Correlate,
            Command::FermionCheck => Experiment::FermionCheck,
            Command::MollifierCheck => Experiment::MollifierCheck,
            Command::ToyStrong => Experiment::ToyStrong,
        }
    }
}

fn config(cli: &Cli) -> Result<RunConfig, Error> {
    let exp = cli.command.experiment();
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::new(exp),
    };
    if cfg.experiment != exp {
        return Err(Error::Config(format!(
            "field `experiment`: config is for `{}`, command is `{}`",
            cfg.experiment.name(),
            exp.name()
        )));
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = Some(o.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match harness::execute(&cfg, cli.workers, None) {
        Ok((rec, paths)) => {
            for p in &paths {
                println!("wrote {}", p.display());
            }
            for a in &rec.assertions {
                println!("{} {} {}", if a.pass { "ok  " } else { "FAIL" }, a.name, a.detail);
            }
            println!("payload sha256 {}", rec.payload_hash);
            ExitCode::from(if rec.passed() { EXIT_OK } else { EXIT_ASSERTION })
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(harness::exit_code(&e))
        }
    }
}
