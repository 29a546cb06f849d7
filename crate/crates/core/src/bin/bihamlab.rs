use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use bihamlab::cli::{self, RunConfig};

#[derive(Parser)]
#[command(
    name = "bihamlab",
    about = "Numerical laboratory for an integrable hierarchy of Hermitian matrix flows",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonFlags {
    /// Matrix size (2..=8)
    #[arg(long)]
    n: Option<usize>,
    /// Base RNG seed; trial i uses seed + i
    #[arg(long)]
    seed: Option<u64>,
    /// Number of random trials
    #[arg(long)]
    trials: Option<usize>,
    /// Hierarchy index m
    #[arg(long)]
    m: Option<u32>,
    /// Second hierarchy index
    #[arg(long)]
    l: Option<u32>,
    /// Integration time
    #[arg(long)]
    t: Option<f64>,
    /// RK4 step count
    #[arg(long)]
    steps: Option<usize>,
    /// Config file with key = value lines; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output path (default: standard output)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Emit machine-readable JSON lines instead of tables
    #[arg(long)]
    json: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run verification suites over random states
    Verify {
        #[command(flatten)]
        common: CommonFlags,
        /// Suite name, or "all"
        #[arg(long, default_value = "all")]
        suite: String,
        /// Override the tolerance of the selected suite
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Integrate one trajectory and export CSV
    Integrate {
        #[command(flatten)]
        common: CommonFlags,
    },
    /// Compare RK4 against the exact projection-method flow
    Oracle {
        #[command(flatten)]
        common: CommonFlags,
    },
    /// Time representative kernels
    Bench {
        #[command(flatten)]
        common: CommonFlags,
    },
}

fn build_config(common: &CommonFlags) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        cfg.apply_file(&text)?;
    }
    if let Some(n) = common.n {
        cfg.n = n;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = common.trials {
        cfg.trials = trials;
    }
    if let Some(m) = common.m {
        cfg.m = m;
    }
    if let Some(l) = common.l {
        cfg.ell = l;
    }
    if let Some(t) = common.t {
        cfg.t = t;
    }
    if let Some(steps) = common.steps {
        cfg.steps = steps;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn open_out(common: &CommonFlags) -> Result<Box<dyn Write>> {
    Ok(match &common.out {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).with_context(|| format!("creating {}", path.display()))?,
        )),
        None => Box::new(std::io::stdout()),
    })
}

fn run() -> Result<bool> {
    cli::init_thread_pool();
    let args = Cli::parse();
    match args.command {
        Command::Verify { common, suite, tol } => {
            let mut cfg = build_config(&common)?;
            if let Some(tol) = tol {
                if suite == "all" {
                    for (name, _) in cli::SUITES {
                        cfg.tolerances.insert((*name).to_string(), tol);
                    }
                } else {
                    cfg.tolerances.insert(suite.clone(), tol);
                }
                cfg.validate()?;
            }
            let mut out = open_out(&common)?;
            Ok(cli::cmd_verify(&cfg, &suite, &mut out, common.json)?)
        }
        Command::Integrate { common } => {
            let cfg = build_config(&common)?;
            let mut out = open_out(&common)?;
            cli::cmd_integrate(&cfg, &mut out)?;
            Ok(true)
        }
        Command::Oracle { common } => {
            let cfg = build_config(&common)?;
            let mut out = open_out(&common)?;
            cli::cmd_oracle(&cfg, &mut out, common.json)?;
            Ok(true)
        }
        Command::Bench { common } => {
            let cfg = build_config(&common)?;
            let mut out = open_out(&common)?;
            cli::cmd_bench(&cfg, &mut out)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
