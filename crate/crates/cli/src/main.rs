//! `scalelaw` command-line entry point.

mod commands;
mod config;
mod error;
mod plot;

use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};

use commands::Ctx;
use config::RunConfig;
use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "scalelaw", version, about = "Measure, fit and apply per-point data scaling laws")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: Global,
}

#[derive(Debug, Args)]
struct Global {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Sample store; defaults to `<out>/store.bin`.
    #[arg(long, global = true)]
    store: Option<PathBuf>,
    /// Fits file (JSON lines); defaults to the first configured method's fits under `--out`.
    #[arg(long, global = true)]
    fits: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker thread cap.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a contribution campaign and write the sample store.
    Sample,
    /// Fit per-point scaling laws to a store.
    Fit,
    /// Train the amortized estimator on a store.
    Amortize,
    /// Distributional Shapley values from fits and the store.
    Value,
    /// Top points by predicted contribution at each target size.
    Select,
    /// Accuracy change from adding selected points to random preceding sets.
    AddEval,
    /// Numeric checks of the asymptotic contribution formulas.
    Verify {
        #[command(subcommand)]
        check: Check,
    },
    /// Summarize every output under `--out` as Markdown.
    Report,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Check {
    Theorem1,
    Theorem2,
    AlphaRate,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Sample => "sample",
            Command::Fit => "fit",
            Command::Amortize => "amortize",
            Command::Value => "value",
            Command::Select => "select",
            Command::AddEval => "add-eval",
            Command::Verify { check: Check::Theorem1 } => "verify theorem1",
            Command::Verify { check: Check::Theorem2 } => "verify theorem2",
            Command::Verify { check: Check::AlphaRate } => "verify alpha-rate",
            Command::Report => "report",
        }
    }

    /// Verification of the closed-form checks runs on defaults without a config.
    fn config_optional(&self) -> bool {
        matches!(self, Command::Verify { .. } | Command::Report)
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    let g = &cli.global;
    let config = match &g.config {
        Some(path) => {
            let mut cfg = RunConfig::load(path)?;
            if let Some(seed) = g.seed {
                cfg.seed = seed;
            }
            if g.workers.is_some() {
                cfg.workers = g.workers;
            }
            Some(cfg)
        }
        None if cli.command.config_optional() => None,
        None => return Err(CliError::Config("--config is required".into())),
    };
    let workers = config.as_ref().and_then(|c| c.workers).or(g.workers);
    if workers == Some(0) {
        return Err(CliError::Config("workers: must be at least 1".into()));
    }
    if let Some(n) = workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("workers: {e}")))?;
    }
    std::fs::create_dir_all(&g.out)?;
    let ctx = Ctx { config, out: g.out.clone(), store: g.store.clone(), fits: g.fits.clone(), seed: g.seed };
    match cli.command {
        Command::Sample => commands::sample(&ctx),
        Command::Fit => commands::fit(&ctx),
        Command::Amortize => commands::amortize(&ctx),
        Command::Value => commands::value(&ctx),
        Command::Select => commands::select(&ctx),
        Command::AddEval => commands::add_eval(&ctx),
        Command::Verify { check: Check::Theorem1 } => commands::verify_theorem1(&ctx),
        Command::Verify { check: Check::Theorem2 } => commands::verify_theorem2(&ctx),
        Command::Verify { check: Check::AlphaRate } => commands::verify_alpha_rate(&ctx),
        Command::Report => commands::report(&ctx),
    }
}

/// Timestamps go to a sidecar log so the outputs themselves stay reproducible.
fn log_run(cli: &Cli, code: i32) {
    let Ok(()) = std::fs::create_dir_all(&cli.global.out) else { return };
    let ts = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let line = format!("{ts}\t{}\texit={code}\n", cli.command.name());
    if let Ok(mut f) =
        std::fs::OpenOptions::new().create(true).append(true).open(cli.global.out.join(commands::files::LOG))
    {
        let _ = f.write_all(line.as_bytes());
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    log_run(&cli, code);
    ExitCode::from(code as u8)
}
