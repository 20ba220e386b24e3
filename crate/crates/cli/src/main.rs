//! `cascopt`: batch front end for the cascaded optomechanics library.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 numerical
//! failure, 1 anything else (I/O). On failure a JSON error record goes to
//! stderr and, when possible, to `error.json` in the output directory.

mod commands;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context as _, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use cascopt_core::config::Config;

use crate::commands::Context;
use crate::output::{sha256_hex, Outputs};

#[derive(Parser)]
#[command(name = "cascopt", version, about = "Cascaded optomechanics simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Worker thread cap.
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Mean-field trajectory and fixed point.
    Meanfield(Common),
    /// Full covariance trace with mutual information and discord.
    Covariance(Common),
    /// Reduced two-mirror model against the full model.
    Effective(Common),
    /// Temperature traces, thermalization times and detuning sweeps.
    Temperature(Common),
    /// Position and output spectra with Lorentzian fits.
    Spectra(Common),
    /// Self-oscillation power-balance maps.
    Stability(Common),
    /// Stationary photon-number branches over the detuning.
    Multistability(Common),
    /// Temperatures with unidirectional and bidirectional guides.
    BidirCompare(Common),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Meanfield(_) => "meanfield",
            Command::Covariance(_) => "covariance",
            Command::Effective(_) => "effective",
            Command::Temperature(_) => "temperature",
            Command::Spectra(_) => "spectra",
            Command::Stability(_) => "stability",
            Command::Multistability(_) => "multistability",
            Command::BidirCompare(_) => "bidir-compare",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Meanfield(c)
            | Command::Covariance(c)
            | Command::Effective(c)
            | Command::Temperature(c)
            | Command::Spectra(c)
            | Command::Stability(c)
            | Command::Multistability(c)
            | Command::BidirCompare(c) => c,
        }
    }
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    status: &'static str,
    subcommand: &'a str,
    exit_code: u8,
    kind: &'a str,
    message: String,
    payload: Option<&'a cascopt_core::Error>,
}

fn run(cmd: &Command) -> Result<()> {
    let started = Instant::now();
    let common = cmd.common();
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global().context("cannot size the thread pool")?;
    }
    let bytes = std::fs::read(&common.config).map_err(|e| cascopt_core::Error::Config(format!("{}: {e}", common.config.display())))?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| cascopt_core::Error::Config("configuration is not UTF-8".into()))?;
    let mut cfg = Config::from_toml_str(&text)?;
    if let Some(seed) = common.seed {
        cfg.run.seed = seed;
    }
    let phys = cfg.physical()?;
    let mut header = vec![format!("cascopt {}", env!("CARGO_PKG_VERSION")), format!("command={}", cmd.name()), "logarithm=natural".to_owned()];
    header.extend(cfg.header_lines()?);
    let mut out = Outputs::new(&common.out, header)?;
    out.text("config.resolved.toml", cfg.canonical_toml()?)?;
    let seed = cfg.run.seed;
    let mut ctx = Context { cfg, phys, seed, out };
    log::info!("running {} into {}", cmd.name(), common.out.display());
    match cmd {
        Command::Meanfield(_) => commands::meanfield(&mut ctx)?,
        Command::Covariance(_) => commands::covariance(&mut ctx)?,
        Command::Effective(_) => commands::effective(&mut ctx)?,
        Command::Temperature(_) => commands::temperature(&mut ctx)?,
        Command::Spectra(_) => commands::spectra(&mut ctx)?,
        Command::Stability(_) => commands::stability(&mut ctx)?,
        Command::Multistability(_) => commands::multistability(&mut ctx)?,
        Command::BidirCompare(_) => commands::bidir_compare(&mut ctx)?,
    }
    ctx.out.finish(cmd.name(), &common.config, &sha256_hex(&bytes), started)
}

fn report(cmd: &Command, err: &anyhow::Error) -> u8 {
    let core = err.chain().find_map(|e| e.downcast_ref::<cascopt_core::Error>());
    let (code, kind) = match core {
        Some(e) if e.is_config() => (2, e.kind()),
        Some(e) => (3, e.kind()),
        None => (1, "io"),
    };
    let record = ErrorRecord { status: "error", subcommand: cmd.name(), exit_code: code, kind, message: format!("{err:#}"), payload: core };
    let json = serde_json::to_string(&record).unwrap_or_else(|_| format!("{{\"status\":\"error\",\"exit_code\":{code}}}"));
    eprintln!("{json}");
    write_error_file(&cmd.common().out, &json);
    code
}

fn write_error_file(dir: &Path, json: &str) {
    if std::fs::create_dir_all(dir).is_ok() {
        let _ = std::fs::write(dir.join("error.json"), format!("{json}\n"));
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CASCOPT_LOG", "warn")).format_timestamp(None).init();
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => ExitCode::from(report(&cli.command, &e)),
    }
}
