//! Command-line entry points.
//!
//! Subcommands: `run` (single experiment), `sweep` (alpha x mechanism x
//! seed grid with an on-disk cache), `report` (CSV/SVG from a cache
//! directory), `validate-config`. Flags always override config-file values.
//! Exit codes: 0 success, 1 configuration error, 2 runtime error; every
//! error prints one `error[E-...]:` line.

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::config::{self, ExperimentConfig};
use crate::engine::{self, sweep};
use crate::error::{FaflError, Result};
use crate::fairness::MechanismKind;
use crate::report;

#[derive(Parser, Debug)]
#[command(name = "fafl", version, about = "Fairness-aware federated learning simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Run a single experiment and write its per-round metrics CSV.
    Run(RunArgs),
    /// Run an alpha x mechanism x seed sweep into a cache directory.
    Sweep(SweepArgs),
    /// Summarize a sweep cache directory into CSV and/or SVG panels.
    Report(ReportArgs),
    /// Parse and validate a config file, printing the resolved config.
    ValidateConfig(ValidateArgs),
}

#[derive(Args, Debug)]
struct CommonOverrides {
    /// Config file (flat key = value format); defaults apply when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Aggregation mechanism (fedavg|ltf|reputation|bgl|afl|incentive).
    #[arg(long)]
    mechanism: Option<String>,
    /// Non-IID fraction in [0,1].
    #[arg(long)]
    alpha: Option<f64>,
    /// Restricted unique labels per client (max_labels).
    #[arg(long = "noniid-classes")]
    noniid_classes: Option<usize>,
    /// Federated rounds.
    #[arg(long)]
    rounds: Option<usize>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of label-flipping adversarial clients.
    #[arg(long)]
    adversaries: Option<usize>,
    /// Disable AES-GCM sealing of client/server messages.
    #[arg(long = "no-encrypt", default_value_t = false)]
    no_encrypt: bool,
    /// Worker threads for client legs (0 = library default).
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

impl CommonOverrides {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => config::parse_config(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(m) = &self.mechanism {
            cfg.mechanism = MechanismKind::from_str(m)?;
        }
        if let Some(a) = self.alpha {
            cfg.alpha = a;
        }
        if let Some(n) = self.noniid_classes {
            cfg.max_labels = n;
        }
        if let Some(r) = self.rounds {
            cfg.rounds = r;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(a) = self.adversaries {
            cfg.adversaries = a;
        }
        if self.no_encrypt {
            cfg.encrypt = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    common: CommonOverrides,
    /// Metrics CSV output path.
    #[arg(long, default_value = "metrics.csv")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonOverrides,
    /// Comma-separated alpha grid, e.g. 0.2,0.4,0.7.
    #[arg(long, default_value = "0.2,0.4,0.7")]
    alphas: String,
    /// Comma-separated mechanisms, e.g. fedavg,ltf,reputation.
    #[arg(long, default_value = "fedavg,ltf,reputation")]
    mechanisms: String,
    /// Comma-separated seeds.
    #[arg(long, default_value = "1,2,3")]
    seeds: String,
    /// Sweep cache directory (one JSON cell per config hash).
    #[arg(long = "out-dir", default_value = "sweep-cache")]
    out_dir: PathBuf,
    /// Reuse completed cells from the cache (always on; flag kept for
    /// explicit scripts).
    #[arg(long, default_value_t = true)]
    resume: bool,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Sweep cache directory to summarize.
    #[arg(long = "in-dir")]
    in_dir: PathBuf,
    /// Write the summary CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Write the accuracy panels SVG here.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[arg(long)]
    config: PathBuf,
}

fn parse_list<T: FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        out.push(
            part.parse::<T>()
                .map_err(|_| FaflError::Config(format!("invalid {what} value '{part}'")))?,
        );
    }
    if out.is_empty() {
        return Err(FaflError::Config(format!("empty {what} list")));
    }
    Ok(out)
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let cfg = args.common.resolve()?;
    let series = engine::run_experiment(&cfg, args.common.workers)?;
    std::fs::write(&args.out, report::metrics_to_csv(&series))?;
    println!(
        "run {}: scheme={} alpha={} seed={} final_accuracy={} total_bytes={} \
sim_latency_ms={} crypto_time_ms={} -> {}",
        series.config_hash,
        series.scheme,
        report::fmt_sig6(series.alpha),
        series.seed,
        report::fmt_sig6(series.final_accuracy()),
        series.total_bytes,
        report::fmt_sig6(series.total_sim_latency_ms),
        report::fmt_sig6(series.crypto_time_ms),
        args.out.display()
    );
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let base = args.common.resolve()?;
    let mechanisms: Vec<MechanismKind> = parse_list(&args.mechanisms, "mechanism")?;
    let alphas: Vec<f64> = parse_list(&args.alphas, "alpha")?;
    let seeds: Vec<u64> = parse_list(&args.seeds, "seed")?;
    let (cells, computed) = sweep::run_sweep(
        &base,
        &mechanisms,
        &alphas,
        &seeds,
        &args.out_dir,
        args.common.workers,
    )?;
    println!(
        "sweep complete: {} cells ({} computed, {} cached) in {}",
        cells.len(),
        computed,
        cells.len() - computed,
        args.out_dir.display()
    );
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> Result<()> {
    let cells = sweep::load_sweep_dir(&args.in_dir)?;
    if cells.is_empty() {
        return Err(FaflError::Report(format!(
            "no sweep cells found in {}",
            args.in_dir.display()
        )));
    }
    let summary = report::build_report(&cells);
    if let Some(path) = &args.csv {
        report::emit_csv(&summary, path)?;
        println!("report: {} rows -> {}", summary.rows.len(), path.display());
    }
    if let Some(path) = &args.svg {
        report::emit_panels(&cells, path)?;
        println!("panels -> {}", path.display());
    }
    if args.csv.is_none() && args.svg.is_none() {
        print!("{}", report::sweep_to_csv(&summary)?);
    }
    Ok(())
}

fn cmd_validate(args: &ValidateArgs) -> Result<()> {
    let cfg = config::parse_config(&args.config)?;
    cfg.validate()?;
    println!("config ok: hash {}", config::config_hash(&cfg));
    print!("{}", config::config_to_text(&cfg));
    Ok(())
}

/// Parse and execute; returns the process exit code. `args` excludes the
/// program name.
pub fn run_cli<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let argv = std::iter::once(std::ffi::OsString::from("fafl"))
        .chain(args.into_iter().map(Into::into));
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            // Unknown flags, missing values: usage text plus exit 1.
            eprint!("{e}");
            return 1;
        }
        Err(e) => {
            // --help / --version land on stdout with success.
            print!("{e}");
            return 0;
        }
    };

    let result = match &cli.cmd {
        Cmd::Run(args) => cmd_run(args),
        Cmd::Sweep(args) => cmd_sweep(args),
        Cmd::Report(args) => cmd_report(args),
        Cmd::ValidateConfig(args) => cmd_validate(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let code = e.exit_code();
            let tag = if code == 1 { "E-CONFIG" } else { "E-RUNTIME" };
            eprintln!("error[{tag}]: {e}");
            code
        }
    }
}
