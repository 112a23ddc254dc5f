use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use sumstat::sumcore::SumError;
use sumstat_cli::run::{self, RunError};
use sumstat_cli::{exit, parse_config, ConfigError, OracleKind, ScenarioConfig, DIGITS_ENV};

#[derive(Parser)]
#[command(name = "sumstat", version, about = "Exact PDF/CDF of sums of fading envelopes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the sum density (full curve CSV).
    Pdf(CurveArgs),
    /// Evaluate the sum CDF (full curve CSV).
    Cdf(CurveArgs),
    /// Compare the series against Monte Carlo and/or grid convolution.
    Validate(ValidateArgs),
    /// Report the selected term count and certified ranges.
    Terms(TermsArgs),
}

#[derive(Args)]
struct CurveArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleArg {
    Mc,
    Brennan,
    Both,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Defaults to the config's `oracle` field.
    #[arg(long, value_enum)]
    oracle: Option<OracleArg>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output JSON report; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TermsArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    xmax: Option<f64>,
}

/// An error that already knows its exit status.
#[derive(Debug)]
struct Exit(i32);

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "exit status {}", self.0)
    }
}

impl std::error::Error for Exit {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(classify(&e) as u8)
        }
    }
}

fn classify(e: &anyhow::Error) -> i32 {
    for cause in e.chain() {
        if let Some(Exit(code)) = cause.downcast_ref::<Exit>() {
            return *code;
        }
        if cause.downcast_ref::<ConfigError>().is_some() {
            return exit::INPUT_ERROR;
        }
        if let Some(r) = cause.downcast_ref::<RunError>() {
            return match r {
                RunError::Sum(SumError::DomainTooWide { .. }) => exit::UNCERTIFIED,
                RunError::NoSampler { .. } | RunError::TooManyForBrennan { .. } | RunError::NoOracle => {
                    exit::INPUT_ERROR
                }
                _ => exit::VALIDATION_FAILED,
            };
        }
        if let Some(SumError::DomainTooWide { .. }) = cause.downcast_ref::<SumError>() {
            return exit::UNCERTIFIED;
        }
    }
    exit::INPUT_ERROR
}

fn load(path: &Path) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(|e| e.context(Exit(exit::INPUT_ERROR)))?;
    parse_config(&text).with_context(|| format!("parsing {}", path.display()))
}

fn digits_override() -> Result<Option<u32>> {
    match std::env::var(DIGITS_ENV) {
        Ok(v) => {
            let d = v
                .trim()
                .parse::<u32>()
                .with_context(|| format!("{DIGITS_ENV}={v} is not a digit count"))
                .map_err(|e| e.context(Exit(exit::INPUT_ERROR)))?;
            Ok(Some(d))
        }
        Err(_) => Ok(None),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn dispatch(cmd: Command) -> Result<i32> {
    let digits = digits_override()?;
    match cmd {
        Command::Pdf(a) | Command::Cdf(a) => {
            let cfg = load(&a.config)?;
            let curve = run::run_evaluate(&cfg, digits)?;
            let mut out = output(a.out.as_deref())?;
            run::write_csv(&curve.rows, &mut out)?;
            out.flush()?;
            let uncertified = curve.rows.iter().filter(|r| !r.certified).count();
            eprintln!(
                "t0 = {}, {} digits, {} of {} rows certified",
                curve.t0,
                curve.digits,
                curve.rows.len() - uncertified,
                curve.rows.len()
            );
            Ok(if uncertified == 0 { exit::OK } else { exit::UNCERTIFIED })
        }
        Command::Validate(a) => {
            let cfg = load(&a.config)?;
            let oracle = match a.oracle {
                Some(OracleArg::Mc) => OracleKind::Mc,
                Some(OracleArg::Brennan) => OracleKind::Brennan,
                Some(OracleArg::Both) => OracleKind::Both,
                None => cfg.oracle,
            };
            let samples = a.samples.unwrap_or(cfg.samples);
            let seed = a.seed.unwrap_or(cfg.seed);
            let reports = run::run_validate(&cfg, oracle, samples, seed, digits)?;
            let mut out = output(a.out.as_deref())?;
            serde_json::to_writer_pretty(&mut out, &reports)?;
            writeln!(out)?;
            out.flush()?;
            for r in &reports {
                eprintln!(
                    "{}: sup deviation {:.3e} vs threshold {:.3e} over {} certified points ({} excluded): {}",
                    r.oracle,
                    r.sup_deviation,
                    r.threshold,
                    r.certified_points,
                    r.excluded_points,
                    if r.pass { "pass" } else { "FAIL" }
                );
            }
            Ok(if reports.iter().any(|r| !r.pass) {
                exit::VALIDATION_FAILED
            } else if reports.iter().any(|r| r.excluded_points > 0) {
                exit::UNCERTIFIED
            } else {
                exit::OK
            })
        }
        Command::Terms(a) => {
            let mut cfg = load(&a.config)?;
            if let Some(e) = a.epsilon {
                cfg.epsilon = e;
            }
            if let Some(x) = a.xmax {
                cfg.grid.max = x;
            }
            let rep = run::run_terms(&cfg, digits)?;
            println!("epsilon      {:e}", rep.epsilon);
            println!("x_max        {}", rep.x_max);
            println!("t0           {}", rep.t0);
            println!("pdf bound    {:e}", rep.pdf_bound);
            println!("cdf bound    {:e}", rep.cdf_bound);
            println!("digits       {}", rep.digits);
            println!("t0   certified x <=");
            for s in &rep.sweep {
                println!("{:<4} {:.6}", s.t0, s.certified_x_max);
            }
            Ok(exit::OK)
        }
    }
}
