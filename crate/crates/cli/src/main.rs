mod analyze;
mod config;
mod report;

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::builder::{PossibleValuesParser, TypedValueParser};
use clap::{Parser, Subcommand, ValueEnum};
use nph_core::sim::{ScenarioSpec, TrialDesign};
use nph_core::study::{run_study, StudyConfig};
use nph_core::{NphError, SurvivalDataset};
use sha2::{Digest, Sha256};

use analyze::{AnalyzeOptions, Direction};
use config::SimulationConfig;
use report::{RateGrid, SimulationReport, VERSION};

/// Invalid or unreadable configuration (exit code 2).
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Unreadable or invalid dataset (exit code 3).
#[derive(Debug)]
struct DataError(String);

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for DataError {}

/// Every analysis method failed (exit code 4).
#[derive(Debug)]
struct NumericalError(String);

impl fmt::Display for NumericalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericalError {}

#[derive(Parser)]
#[command(
    name = "nph",
    version,
    about = "Survival tests and trial simulation under non-proportional hazards"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation study described by a JSON config.
    Simulate {
        config: PathBuf,
        out: PathBuf,
        /// Overrides NPH_SEED and the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Null rejection rates at N = 300, 600, 1200 for one enrollment pattern.
    Table2 {
        #[arg(long, default_value_t = 18, value_parser = PossibleValuesParser::new(["12", "18", "24"]).map(|s| s.parse::<u32>().unwrap()))]
        enrollment: u32,
        #[arg(long, default_value_t = 20_000)]
        replicates: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        out: PathBuf,
    },
    /// Power of every method at N = 300, 600, 1200 for one scenario.
    Power {
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 18.0)]
        enrollment: f64,
        #[arg(long, default_value_t = 5_000)]
        replicates: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        out: PathBuf,
    },
    /// Apply every test to a CSV dataset (columns id,arm,time,event[,entry]).
    Analyze {
        dataset: PathBuf,
        /// Cut points for the piecewise Cox model, e.g. `--cuts 6,12`.
        #[arg(long, value_delimiter = ',')]
        cuts: Vec<f64>,
        /// Truncation time for RMST; defaults to the shorter arm's follow-up.
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long, default_value_t = 0.025)]
        alpha: f64,
        #[arg(long, value_enum, default_value_t = Direction::Experimental)]
        direction: Direction,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        out: PathBuf,
    },
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// `--seed`, then `NPH_SEED`, then the fallback.
fn resolve_seed(flag: Option<u64>, fallback: Option<u64>) -> Result<Option<u64>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("NPH_SEED") {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| {
            anyhow!(ConfigError(format!(
                "NPH_SEED is not a 64-bit integer: {v:?}"
            )))
        }),
        Err(_) => Ok(fallback),
    }
}

fn write_output(path: &Path, write: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut out = BufWriter::new(file);
    write(&mut out)?;
    out.flush()?;
    Ok(())
}

fn write_json<T: serde::Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

fn study_error(e: NphError) -> anyhow::Error {
    anyhow!(ConfigError(e.to_string()))
}

fn grid(
    scenario: &ScenarioSpec,
    enrollment: f64,
    replicates: usize,
    seed: u64,
    jobs: usize,
) -> Result<RateGrid> {
    let rows = [300, 600, 1200]
        .into_iter()
        .map(|n| {
            let cfg = StudyConfig::new(
                scenario.clone(),
                TrialDesign::new(n, enrollment),
                replicates,
                seed.wrapping_add(n as u64),
            );
            run_study(&cfg, jobs)
                .map(|s| SimulationReport::new(&s))
                .map_err(study_error)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RateGrid {
        scenario: scenario.name.clone(),
        enrollment_months: enrollment,
        replicates,
        seed,
        rows,
        version: VERSION.to_string(),
    })
}

fn write_grid(grid: &RateGrid, format: Format, out: &Path) -> Result<()> {
    write_output(out, |w| match format {
        Format::Csv => grid.write_csv(w),
        Format::Json => write_json(w, grid),
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            config,
            out,
            seed,
            jobs,
            format,
        } => {
            let file = SimulationConfig::load(&config)?;
            let study = file.study(resolve_seed(seed, None)?)?;
            let summary = run_study(&study, jobs).map_err(study_error)?;
            let report = SimulationReport::new(&summary);
            write_output(&out, |w| match format {
                Format::Csv => report.write_csv(w),
                Format::Json => write_json(w, &report),
            })
        }
        Command::Table2 {
            enrollment,
            replicates,
            seed,
            jobs,
            format,
            out,
        } => {
            let seed = resolve_seed(seed, Some(1_000 * enrollment as u64))?.unwrap_or_default();
            let null = ScenarioSpec::builtin("null").expect("built-in");
            let g = grid(&null, enrollment as f64, replicates, seed, jobs)?;
            write_grid(&g, format, &out)
        }
        Command::Power {
            scenario,
            enrollment,
            replicates,
            seed,
            jobs,
            format,
            out,
        } => {
            let spec = ScenarioSpec::builtin(&scenario).ok_or_else(|| {
                anyhow!(ConfigError(format!(
                    "unknown scenario {scenario:?}; expected one of {}",
                    ScenarioSpec::BUILTIN_NAMES.join(", ")
                )))
            })?;
            let seed = resolve_seed(seed, Some(50_000))?.unwrap_or_default();
            let g = grid(&spec, enrollment, replicates, seed, jobs)?;
            write_grid(&g, format, &out)
        }
        Command::Analyze {
            dataset,
            cuts,
            tau,
            alpha,
            direction,
            format,
            out,
        } => {
            if !(alpha > 0.0 && alpha < 0.5) {
                return Err(anyhow!(ConfigError(format!(
                    "--alpha must lie in (0, 0.5), got {alpha}"
                ))));
            }
            let bytes = std::fs::read(&dataset).map_err(|e| {
                anyhow!(DataError(format!("cannot read {}: {e}", dataset.display())))
            })?;
            let hash = format!("{:x}", Sha256::digest(&bytes));
            let data = SurvivalDataset::from_csv_reader(bytes.as_slice())
                .and_then(|d| d.validate())
                .and_then(|d| d.require_rank_testable().map(|_| d))
                .map_err(|e| anyhow!(DataError(format!("{}: {e}", dataset.display()))))?;
            let opts = AnalyzeOptions {
                cuts,
                tau,
                alpha,
                direction,
            };
            let report = analyze::analyze(&data, hash, &opts);
            write_output(&out, |w| match format {
                Format::Csv => report.write_csv(w),
                Format::Json => write_json(w, &report),
            })?;
            if report.methods.iter().all(|r| r.p_one_sided.is_none()) {
                return Err(anyhow!(NumericalError(
                    "no method produced a p-value".into()
                )));
            }
            Ok(())
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return 2;
        }
        if cause.is::<DataError>() {
            return 3;
        }
        if cause.is::<NumericalError>() {
            return 4;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
