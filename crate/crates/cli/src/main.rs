use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use evcs_core::{Algorithm, AugmentationMode};

mod commands;
mod report;

use report::Format;

/// EV charging scheduling: generate corpora, check instances, run online
/// policies and measure resource augmentation.
#[derive(Debug, Parser)]
#[command(name = "evcs", version)]
struct Cli {
    /// Emit a JSON envelope instead of CSV.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a corpus from a TOML spec into a directory.
    Gen {
        spec: PathBuf,
        out_dir: PathBuf,
        /// Overrides the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Validate an instance, decide offline feasibility and find its minimum power.
    Check { file: PathBuf },
    /// Simulate one policy on one instance; exits 1 if a demand is missed.
    Run {
        file: PathBuf,
        #[arg(long, value_parser = parse_algorithm)]
        alg: Algorithm,
        /// Also write the rate schedule as CSV to this path.
        #[arg(long)]
        schedule: Option<PathBuf>,
    },
    /// Success rate of each policy over a corpus, optionally per metric bin.
    Sweep {
        dir: PathBuf,
        #[arg(long, value_delimiter = ',', value_parser = parse_algorithm, default_value = "sllf,llf,edf,es,rep,olp")]
        algs: Vec<Algorithm>,
        #[arg(long, value_enum, requires = "bins")]
        bin_by: Option<BinBy>,
        #[arg(long, requires = "bin_by", value_parser = clap::value_parser!(u32).range(1..))]
        bins: Option<u32>,
        /// One row per instance and policy instead of aggregate rates.
        #[arg(long, conflicts_with = "bin_by")]
        per_instance: bool,
    },
    /// Smallest augmentation under which each policy serves the whole corpus.
    Augment {
        dir: PathBuf,
        #[arg(long, value_delimiter = ',', value_parser = parse_algorithm, default_value = "sllf,llf,edf,es,rep,olp")]
        algs: Vec<Algorithm>,
        #[arg(long, value_enum, default_value = "power")]
        mode: Mode,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BinBy {
    SojournRatio,
    NormLaxity,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Power,
    PowerRate,
}

impl From<Mode> for AugmentationMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Power => AugmentationMode::Power,
            Mode::PowerRate => AugmentationMode::PowerAndRate,
        }
    }
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse().map_err(|e: evcs_core::Error| e.to_string())
}

fn init_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("EVCS_THREADS") else {
        return Ok(());
    };
    let n: usize =
        raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            anyhow::anyhow!("EVCS_THREADS must be a positive integer, got `{raw}`")
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()?;
    Ok(())
}

/// A reader such as `head` went away; not worth an error.
fn closed_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        let io = c.downcast_ref::<std::io::Error>().or_else(|| {
            match c.downcast_ref::<csv::Error>()?.kind() {
                csv::ErrorKind::Io(io) => Some(io),
                _ => None,
            }
        });
        io.is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let format = if cli.json { Format::Json } else { Format::Csv };
    let result = init_threads().and_then(|()| {
        let out = std::io::stdout().lock();
        match cli.command {
            Command::Gen {
                spec,
                out_dir,
                seed,
            } => commands::gen(out, format, &spec, &out_dir, seed),
            Command::Check { file } => commands::check(out, format, &file),
            Command::Run {
                file,
                alg,
                schedule,
            } => commands::run(out, format, &file, alg, schedule.as_deref()),
            Command::Sweep {
                dir,
                algs,
                bin_by,
                bins,
                per_instance,
            } => {
                let binning = bin_by
                    .zip(bins)
                    .map(|(b, k)| (matches!(b, BinBy::NormLaxity), k as usize));
                commands::sweep(out, format, &dir, &algs, binning, per_instance)
            }
            Command::Augment { dir, algs, mode } => {
                commands::augment(out, format, &dir, &algs, mode.into())
            }
        }
    });
    match result {
        Ok(commands::Status::Ok) => ExitCode::SUCCESS,
        Ok(commands::Status::Infeasible) => ExitCode::from(1),
        Err(e) if closed_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
