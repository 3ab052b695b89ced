//! `rmtdiag`: spectral diagnostics of training-data quality from weights.

mod commands;
mod report;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rmtdiag::bottleneck::DEFAULT_MIN_RESOLUTION;
use rmtdiag::observables::{HillConfig, ObservableOptions};
use rmtdiag::pipeline::AnalyzeOptions;
use rmtdiag::{Error, ErrorClass};

use crate::report::ReportDocument;

#[derive(Parser, Debug)]
#[command(name = "rmtdiag", version, about = "Diagnose training-data quality from weight spectra")]
struct Cli {
    /// Write the full report as JSON to this path
    #[arg(long, global = true, value_name = "PATH")]
    json: Option<PathBuf>,

    /// Suppress the human-readable summary on stdout
    #[arg(long, global = true)]
    quiet: bool,

    /// Seed for randomized commands (required by `synth`)
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Per-layer observables, bottleneck choice and Hill threshold sweep
    Analyze {
        /// Bundle directory, or a sample file written by `synth pareto|poisson-gaps`
        path: PathBuf,
        #[command(flatten)]
        obs: ObservableArgs,
    },
    /// Fit a noise detector from a run manifest
    Calibrate {
        /// CSV with header bundle_path,noise_fraction,test_accuracy,seed
        runs: PathBuf,
        /// Where to write the calibration model
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = TargetArg::NoiseFraction)]
        target: TargetArg,
        #[command(flatten)]
        obs: ObservableArgs,
    },
    /// Estimate the label-noise fraction of a bundle with a calibration model
    Detect {
        model: PathBuf,
        /// Bundle directory or sample file
        path: PathBuf,
        #[command(flatten)]
        obs: ObservableArgs,
    },
    /// Rank observables and norm baselines by leave-one-out R² against accuracy
    Compare {
        runs: PathBuf,
        /// Treat every run as its own point instead of averaging seeds per noise level
        #[arg(long)]
        per_run: bool,
        #[command(flatten)]
        obs: ObservableArgs,
    },
    /// Generate synthetic fixtures
    #[command(subcommand)]
    Synth(SynthKind),
    /// Fit the Marchenko–Pastur law to one layer's spectrum
    FitMp {
        /// Bundle directory or sample file
        path: PathBuf,
        /// Layer to fit (defaults to the bottleneck)
        #[arg(long)]
        layer: Option<String>,
        #[arg(long, default_value_t = DEFAULT_MIN_RESOLUTION)]
        min_resolution: usize,
    },
}

#[derive(Subcommand, Debug)]
enum SynthKind {
    /// Single-layer bundle with iid N(0, σ²) weights and an independent init draw
    Gaussian {
        #[command(flatten)]
        dims: Dims,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Gaussian noise plus planted rank-k signal; the init snapshot is the noise
    Spiked {
        #[command(flatten)]
        dims: Dims,
        /// Spike strength as a multiple of the detection threshold σ²√γ
        #[arg(long, default_value_t = 4.0)]
        theta_mult: f64,
        /// Number of spike directions
        #[arg(long, default_value_t = 1)]
        spikes: usize,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Pareto sample with density ∝ x^(−alpha)
    Pareto {
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 5000)]
        count: usize,
        #[arg(long, default_value_t = 1.0)]
        x_min: f64,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Uncorrelated levels with Exp(1) gaps
    PoissonGaps {
        #[arg(long, default_value_t = 5000)]
        count: usize,
        #[arg(long, short)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct Dims {
    /// Rows
    #[arg(long)]
    m: usize,
    /// Columns
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
}

#[derive(Args, Debug, Clone)]
struct ObservableArgs {
    /// Measure this layer instead of the heuristic bottleneck
    #[arg(long)]
    layer: Option<String>,
    /// Eigenvalue quantile above which the Hill tail starts
    #[arg(long, default_value_t = 0.90)]
    hill_q: f64,
    /// Fit σ² from the spectrum even when an init snapshot exists
    #[arg(long)]
    no_init_sigma: bool,
    /// Minimum min(rows, cols) for bottleneck eligibility
    #[arg(long, default_value_t = DEFAULT_MIN_RESOLUTION)]
    min_resolution: usize,
}

impl ObservableArgs {
    fn options(&self) -> Result<AnalyzeOptions, Error> {
        Ok(AnalyzeOptions {
            layer: self.layer.clone(),
            observables: ObservableOptions {
                hill: HillConfig::with_quantile(self.hill_q)?,
                sigma_from_init: !self.no_init_sigma,
            },
            min_resolution: self.min_resolution,
        })
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum TargetArg {
    NoiseFraction,
    TestAccuracy,
}

/// What a command produced: the report plus its stdout rendering.
pub struct Output {
    pub report: ReportDocument,
    pub text: String,
}

fn run(cli: &Cli) -> Result<Output, Error> {
    match &cli.command {
        Command::Analyze { path, obs } => commands::analyze::run(path, &obs.options()?),
        Command::Calibrate {
            runs,
            out,
            target,
            obs,
        } => {
            let target = match target {
                TargetArg::NoiseFraction => rmtdiag::calib::Target::NoiseFraction,
                TargetArg::TestAccuracy => rmtdiag::calib::Target::TestAccuracy,
            };
            commands::calibrate::calibrate(runs, out, target, &obs.options()?)
        }
        Command::Detect { model, path, obs } => {
            commands::calibrate::detect(model, path, &obs.options()?)
        }
        Command::Compare { runs, per_run, obs } => {
            commands::calibrate::compare(runs, *per_run, &obs.options()?)
        }
        Command::Synth(kind) => {
            let seed = cli.seed.ok_or_else(|| {
                Error::InvalidInput("synth needs an explicit --seed".to_owned())
            })?;
            commands::synth::run(kind, seed)
        }
        Command::FitMp {
            path,
            layer,
            min_resolution,
        } => commands::fit_mp::run(path, layer.as_deref(), *min_resolution),
    }
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Io => 1,
        ErrorClass::Validation => 2,
        ErrorClass::Numerical => 3,
    }
}

fn fail(class: ErrorClass, message: &str) -> ExitCode {
    let line = serde_json::json!({ "error": class.as_str(), "message": message });
    eprintln!("{line}");
    ExitCode::from(exit_code(class))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            return fail(ErrorClass::Validation, first.trim_start_matches("error: "));
        }
    };
    let out = match run(&cli) {
        Ok(o) => o,
        Err(e) => return fail(e.class(), &e.to_string()),
    };
    if let Some(path) = &cli.json {
        if let Err(e) = out.report.write(path) {
            return fail(e.class(), &e.to_string());
        }
    }
    if !cli.quiet && !out.text.is_empty() {
        let mut stdout = std::io::stdout().lock();
        let _ = stdout.write_all(out.text.as_bytes());
    }
    ExitCode::SUCCESS
}
