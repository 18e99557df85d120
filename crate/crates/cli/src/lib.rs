//! Command-line front end: `synth`, `train`, `detect`, `eval`.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use commands::{DetectorKind, Mode};
use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("training did not reach equilibrium; diagnostics: {}", .0.join(", "))]
    NonConvergence(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::NonConvergence(_) => 4,
        }
    }
}

impl From<pmugan::Error> for CliError {
    fn from(e: pmugan::Error) -> Self {
        match e {
            pmugan::Error::Config(m) => CliError::Config(m),
            other => CliError::Data(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "pmugan", version, about = "GAN-based event detection on micro-PMU streams")]
#[command(after_help = config::key_help())]
pub struct Cli {
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one config key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Basic,
    Enhanced,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DetectorArg {
    Basic,
    Enhanced,
    Mad,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic stream and its ground truth.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
    /// Train the basic (one model) or enhanced (two models) detector.
    Train {
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long)]
        input: PathBuf,
        /// Directory for model files and diagnostics CSVs.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Score a stream window by window.
    Detect {
        #[arg(long, value_enum)]
        detector: DetectorArg,
        /// Model file (once for basic, twice for enhanced).
        #[arg(long)]
        model: Vec<PathBuf>,
        /// Stream CSV, or `-` for stdin.
        #[arg(long)]
        input: PathBuf,
        /// Per-window CSV, or `-` for stdout.
        #[arg(long, default_value = "-")]
        windows: PathBuf,
        /// Merged intervals CSV.
        #[arg(long)]
        intervals: Option<PathBuf>,
    },
    /// Compare detection reports against ground truth.
    Eval {
        #[arg(long)]
        truth: PathBuf,
        /// `name=path` or `path` of a window report or interval CSV (repeatable).
        #[arg(long, required = true)]
        report: Vec<String>,
        /// Comparison table CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-kind recall CSV.
        #[arg(long)]
        kinds: Option<PathBuf>,
    },
}

/// Defaults, then the config file, then `--set` overrides, then validation.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::new();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    for s in &cli.set {
        cfg.apply_assignment(s)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report_arg(s: &str) -> (String, PathBuf) {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() => (name.to_string(), PathBuf::from(path)),
        _ => {
            let path = PathBuf::from(s);
            let name = path
                .file_stem()
                .map_or_else(|| s.to_string(), |n| n.to_string_lossy().into_owned());
            (name, path)
        }
    }
}

/// Runs one parsed command; messages go to `log`.
pub fn run(cli: &Cli, log: &mut dyn Write) -> Result<(), CliError> {
    let cfg = resolve_config(cli)?;
    let io_err = |e: std::io::Error| CliError::Data(e.to_string());
    match &cli.command {
        Command::Synth { out, truth } => {
            let s = commands::synth(&cfg, out, truth)?;
            writeln!(log, "wrote {} frames and {} events", s.frames, s.events).map_err(io_err)?;
        }
        Command::Train { mode, input, out_dir } => {
            let mode = match mode {
                ModeArg::Basic => Mode::Basic,
                ModeArg::Enhanced => Mode::Enhanced,
            };
            let files = commands::train(&cfg, input, mode, out_dir)?;
            for f in &files {
                writeln!(
                    log,
                    "{}: {} (converged: {})",
                    f.feature_set,
                    f.model.display(),
                    f.converged
                )
                .map_err(io_err)?;
            }
            let failed: Vec<String> = files
                .iter()
                .filter(|f| !f.converged)
                .map(|f| f.diagnostics.display().to_string())
                .collect();
            if !failed.is_empty() {
                return Err(CliError::NonConvergence(failed));
            }
        }
        Command::Detect {
            detector,
            model,
            input,
            windows,
            intervals,
        } => {
            let kind = match detector {
                DetectorArg::Basic => DetectorKind::Basic,
                DetectorArg::Enhanced => DetectorKind::Enhanced,
                DetectorArg::Mad => DetectorKind::Mad,
            };
            let src = commands::input_source(input)?;
            let sink = commands::output_sink(windows)?;
            let report = commands::detect(&cfg, kind, model, src, sink)?;
            if let Some(path) = intervals {
                let sink = commands::output_sink(path)?;
                pmugan::io::write_intervals(sink, &report.intervals)?;
            }
            writeln!(
                log,
                "{} windows, {} flagged, {} intervals",
                report.windows.len(),
                report.windows.iter().filter(|w| w.flag).count(),
                report.intervals.len()
            )
            .map_err(io_err)?;
        }
        Command::Eval {
            truth,
            report,
            out,
            kinds,
        } => {
            let reports: Vec<(String, PathBuf)> = report.iter().map(|s| report_arg(s)).collect();
            let rows = commands::eval(&cfg, truth, &reports)?;
            if let Some(path) = out {
                let table: Vec<_> = rows.iter().map(|r| r.row.clone()).collect();
                pmugan::io::write_comparison(commands::output_sink(path)?, &table)?;
            }
            if let Some(path) = kinds {
                let per: Vec<_> = rows.iter().map(|r| (r.row.detector.clone(), r.matched.clone())).collect();
                pmugan::io::write_kind_recall(commands::output_sink(path)?, &per)?;
            }
            write!(log, "{}", commands::summary(&rows)).map_err(io_err)?;
        }
    }
    Ok(())
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I, log: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli, log) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("pmugan: {e}");
            e.exit_code()
        }
    }
}
