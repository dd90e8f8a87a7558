//! Pipeline commands behind the `hwcheck` binary.
//!
//! Every command reads a [`RunConfig`], works only on files under the
//! configured directories, and is deterministic for a fixed seed.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    /// Bad input from the operator: arguments, config, missing or invalid files.
    User(String),
    /// A failure that indicates a bug or numerical breakdown.
    Internal(String),
    /// Help or version text requested; not an error.
    Info(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Info(_) => 0,
            CliError::User(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::User(m) | CliError::Internal(m) | CliError::Info(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<hwcheck::Error> for CliError {
    fn from(e: hwcheck::Error) -> Self {
        use hwcheck::Error as E;
        match e {
            E::NonFinite { .. } | E::Dimension(_) | E::EmptySequence | E::Infeasible { .. } => {
                CliError::Internal(e.to_string())
            }
            _ => CliError::User(e.to_string().trim_start_matches("error: ").to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "hwcheck", version, about = "Detect misspelled handwritten words without transcribing them")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(short, long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override a config entry, e.g. `--set hwr.epochs=4`. Repeatable.
    #[arg(short, long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Same as `--set run.seed=N`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Same as `--set paths.output_dir=DIR`.
    #[arg(long, global = true, value_name = "DIR")]
    pub output_dir: Option<PathBuf>,
    /// Same as `--set paths.checkpoint_dir=DIR`.
    #[arg(long, global = true, value_name = "DIR")]
    pub checkpoint_dir: Option<PathBuf>,
    /// Same as `--set paths.wordlist=FILE`.
    #[arg(long, global = true, value_name = "FILE")]
    pub wordlist: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a dataset split: images plus manifest.jsonl.
    GenData(GenDataArgs),
    /// Train the recognizer on the hwr and hwr-val splits.
    TrainHwr(EpochArgs),
    /// Train the classification head on the train and val splits.
    TrainClassifier(EpochArgs),
    /// Score the test sets, calibrate and write reports and plots.
    Evaluate(RecallArgs),
    /// Write recall-constrained thresholds for every test set.
    Calibrate(RecallArgs),
    /// Rebuild CSV, plots and the comparison table from report.json.
    Report,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Split {
    /// Correct words for recognizer training.
    Hwr,
    /// Correct words for recognizer validation.
    HwrVal,
    Train,
    Val,
    Test,
    /// Every split above.
    All,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long, value_enum)]
    pub split: Split,
    /// Test scenario (moderate or difficult); all selected ones when absent.
    #[arg(long)]
    pub scenario: Option<String>,
    /// Misspelling severity, 1 to 3.
    #[arg(long)]
    pub severity: Option<u8>,
    /// Number of examples (per test set for `test`).
    #[arg(long)]
    pub count: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EpochArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RecallArgs {
    /// Minimum recall on misspelled words when calibrating.
    #[arg(long)]
    pub min_recall: Option<f64>,
    /// Thresholds file from `calibrate` (evaluate only).
    #[arg(long, value_name = "FILE")]
    pub thresholds: Option<PathBuf>,
}

impl Cli {
    /// Config overrides in priority order: `--set` entries, then dedicated flags.
    fn overrides(&self) -> Vec<String> {
        let mut o = self.overrides.clone();
        let path = |p: &PathBuf| toml::Value::String(p.display().to_string()).to_string();
        if let Some(s) = self.seed {
            o.push(format!("run.seed={s}"));
        }
        if let Some(p) = &self.output_dir {
            o.push(format!("paths.output_dir={}", path(p)));
        }
        if let Some(p) = &self.checkpoint_dir {
            o.push(format!("paths.checkpoint_dir={}", path(p)));
        }
        if let Some(p) = &self.wordlist {
            o.push(format!("paths.wordlist={}", path(p)));
        }
        match &self.command {
            Command::GenData(a) => {
                if let Some(s) = &a.scenario {
                    o.push(format!("evaluate.scenarios=[{}]", toml::Value::String(s.clone())));
                }
                if let Some(s) = a.severity {
                    match a.split {
                        Split::Train | Split::Val => o.push(format!("data.severity={s}")),
                        Split::Test => o.push(format!("evaluate.severities=[{s}]")),
                        _ => {
                            o.push(format!("data.severity={s}"));
                            o.push(format!("evaluate.severities=[{s}]"));
                        }
                    }
                }
                if let Some(n) = a.count {
                    let keys: &[&str] = match a.split {
                        Split::Hwr => &["hwr_count"],
                        Split::HwrVal => &["hwr_val_count"],
                        Split::Train => &["train_count"],
                        Split::Val => &["val_count"],
                        Split::Test => &["test_count"],
                        Split::All => &["hwr_count", "hwr_val_count", "train_count", "val_count", "test_count"],
                    };
                    o.extend(keys.iter().map(|k| format!("data.{k}={n}")));
                }
            }
            Command::TrainHwr(a) => o.extend(a.epochs.map(|e| format!("hwr.epochs={e}"))),
            Command::TrainClassifier(a) => o.extend(a.epochs.map(|e| format!("classifier.epochs={e}"))),
            Command::Evaluate(a) | Command::Calibrate(a) => {
                o.extend(a.min_recall.map(|r| format!("evaluate.min_recall={r:?}")));
                o.extend(a.thresholds.as_ref().map(|p| format!("evaluate.thresholds={}", path(p))));
            }
            Command::Report => {}
        }
        o
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => CliError::Info(e.to_string()),
        _ => CliError::User(e.to_string().trim_start_matches("error: ").to_string()),
    })?;
    let config = RunConfig::load(cli.config.as_deref(), &cli.overrides())?;
    match &cli.command {
        Command::GenData(a) => commands::gen_data(&config, a.split),
        Command::TrainHwr(_) => commands::train_hwr(&config),
        Command::TrainClassifier(_) => commands::train_classifier(&config),
        Command::Evaluate(_) => commands::evaluate(&config),
        Command::Calibrate(_) => commands::calibrate(&config),
        Command::Report => commands::report(&config),
    }
}
