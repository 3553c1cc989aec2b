//! The `treeconv` command line.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error
//! (unreadable or malformed input, missing or mismatched checkpoint),
//! 3 numeric failure (non-finite loss, failed gradient check).

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;
use treeconv::baselines::BaselineError;
use treeconv::casas::IngestError;
use treeconv::metrics::MetricsError;
use treeconv::model::{CheckpointError, ModelError};
use treeconv::synth::SynthError;
use treeconv::training::TrainError;

use config::{Method, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::TooFewFiles(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Data(format!("checkpoint: {e}"))
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Numerics(_) => CliError::Numeric(e.to_string()),
            ModelError::InvalidK(_) => CliError::Usage(e.to_string()),
            ModelError::WindowSize { .. } => CliError::Data(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Model(m) => m.into(),
            TrainError::Numerics(_) | TrainError::NonFinite { .. } | TrainError::EmptyGradients => {
                CliError::Numeric(e.to_string())
            }
            TrainError::EmptyData | TrainError::InconsistentWindows => CliError::Data(e.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Model(m) => m.into(),
            MetricsError::Empty => CliError::Data("no evaluation windows".into()),
        }
    }
}

impl From<BaselineError> for CliError {
    fn from(e: BaselineError) -> Self {
        match e {
            BaselineError::Neighbors { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Profile(_) => CliError::Usage(e.to_string()),
            SynthError::Io { .. } => CliError::Data(e.to_string()),
        }
    }
}

/// Flags shared by every subcommand; each one overrides the same key of
/// the `--config` file.
#[derive(Args, Debug, Default, Clone)]
pub struct Common {
    /// Directory of CASAS log files.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// key = value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Root seed for the split, initialization and shuffling [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Window size in events [default: 8].
    #[arg(long)]
    pub k: Option<usize>,
    /// Batch size [default: 128].
    #[arg(long)]
    pub alpha: Option<usize>,
    /// L2 weight on the convolution and head weights [default: 0.0004].
    #[arg(long)]
    pub beta: Option<f64>,
    /// Adam learning rate [default: 0.0002].
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Training epochs [default: 25].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Classifier for `eval` [default: tsc].
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// Checkpoint to read (eval, predict) or write (train).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// File-level cross-validation folds for `eval`.
    #[arg(long)]
    pub cv: Option<usize>,
    /// Sensor value kept as an event [default: ON].
    #[arg(long)]
    pub value: Option<String>,
    /// Any config key, e.g. `--set neighbors=3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl Common {
    /// Defaults, then `--config`, then `--set`, then the dedicated flags.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut c = RunConfig::default();
        if let Some(path) = &self.config {
            c.apply_file(path)?;
        }
        let cwd = PathBuf::from(".");
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            c.set(k.trim(), v, &cwd).map_err(CliError::Usage)?;
        }
        if let Some(v) = &self.data {
            c.data = Some(v.clone());
        }
        if let Some(v) = &self.out {
            c.out = Some(v.clone());
        }
        if let Some(v) = &self.checkpoint {
            c.checkpoint = Some(v.clone());
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.k {
            c.k = v;
        }
        if let Some(v) = self.alpha {
            c.alpha = v;
        }
        if let Some(v) = self.beta {
            c.beta = v;
        }
        if let Some(v) = self.gamma {
            c.gamma = v;
        }
        if let Some(v) = self.epochs {
            c.epochs = v;
        }
        if let Some(v) = self.method {
            c.method = v;
        }
        if let Some(v) = self.cv {
            c.cv = Some(v);
        }
        if let Some(v) = &self.value {
            c.value = v.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Parser, Debug)]
#[command(name = "treeconv", version, about = "Multi-resident activity recognition from ambient sensor logs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parse a corpus and write canonical per-file CSVs with event counts.
    Ingest(Common),
    /// Train on the training split, then evaluate on the held-out files.
    Train(Common),
    /// Evaluate a checkpoint or a baseline on the held-out files.
    Eval(Common),
    /// Train once per grid point and record the epoch losses.
    Sweep(Common),
    /// Predict the resident and activity of one event line.
    Predict {
        #[command(flatten)]
        common: Common,
        /// CASAS log whose last ON events precede the target.
        #[arg(long)]
        history: PathBuf,
        /// The target event line.
        #[arg(long)]
        line: String,
    },
    /// Compare analytic and finite-difference gradients of the full network.
    Gradcheck(Common),
    /// Write a synthetic corpus in the CASAS log format.
    Synth {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        profile: ProfileArgs,
    },
}

#[derive(Args, Debug, Clone, Default)]
pub struct ProfileArgs {
    /// Log files to write [default: 26].
    #[arg(long)]
    pub files: Option<usize>,
    /// ON events per file, each followed by an OFF [default: 344].
    #[arg(long)]
    pub events_per_file: Option<usize>,
    /// Distinct sensors used, at most 37 [default: 37].
    #[arg(long)]
    pub sensors: Option<usize>,
    /// Residents [default: 2].
    #[arg(long)]
    pub residents: Option<usize>,
    /// Activities [default: 15].
    #[arg(long)]
    pub activities: Option<usize>,
    /// Probability of a random sensor firing [default: 0.15].
    #[arg(long)]
    pub noise: Option<f64>,
    /// Probability an episode is done by the other resident [default: 0.15].
    #[arg(long)]
    pub resident_swap: Option<f64>,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Errors are reported on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
