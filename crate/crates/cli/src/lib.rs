//! Command-line experiments: training, evaluation, the step/ratio grid and
//! the scoring and schedule ablations.
//!
//! Every run reads one JSON config (or the defaults), applies flag and
//! `--set key=json` overrides, and writes the effective config plus its CSVs
//! into the output dir. Reruns with the same config and inputs produce
//! byte-identical CSVs.

pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde_json::Value;

pub use config::RunConfig;
pub use error::{CliError, CliResult, EXIT_CONFIG, EXIT_FORMAT, EXIT_NUMERIC, EXIT_OTHER};

/// Environment variable for the worker thread count.
pub const THREADS_ENV: &str = "INVERSION_AD_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "inversion-ad",
    version,
    about = "Anomaly detection by few-step DDIM inversion"
)]
pub struct Cli {
    /// JSON run config; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Override a config key, e.g. `--set train.epochs=10`. Repeatable.
    #[arg(long = "set", value_name = "KEY=JSON", global = true)]
    pub set: Vec<String>,

    /// output_dir
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// data.dir
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,

    /// model
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,

    /// subset.steps
    #[arg(long, global = true)]
    pub steps: Option<usize>,

    /// subset.policy (uniform, quad, cube, exp)
    #[arg(long, global = true)]
    pub policy: Option<String>,

    /// score_mode (nll, diff, combined, recon, mahalanobis)
    #[arg(long, global = true)]
    pub mode: Option<String>,

    /// seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// train.epochs
    #[arg(long, global = true)]
    pub epochs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the noise predictor on the training normals.
    Train,
    /// Score the test set and write metrics, per-sample scores and NFE.
    Eval,
    /// Image AU-ROC over subset sizes for reconstruction and inversion.
    Grid,
    /// Compare the inversion scoring modes over subset sizes.
    AblateScoring,
    /// Compare subset policies over subset sizes.
    AblateSchedule,
    /// Write the synthetic benchmark as a dataset dir.
    GenData,
    /// Invert an FTEN file to terminal latents.
    Invert {
        /// input
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

impl Cli {
    /// Flag and `--set` overrides, in application order.
    pub fn overrides(&self) -> CliResult<Vec<(String, Value)>> {
        let mut out = self
            .set
            .iter()
            .map(|s| config::parse_override(s))
            .collect::<CliResult<Vec<_>>>()?;
        let path = |p: &PathBuf| Value::String(p.display().to_string());
        let flags: [(&str, Option<Value>); 8] = [
            ("output_dir", self.out.as_ref().map(path)),
            ("data.dir", self.data.as_ref().map(path)),
            ("model", self.model.as_ref().map(path)),
            ("subset.steps", self.steps.map(Value::from)),
            ("subset.policy", self.policy.clone().map(Value::from)),
            ("score_mode", self.mode.clone().map(Value::from)),
            ("seed", self.seed.map(Value::from)),
            ("train.epochs", self.epochs.map(Value::from)),
        ];
        out.extend(flags.into_iter().filter_map(|(k, v)| Some((k.to_string(), v?))));
        if let Command::Invert { input: Some(p) } = &self.command {
            out.push(("input".to_string(), path(p)));
        }
        Ok(out)
    }

    pub fn execute(&self) -> CliResult<()> {
        let cfg = RunConfig::load(self.config.as_deref(), &self.overrides()?)?;
        match self.command {
            Command::Train => commands::cmd_train(&cfg),
            Command::Eval => commands::cmd_eval(&cfg),
            Command::Grid => commands::cmd_grid(&cfg),
            Command::AblateScoring => commands::cmd_ablate_scoring(&cfg),
            Command::AblateSchedule => commands::cmd_ablate_schedule(&cfg),
            Command::GenData => commands::cmd_gen_data(&cfg),
            Command::Invert { .. } => commands::cmd_invert(&cfg),
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, A>(args: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match cli.execute() {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
