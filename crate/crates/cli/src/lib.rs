//! Command-line pipeline: generate, split, train, rollout, evaluate, report,
//! bench and a contact-set dump.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use meshcrash::{Family, SplitName};

mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod svg;

pub use commands::run;
pub use config::RunConfig;
pub use error::{CliError, Result};
pub use manifest::{Artifact, RunManifest};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "MESHCRASH_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "meshcrash",
    version,
    about = "Mesh-attention crash surrogates: data, training and evaluation"
)]
pub struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Where to write the run manifest (default: next to the main output).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample designs by LHS and simulate them with the pole-impact oracle.
    Generate(GenerateArgs),
    /// Assign samples to train/val/test with KS and W1 diagnostics.
    Split(SplitArgs),
    /// Train a surrogate under full autoregressive rollout.
    Train(TrainArgs),
    /// Roll a trained surrogate out over dataset samples.
    Rollout(RolloutArgs),
    /// Compute RMSE and survival-space metrics.
    Evaluate(EvaluateArgs),
    /// Draw SVG charts from one or more evaluation reports.
    Report(ReportArgs),
    /// Time surrogate rollouts against the oracle per design.
    Bench(BenchArgs),
    /// Write the contact set of one sample and step as CSV.
    Contacts(ContactsArgs),
}

#[derive(Debug, Clone, Copy, Default, Args)]
pub struct ContactArgs {
    /// Contact search radius in mm.
    #[arg(long)]
    pub contact_radius: Option<f64>,
    /// Maximum contact partners kept per node.
    #[arg(long)]
    pub contact_k: Option<usize>,
    /// Initial value of the contact gate.
    #[arg(long)]
    pub contact_alpha_init: Option<f64>,
}

impl ContactArgs {
    pub fn section(&self) -> config::ContactSection {
        config::ContactSection {
            radius: self.contact_radius,
            k: self.contact_k,
            alpha_init: self.contact_alpha_init,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Output dataset container.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of designs.
    #[arg(long, default_value_t = 20)]
    pub n: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output frames after the initial one.
    #[arg(long)]
    pub horizon: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Split report (JSON); diagnostics and assignment CSVs go alongside.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub ks_threshold: Option<f64>,
    /// Train, val and test fractions.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub ratios: Option<Vec<f64>>,
    #[arg(long)]
    pub max_attempts: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Split report from `split`.
    #[arg(long)]
    pub split: PathBuf,
    /// Output checkpoint.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_parser = parse_family)]
    pub family: Option<Family>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Loss history CSV (default: `<out>` with `.history.csv`).
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Suppress per-epoch progress on stderr.
    #[arg(long)]
    pub quiet: bool,
    #[command(flatten)]
    pub contact: ContactArgs,
}

#[derive(Debug, Args)]
pub struct Selection {
    /// Sample ids to use (default: all, or the `--subset` of `--split`).
    #[arg(long, value_delimiter = ',')]
    pub ids: Vec<u64>,
    /// Split report used with `--subset`.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, value_parser = parse_split_name, requires = "split")]
    pub subset: Option<SplitName>,
}

#[derive(Debug, Args)]
pub struct RolloutArgs {
    /// Checkpoint from `train`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Predicted trajectories (dataset container); a per-step RMSE CSV goes alongside.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub select: Selection,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Predicted trajectories from `rollout`.
    #[arg(long, required_unless_present = "drift")]
    pub pred: Option<PathBuf>,
    /// Reference trajectories.
    #[arg(long)]
    pub reference: PathBuf,
    /// Evaluate the zero-acceleration baseline instead of `--pred`.
    #[arg(long, conflicts_with = "pred")]
    pub drift: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub select: Selection,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// `eval.json` files from `evaluate`; repeat to compare runs.
    #[arg(long, required = true)]
    pub eval: Vec<PathBuf>,
    /// Legend labels, one per `--eval` (default: parent directory name).
    #[arg(long)]
    pub label: Vec<String>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Timed repetitions per sample; the minimum is reported.
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    /// Skip re-running the oracle for comparison.
    #[arg(long)]
    pub no_oracle: bool,
    /// Runtime table as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub select: Selection,
}

#[derive(Debug, Args)]
pub struct ContactsArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub sample: u64,
    #[arg(long, default_value_t = 0)]
    pub step: usize,
    /// Take contact parameters from this checkpoint and, with `--predicted`,
    /// positions from its rollout.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, requires = "model")]
    pub predicted: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub contact: ContactArgs,
}

fn parse_family(s: &str) -> std::result::Result<Family, String> {
    s.parse().map_err(|_| {
        let names: Vec<&str> = Family::ALL.iter().map(|f| f.as_str()).collect();
        format!("unknown family `{s}`; expected one of {}", names.join(", "))
    })
}

fn parse_split_name(s: &str) -> std::result::Result<SplitName, String> {
    SplitName::ALL
        .into_iter()
        .find(|n| n.as_str() == s)
        .ok_or_else(|| format!("unknown split `{s}`; expected train, val or test"))
}

/// An existing input file, or a usage error.
pub fn input(path: &Path) -> Result<&Path> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(CliError::Usage(format!("input file {} does not exist", path.display())))
    }
}

pub(crate) fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<PathBuf> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))?;
    Ok(path.to_path_buf())
}

/// `<path>.<suffix>`, keeping the original extension.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}
