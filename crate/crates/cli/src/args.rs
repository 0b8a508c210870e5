//! Command-line surface. Every flag that mirrors a config-file value is
//! optional so that precedence can be resolved after the file is loaded.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use lsep_core::classify::ReduceMethod;
use lsep_core::corpus_ops::MixingProfile;
use lsep_core::landmark::BigramMode;
use lsep_core::separation::Objective;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Parses a kebab-case enum value through its serde representation.
fn kebab<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned())).map_err(|e| e.to_string())
}

#[derive(Debug, Parser)]
#[command(
    name = "lsep",
    version,
    about = "Landmark detection, speech/text information separation and fusion classification"
)]
pub struct Cli {
    /// JSON config file (defaults to $LSEP_CONFIG).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Seed for every stochastic step; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "name", content = "args", rename_all = "kebab-case")]
pub enum Command {
    /// Detect acoustic landmarks in one WAV file.
    Landmarks(LandmarksArgs),
    /// Sample sub-dialogue spans from a manifest.
    Augment(AugmentArgs),
    /// Train the contrastive separation model.
    TrainSep(TrainSepArgs),
    /// Export dense vectors and layer weights from a checkpoint.
    Extract(ExtractArgs),
    /// Estimate mutual information between two paired matrices.
    Mine(MineArgs),
    /// Concatenate speech vectors with reduced text embeddings.
    Fuse(FuseArgs),
    /// Train a linear SVM and report metrics.
    Classify(ClassifyArgs),
    /// Random hyperparameter search for the SVM.
    Search(SearchArgs),
    /// Interpretability reports.
    #[command(subcommand)]
    Explain(ExplainCommand),
    /// Linear separability with independent vs entangled features.
    DemoEntanglement(DemoArgs),
    /// Separation + MI + classification across dense dimensions.
    SweepDim(SweepArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Landmarks(_) => "landmarks",
            Command::Augment(_) => "augment",
            Command::TrainSep(_) => "train-sep",
            Command::Extract(_) => "extract",
            Command::Mine(_) => "mine",
            Command::Fuse(_) => "fuse",
            Command::Classify(_) => "classify",
            Command::Search(_) => "search",
            Command::Explain(ExplainCommand::Importance(_)) => "explain importance",
            Command::Explain(ExplainCommand::Durations(_)) => "explain durations",
            Command::Explain(ExplainCommand::Diversity(_)) => "explain diversity",
            Command::DemoEntanglement(_) => "demo-entanglement",
            Command::SweepDim(_) => "sweep-dim",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct LandmarksArgs {
    /// Input WAV file.
    #[arg(long = "in", value_name = "WAV")]
    pub input: PathBuf,
    /// Landmark JSONL output.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional bigram JSONL output.
    #[arg(long)]
    pub bigrams: Option<PathBuf>,
    #[arg(long, value_parser = kebab::<BigramMode>, default_value = "non-overlapping")]
    pub bigram_mode: BigramMode,
    /// Detect on the coarse track only.
    #[arg(long)]
    pub single_stage: bool,
    #[arg(long)]
    pub glottal_db: Option<f64>,
    #[arg(long)]
    pub burst_db: Option<f64>,
    #[arg(long)]
    pub syllabic_db: Option<f64>,
    #[arg(long)]
    pub frication_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct AugmentArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Span JSONL output.
    #[arg(long)]
    pub out: PathBuf,
    /// Samples per session.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub min_len: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Equalize the per-class sample totals.
    #[arg(long)]
    pub balance: bool,
    /// Per-class total when balancing (default: samples × larger class size).
    #[arg(long, requires = "balance")]
    pub per_class_total: Option<usize>,
}

/// Overrides for the separation block.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
pub struct SeparationFlags {
    #[arg(long, value_parser = kebab::<Objective>)]
    pub objective: Option<Objective>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
}

/// Overrides for the synthetic-corpus block.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
pub struct SyntheticFlags {
    #[arg(long, value_parser = kebab::<MixingProfile>)]
    pub profile: Option<MixingProfile>,
    #[arg(long)]
    pub n_sentences: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DevMode {
    /// Fit only the dev sentences' dense rows with everything else frozen.
    #[default]
    Frozen,
    /// Train on train and dev sentences together.
    Joint,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["manifest", "synthetic"]))]
pub struct TrainSepArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Train on a generated corpus with known factors.
    #[arg(long)]
    pub synthetic: bool,
    #[arg(long, requires = "manifest")]
    pub dev_manifest: Option<PathBuf>,
    #[arg(long, value_parser = kebab::<DevMode>, default_value = "frozen")]
    pub dev_mode: DevMode,
    /// Checkpoint directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub dense_dim: Option<usize>,
    #[command(flatten)]
    pub separation: SeparationFlags,
    #[command(flatten)]
    pub synthetic_flags: SyntheticFlags,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ExtractArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Restrict to (and group by) the sessions of this manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

/// Overrides for the MINE block.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
pub struct MineFlags {
    #[arg(long = "mine-epochs")]
    pub mine_epochs: Option<usize>,
    #[arg(long = "mine-batch-size")]
    pub mine_batch_size: Option<usize>,
    #[arg(long = "mine-lr")]
    pub mine_lr: Option<f64>,
    #[arg(long)]
    pub hidden: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct MineArgs {
    /// `[n, d]` tensor of dense vectors.
    #[arg(long)]
    pub dense: PathBuf,
    /// `[n, k]` tensor paired row by row with `--dense`.
    #[arg(long)]
    pub target: PathBuf,
    /// Summary JSON output.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch bound CSV.
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[command(flatten)]
    pub mine: MineFlags,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct FuseArgs {
    /// `[n, d]` speech vectors.
    #[arg(long)]
    pub speech: PathBuf,
    /// `[n, D]` text embeddings.
    #[arg(long)]
    pub text: PathBuf,
    /// Fused `[n, d + k]` tensor.
    #[arg(long)]
    pub out: PathBuf,
    /// Target width of the text part.
    #[arg(long)]
    pub reduce_dim: Option<usize>,
    #[arg(long, value_parser = kebab::<ReduceMethod>)]
    pub method: Option<ReduceMethod>,
    /// Fit the principal components on this `[m, D]` tensor instead of
    /// `--text` (e.g. the training split when fusing a dev split).
    #[arg(long)]
    pub fit_on: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub train_x: PathBuf,
    /// JSON array of 0/1 labels.
    #[arg(long)]
    pub train_y: PathBuf,
    #[arg(long, requires = "eval_y")]
    pub eval_x: Option<PathBuf>,
    #[arg(long, requires = "eval_x")]
    pub eval_y: Option<PathBuf>,
    /// Model JSON output.
    #[arg(long)]
    pub out: PathBuf,
    /// Metrics JSON output.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    #[arg(long = "c")]
    pub c: Option<f64>,
    #[arg(long)]
    pub svm_epochs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SearchArgs {
    #[arg(long)]
    pub train_x: PathBuf,
    #[arg(long)]
    pub train_y: PathBuf,
    #[arg(long)]
    pub eval_x: PathBuf,
    #[arg(long)]
    pub eval_y: PathBuf,
    /// Report JSON output.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub trials: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "name", content = "args", rename_all = "kebab-case")]
pub enum ExplainCommand {
    /// Leave-one-sentence-out decision shifts for one document.
    Importance(ImportanceArgs),
    /// Landmark-pair duration statistics and class comparison.
    Durations(DurationsArgs),
    /// Spread of an embedding matrix.
    Diversity(DiversityArgs),
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ImportanceArgs {
    /// SVM model JSON.
    #[arg(long)]
    pub model: PathBuf,
    /// `[n, d]` sentence vectors of one document.
    #[arg(long)]
    pub vectors: PathBuf,
    /// JSON array of sentence ids (default: s0, s1, ...).
    #[arg(long)]
    pub ids: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub top_k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct DurationsArgs {
    /// Landmark JSONL files of the depressed class.
    #[arg(long, num_args = 1.., required = true)]
    pub depressed: Vec<PathBuf>,
    /// Landmark JSONL files of the healthy class.
    #[arg(long, num_args = 1.., required = true)]
    pub healthy: Vec<PathBuf>,
    /// Pair labels to keep, comma separated (e.g. b--g+,p+-b-).
    #[arg(long, value_delimiter = ',')]
    pub filter: Vec<String>,
    /// Importance reports whose top-k sentences select the files to pool.
    #[arg(long, num_args = 1..)]
    pub importance: Vec<PathBuf>,
    /// Pool every file, ignoring importance reports.
    #[arg(long)]
    pub whole_session: bool,
    /// Statistics and comparisons JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Significant-bigram CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct DiversityArgs {
    /// `[n, d]` embedding matrix.
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct DemoArgs {
    /// Points per class.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Directory for the generated data and accuracies.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long = "c")]
    pub c: Option<f64>,
    #[arg(long)]
    pub svm_epochs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SweepArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [100, 200, 300, 400, 500])]
    pub dims: Vec<usize>,
    /// Train manifest; a synthetic corpus is generated when absent.
    #[arg(long, requires = "dev_manifest")]
    pub manifest: Option<PathBuf>,
    #[arg(long, requires = "manifest")]
    pub dev_manifest: Option<PathBuf>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[command(flatten)]
    pub separation: SeparationFlags,
    #[command(flatten)]
    pub synthetic_flags: SyntheticFlags,
    #[command(flatten)]
    pub mine: MineFlags,
}
