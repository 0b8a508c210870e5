//! Effective run configuration: documented defaults, then the JSON config
//! file, then command-line flags.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use lsep_core::classify::ReduceMethod;
use lsep_core::corpus_ops::{SubdialogueConfig, SyntheticLayerConfig};
use lsep_core::dsp::FrontendConfig;
use lsep_core::explain::DEFAULT_TOP_K;
use lsep_core::landmark::DetectorConfig;
use lsep_core::mine::MineConfig;
use lsep_core::separation::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::args::{
    Cli, Command, ExplainCommand, MineFlags, SeparationFlags, SyntheticFlags,
};

pub const CONFIG_ENV: &str = "LSEP_CONFIG";
pub const TOOL: &str = "lsep";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifyConfig {
    pub c: f64,
    pub svm_epochs: usize,
    pub trials: usize,
    pub reduce_dim: usize,
    pub method: ReduceMethod,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            svm_epochs: 500,
            trials: 10,
            reduce_dim: 300,
            method: ReduceMethod::Pca,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainConfig {
    pub top_k: usize,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self { top_k: DEFAULT_TOP_K }
    }
}

/// Contents of a config file. Unknown keys are ignored, so a run record is
/// itself a valid config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub frontend: FrontendConfig,
    pub detector: DetectorConfig,
    pub augmentation: SubdialogueConfig,
    pub separation: TrainConfig,
    pub synthetic: SyntheticLayerConfig,
    pub mine: MineConfig,
    pub classify: ClassifyConfig,
    pub explain: ExplainConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub seed: u64,
    /// Every parameter block after precedence has been applied.
    pub settings: FileConfig,
}

#[derive(Debug, Serialize, Deserialize)]
struct RunRecord {
    tool: String,
    version: String,
    command: Command,
    #[serde(flatten)]
    settings: FileConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum UsageError {
    #[error(transparent)]
    Clap(#[from] clap::Error),
    #[error("config {path}: {detail}")]
    Config { path: PathBuf, detail: String },
}

impl UsageError {
    /// 0 for `--help`/`--version`, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            UsageError::Clap(e) => e.exit_code(),
            UsageError::Config { .. } => 2,
        }
    }
}

/// Parses `argv` (including the program name), falling back to
/// `$LSEP_CONFIG` when `--config` is absent.
pub fn parse_args<I, T>(argv: I) -> Result<RunConfig, UsageError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let env_config = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
    parse_args_with(argv, env_config)
}

/// [`parse_args`] with an explicit fallback config path.
pub fn parse_args_with<I, T>(argv: I, default_config: Option<PathBuf>) -> Result<RunConfig, UsageError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv)?;
    let file = match cli.config.or(default_config) {
        Some(path) => load_config(&path)?,
        None => FileConfig::default(),
    };
    Ok(resolve(cli.command, cli.seed, file))
}

pub fn load_config(path: &Path) -> Result<FileConfig, UsageError> {
    let err = |detail: String| UsageError::Config {
        path: path.to_owned(),
        detail,
    };
    let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| err(e.to_string()))
}

/// Rebuilds the configuration a run record was written from.
pub fn from_record(text: &str) -> serde_json::Result<RunConfig> {
    let record: RunRecord = serde_json::from_str(text)?;
    let seed = record.settings.seed.unwrap_or(0);
    Ok(RunConfig {
        command: record.command,
        seed,
        settings: record.settings,
    })
}

impl RunConfig {
    pub fn record_json(&self) -> String {
        let record = RunRecord {
            tool: TOOL.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: self.command.clone(),
            settings: self.settings.clone(),
        };
        serde_json::to_string_pretty(&record).expect("run record serializes") + "\n"
    }
}

fn set<T>(slot: &mut T, flag: &Option<T>)
where
    T: Clone,
{
    if let Some(v) = flag {
        *slot = v.clone();
    }
}

fn apply_separation(cfg: &mut TrainConfig, flags: &SeparationFlags) {
    set(&mut cfg.objective, &flags.objective);
    set(&mut cfg.temperature, &flags.temperature);
    set(&mut cfg.epochs, &flags.epochs);
    set(&mut cfg.batch_size, &flags.batch_size);
    set(&mut cfg.adam.lr, &flags.lr);
}

fn apply_synthetic(cfg: &mut SyntheticLayerConfig, flags: &SyntheticFlags) {
    set(&mut cfg.profile, &flags.profile);
    set(&mut cfg.n_sentences, &flags.n_sentences);
    set(&mut cfg.noise, &flags.noise);
}

fn apply_mine(cfg: &mut MineConfig, flags: &MineFlags) {
    set(&mut cfg.epochs, &flags.mine_epochs);
    set(&mut cfg.batch_size, &flags.mine_batch_size);
    set(&mut cfg.lr, &flags.mine_lr);
    set(&mut cfg.hidden, &flags.hidden);
}

/// Applies flag precedence. The effective seed is copied into every block
/// that has one.
pub fn resolve(command: Command, seed_flag: Option<u64>, mut s: FileConfig) -> RunConfig {
    let seed = seed_flag.or(s.seed).unwrap_or(0);
    s.seed = Some(seed);
    s.augmentation.seed = seed;
    s.separation.seed = seed;
    s.synthetic.seed = seed;
    s.mine.seed = seed;

    match &command {
        Command::Landmarks(a) => {
            if a.single_stage {
                s.detector.two_stage = false;
            }
            set(&mut s.detector.glottal_db, &a.glottal_db);
            set(&mut s.detector.burst_db, &a.burst_db);
            set(&mut s.detector.syllabic_db, &a.syllabic_db);
            set(&mut s.detector.frication_db, &a.frication_db);
        }
        Command::Augment(a) => {
            set(&mut s.augmentation.samples, &a.samples);
            set(&mut s.augmentation.min_len, &a.min_len);
            if a.max_len.is_some() {
                s.augmentation.max_len = a.max_len;
            }
        }
        Command::TrainSep(a) => {
            set(&mut s.separation.dense_dim, &a.dense_dim);
            apply_separation(&mut s.separation, &a.separation);
            apply_synthetic(&mut s.synthetic, &a.synthetic_flags);
        }
        Command::Mine(a) => apply_mine(&mut s.mine, &a.mine),
        Command::Fuse(a) => {
            set(&mut s.classify.reduce_dim, &a.reduce_dim);
            set(&mut s.classify.method, &a.method);
        }
        Command::Classify(a) => {
            set(&mut s.classify.c, &a.c);
            set(&mut s.classify.svm_epochs, &a.svm_epochs);
        }
        Command::Search(a) => set(&mut s.classify.trials, &a.trials),
        Command::Explain(ExplainCommand::Importance(a)) => set(&mut s.explain.top_k, &a.top_k),
        Command::DemoEntanglement(a) => {
            set(&mut s.classify.c, &a.c);
            set(&mut s.classify.svm_epochs, &a.svm_epochs);
        }
        Command::SweepDim(a) => {
            apply_separation(&mut s.separation, &a.separation);
            apply_synthetic(&mut s.synthetic, &a.synthetic_flags);
            apply_mine(&mut s.mine, &a.mine);
            set(&mut s.classify.trials, &a.trials);
        }
        Command::Extract(_)
        | Command::Explain(ExplainCommand::Durations(_))
        | Command::Explain(ExplainCommand::Diversity(_)) => {}
    }
    RunConfig {
        command,
        seed,
        settings: s,
    }
}
