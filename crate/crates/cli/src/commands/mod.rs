mod analysis;
mod experiments;
mod pipeline;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use lsep_core::tensor::{read_tensor, write_tensor, Tensor};
use ndarray::Array2;
use serde::Serialize;

use crate::args::{Command, ExplainCommand};
use crate::config::RunConfig;

pub use experiments::{sweep_rows_csv, SweepRow, SweepSummary};

/// Tags library errors with the module that raised them.
pub(crate) trait InModule<T> {
    fn in_module(self, module: &str) -> anyhow::Result<T>;
}

impl<T> InModule<T> for lsep_core::Result<T> {
    fn in_module(self, module: &str) -> anyhow::Result<T> {
        self.map_err(|e| anyhow::anyhow!("{module}: {e}"))
    }
}

pub fn run(cfg: &RunConfig) -> anyhow::Result<()> {
    match &cfg.command {
        Command::Landmarks(a) => pipeline::landmarks(cfg, a),
        Command::Augment(a) => pipeline::augment(cfg, a),
        Command::TrainSep(a) => pipeline::train_sep(cfg, a),
        Command::Extract(a) => pipeline::extract(cfg, a),
        Command::Mine(a) => analysis::mine(cfg, a),
        Command::Fuse(a) => analysis::fuse(cfg, a),
        Command::Classify(a) => analysis::classify(cfg, a),
        Command::Search(a) => analysis::search(cfg, a),
        Command::Explain(ExplainCommand::Importance(a)) => analysis::importance(cfg, a),
        Command::Explain(ExplainCommand::Durations(a)) => analysis::durations(cfg, a),
        Command::Explain(ExplainCommand::Diversity(a)) => analysis::diversity(cfg, a),
        Command::DemoEntanglement(a) => experiments::demo(cfg, a),
        Command::SweepDim(a) => experiments::sweep(cfg, a),
    }
}

pub(crate) fn read_matrix(path: &Path) -> anyhow::Result<Array2<f64>> {
    read_tensor(path)
        .and_then(|t| t.to_array2())
        .in_module("tensor")
        .with_context(|| format!("reading {}", path.display()))
}

pub(crate) fn write_matrix(path: &Path, m: &Array2<f64>) -> anyhow::Result<()> {
    ensure_parent(path)?;
    write_tensor(&Tensor::from_matrix(m.view()).in_module("tensor")?, path).in_module("tensor")
}

/// Reads a JSON array of 0/1 labels.
pub(crate) fn read_labels(path: &Path) -> anyhow::Result<Vec<u8>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let labels: Vec<u8> =
        serde_json::from_str(&text).with_context(|| format!("parsing labels in {}", path.display()))?;
    if let Some(bad) = labels.iter().find(|&&l| l > 1) {
        bail!("{}: label {bad} is not 0 or 1", path.display());
    }
    Ok(labels)
}

pub(crate) fn signed(labels: &[u8]) -> Vec<f64> {
    labels.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect()
}

fn ensure_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

pub(crate) fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    ensure_parent(path)?;
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value).context("serializing output")? + "\n";
    write_text(path, &text)
}

pub(crate) fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// `<out>.run.json` next to a file artifact.
pub fn record_path_for_file(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".run.json");
    out.with_file_name(name)
}

pub(crate) fn write_record_for_file(cfg: &RunConfig, out: &Path) -> anyhow::Result<()> {
    write_text(&record_path_for_file(out), &cfg.record_json())
}

pub(crate) fn write_record_in_dir(cfg: &RunConfig, dir: &Path) -> anyhow::Result<()> {
    write_text(&dir.join("run.json"), &cfg.record_json())
}

/// File-system-safe rendering of an id.
pub(crate) fn file_stem_for(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}
