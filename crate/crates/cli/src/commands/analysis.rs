use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use lsep_core::classify::{
    accuracy, f1_score, fuse as fuse_parts, random_search, reduce_dim, train_svm, Pca,
    ReduceMethod, SvmModel,
};
use lsep_core::explain::{
    bigram_duration_stats, compare_classes, diversity_metrics, pooled_durations,
    sentence_importance, significant_bigrams_csv, ImportanceReport,
};
use lsep_core::landmark::LandmarkSequence;
use lsep_core::mine::estimate_mi;
use ndarray::{Array2, ArrayView2};
use serde_json::json;

use super::{
    read_labels, read_matrix, signed, write_json, write_matrix, write_record_for_file,
    write_text, InModule,
};
use crate::args::{
    ClassifyArgs, DiversityArgs, DurationsArgs, FuseArgs, ImportanceArgs, MineArgs, SearchArgs,
};
use crate::config::RunConfig;

pub(super) fn mine(cfg: &RunConfig, a: &MineArgs) -> anyhow::Result<()> {
    let v = read_matrix(&a.dense)?;
    let e = read_matrix(&a.target)?;
    let est = estimate_mi(v.view(), e.view(), &cfg.settings.mine).in_module("mine")?;
    write_json(&a.out, &est.summary_json())?;
    if let Some(path) = &a.history {
        write_text(path, &est.history_csv())?;
    }
    write_record_for_file(cfg, &a.out)?;
    println!("I = {:.6} nats", est.mi_nats);
    Ok(())
}

fn reduce_text(
    text: ArrayView2<'_, f64>,
    fit_on: Option<&Path>,
    k: usize,
    method: ReduceMethod,
) -> anyhow::Result<Array2<f64>> {
    match (method, fit_on) {
        (ReduceMethod::Pca, Some(path)) => {
            let basis = read_matrix(path)?;
            let pca = Pca::fit(basis.view(), k).in_module("classify")?;
            pca.transform(text).in_module("classify")
        }
        _ => reduce_dim(text, k, method).in_module("classify"),
    }
}

pub(super) fn fuse(cfg: &RunConfig, a: &FuseArgs) -> anyhow::Result<()> {
    let c = &cfg.settings.classify;
    let speech = read_matrix(&a.speech)?;
    let text = read_matrix(&a.text)?;
    if speech.nrows() != text.nrows() {
        bail!("fuse: {} speech rows but {} text rows", speech.nrows(), text.nrows());
    }
    let reduced = reduce_text(text.view(), a.fit_on.as_deref(), c.reduce_dim, c.method)?;
    let mut rows = Vec::with_capacity(speech.nrows());
    for (s, t) in speech.rows().into_iter().zip(reduced.rows()) {
        rows.push(fuse_parts(s, t).in_module("classify")?);
    }
    let width = speech.ncols() + reduced.ncols();
    let mut fused = Array2::zeros((rows.len(), width));
    for (mut out, f) in fused.rows_mut().into_iter().zip(&rows) {
        out.assign(&f.vector);
    }
    write_matrix(&a.out, &fused)?;
    let mut parts = a.out.file_name().unwrap_or_default().to_os_string();
    parts.push(".parts.json");
    write_json(
        &a.out.with_file_name(parts),
        &json!({"speech_dim": speech.ncols(), "text_dim": reduced.ncols(), "method": c.method}),
    )?;
    write_record_for_file(cfg, &a.out)?;
    println!("fused {} rows: {} speech + {} text columns", fused.nrows(), speech.ncols(), reduced.ncols());
    Ok(())
}

fn labeled(x: &Path, y: &Path) -> anyhow::Result<(Array2<f64>, Vec<f64>)> {
    let m = read_matrix(x)?;
    let labels = read_labels(y)?;
    if labels.len() != m.nrows() {
        bail!("{} has {} rows but {} has {} labels", x.display(), m.nrows(), y.display(), labels.len());
    }
    Ok((m, signed(&labels)))
}

pub(super) fn classify(cfg: &RunConfig, a: &ClassifyArgs) -> anyhow::Result<()> {
    let c = &cfg.settings.classify;
    let (x, y) = labeled(&a.train_x, &a.train_y)?;
    let model = train_svm(x.view(), &y, c.c, c.svm_epochs, cfg.seed).in_module("classify")?;
    let pred = model.predict(x.view()).in_module("classify")?;
    let mut metrics = json!({
        "train_accuracy": accuracy(&pred, &y),
        "train_f1": f1_score(&pred, &y).in_module("classify")?,
    });
    if let (Some(ex), Some(ey)) = (&a.eval_x, &a.eval_y) {
        let (xe, ye) = labeled(ex, ey)?;
        let pe = model.predict(xe.view()).in_module("classify")?;
        metrics["eval_accuracy"] = json!(accuracy(&pe, &ye));
        metrics["eval_f1"] = json!(f1_score(&pe, &ye).in_module("classify")?);
    }
    write_json(&a.out, &model)?;
    if let Some(path) = &a.metrics {
        write_json(path, &metrics)?;
    }
    write_record_for_file(cfg, &a.out)?;
    println!("{}", serde_json::to_string(&metrics)?);
    Ok(())
}

pub(super) fn search(cfg: &RunConfig, a: &SearchArgs) -> anyhow::Result<()> {
    let (x, y) = labeled(&a.train_x, &a.train_y)?;
    let (xe, ye) = labeled(&a.eval_x, &a.eval_y)?;
    let report = random_search(x.view(), &y, xe.view(), &ye, cfg.settings.classify.trials, cfg.seed)
        .in_module("classify")?;
    write_json(&a.out, &report)?;
    write_record_for_file(cfg, &a.out)?;
    println!(
        "F1 avg {:.4}, max {:.4}, std {:.4} over {} trials",
        report.f1_avg,
        report.f1_max,
        report.f1_std,
        report.trials.len()
    );
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub(super) fn importance(cfg: &RunConfig, a: &ImportanceArgs) -> anyhow::Result<()> {
    let model: SvmModel = read_json(&a.model)?;
    let vectors = read_matrix(&a.vectors)?;
    let ids: Vec<String> = match &a.ids {
        Some(path) => read_json(path)?,
        None => (0..vectors.nrows()).map(|i| format!("s{i}")).collect(),
    };
    let report = sentence_importance(&model, vectors.view(), &ids, cfg.settings.explain.top_k)
        .in_module("explain")?;
    write_json(&a.out, &report)?;
    write_record_for_file(cfg, &a.out)?;
    println!("top sentences: {}", report.top_k.join(", "));
    Ok(())
}

fn file_id(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Whether a landmark file belongs to one of the selected sentences. Sentence
/// ids may carry a `session/` prefix that file names cannot.
fn selected(keep: &BTreeSet<String>, stem: &str) -> bool {
    keep.iter().any(|id| id == stem || id.rsplit('/').next() == Some(stem))
}

fn load_class(files: &[PathBuf], keep: Option<&BTreeSet<String>>) -> anyhow::Result<Vec<LandmarkSequence>> {
    files
        .iter()
        .filter(|p| keep.is_none_or(|k| selected(k, &file_id(p))))
        .map(|p| {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            LandmarkSequence::from_jsonl(file_id(p), &text)
                .in_module("landmark")
                .with_context(|| format!("parsing {}", p.display()))
        })
        .collect()
}

pub(super) fn durations(cfg: &RunConfig, a: &DurationsArgs) -> anyhow::Result<()> {
    const FIRST: &str = "depressed";
    const SECOND: &str = "healthy";
    let keep = if a.whole_session || a.importance.is_empty() {
        None
    } else {
        let mut ids = BTreeSet::new();
        for path in &a.importance {
            let report: ImportanceReport = read_json(path)?;
            ids.extend(report.top_k);
        }
        Some(ids)
    };
    let mut by_class = BTreeMap::new();
    by_class.insert(FIRST.to_string(), load_class(&a.depressed, keep.as_ref())?);
    by_class.insert(SECOND.to_string(), load_class(&a.healthy, keep.as_ref())?);
    let filter = (!a.filter.is_empty()).then_some(a.filter.as_slice());
    let stats = bigram_duration_stats(&by_class, filter);
    let pooled = pooled_durations(&by_class, filter);
    let rows = compare_classes(&pooled[FIRST], &pooled[SECOND]).in_module("explain")?;
    let files: BTreeMap<&str, usize> = by_class.iter().map(|(k, v)| (k.as_str(), v.len())).collect();
    write_json(
        &a.out,
        &json!({"pooled_files": files, "stats": stats, "comparisons": rows}),
    )?;
    if let Some(path) = &a.csv {
        write_text(path, &significant_bigrams_csv(&rows, FIRST, SECOND))?;
    }
    write_record_for_file(cfg, &a.out)?;
    let significant = rows.iter().filter(|r| r.test.significant).count();
    println!("{} pair labels compared, {significant} significant", rows.len());
    Ok(())
}

pub(super) fn diversity(cfg: &RunConfig, a: &DiversityArgs) -> anyhow::Result<()> {
    let x = read_matrix(&a.embeddings)?;
    let metrics = diversity_metrics(x.view()).in_module("explain")?;
    write_json(&a.out, &metrics)?;
    write_record_for_file(cfg, &a.out)?;
    println!("{}", serde_json::to_string(&metrics)?);
    Ok(())
}
