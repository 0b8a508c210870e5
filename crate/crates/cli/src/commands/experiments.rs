use anyhow::Context;
use lsep_core::classify::{accuracy, mean_pool, random_search, train_svm};
use lsep_core::corpus_ops::{gen_entangled_demo, gen_synthetic_layers, SyntheticDataset};
use lsep_core::manifest::{load_manifest, SessionSet};
use lsep_core::mine::estimate_mi;
use lsep_core::separation::{
    extract_dense_vectors, fit_dense_rows, loss_history_csv, sentence_key, train, SentenceCorpus,
    TrainConfig,
};
use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{
    create_dir, signed, write_json, write_matrix, write_record_in_dir, write_text, InModule,
};
use crate::args::{DemoArgs, SweepArgs};
use crate::config::RunConfig;

pub(super) fn demo(cfg: &RunConfig, a: &DemoArgs) -> anyhow::Result<()> {
    let c = &cfg.settings.classify;
    let (independent, entangled) = gen_entangled_demo(a.n, cfg.seed).in_module("synthetic")?;
    let fit = |ds: &SyntheticDataset| -> anyhow::Result<f64> {
        let y = ds.signed_labels();
        let model = train_svm(ds.features.view(), &y, c.c, c.svm_epochs, cfg.seed).in_module("classify")?;
        Ok(accuracy(&model.predict(ds.features.view()).in_module("classify")?, &y))
    };
    let acc_independent = fit(&independent)?;
    let acc_entangled = fit(&entangled)?;
    println!("independent accuracy: {acc_independent:.4}");
    println!("entangled accuracy: {acc_entangled:.4}");
    if let Some(dir) = &a.out {
        create_dir(dir)?;
        for ds in [&independent, &entangled] {
            let name = match ds.variant {
                lsep_core::corpus_ops::DemoVariant::Independent => "independent",
                lsep_core::corpus_ops::DemoVariant::Entangled => "entangled",
            };
            write_matrix(&dir.join(format!("{name}.ften")), &ds.features)?;
            write_json(&dir.join(format!("{name}_labels.json")), &ds.labels)?;
            write_json(&dir.join(format!("{name}_latents.json")), &ds.latent_json())?;
        }
        write_json(
            &dir.join("accuracy.json"),
            &json!({"independent": acc_independent, "entangled": acc_entangled}),
        )?;
        write_record_in_dir(cfg, dir)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub d: usize,
    pub mi: f64,
    pub f1_avg: f64,
    pub f1_max: f64,
    pub f1_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub rows: Vec<SweepRow>,
    /// Dimension with the smallest MI estimate.
    pub min_mi_dim: usize,
    /// Dimension with the largest average F1.
    pub best_f1_dim: usize,
    /// Best average F1 minus the average F1 at `min_mi_dim`.
    pub f1_gap: f64,
}

impl SweepSummary {
    pub fn from_rows(rows: Vec<SweepRow>) -> Option<Self> {
        let min_mi = rows.iter().min_by(|a, b| a.mi.total_cmp(&b.mi))?.clone();
        let best = rows.iter().max_by(|a, b| a.f1_avg.total_cmp(&b.f1_avg))?.clone();
        Some(Self {
            min_mi_dim: min_mi.d,
            best_f1_dim: best.d,
            f1_gap: best.f1_avg - min_mi.f1_avg,
            rows,
        })
    }
}

pub fn sweep_rows_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("d,mi,f1_avg,f1_max,f1_std\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{},{}\n", r.d, r.mi, r.f1_avg, r.f1_max, r.f1_std));
    }
    out
}

/// Everything one sweep point needs besides the dimension.
struct SweepData {
    corpus: SentenceCorpus,
    /// Sentence embeddings of `corpus`, the MI target.
    embeddings: Array2<f64>,
    task: Task,
}

enum Task {
    /// Sentence-level labels; even rows train, odd rows evaluate.
    Sentences { labels: Vec<u8> },
    /// Session-level labels on mean-pooled vectors; dev rows are fitted with
    /// the rest of the model frozen.
    Sessions {
        train: SessionSet,
        dev: SessionSet,
        dev_corpus: SentenceCorpus,
    },
}

fn embeddings_of(corpus: &SentenceCorpus) -> Array2<f64> {
    let mut out = Array2::zeros((corpus.len(), corpus.embedding_dim()));
    for (mut row, s) in out.rows_mut().into_iter().zip(corpus.sentences()) {
        row.assign(&s.embedding);
    }
    out
}

fn pooled_sessions(
    model: &lsep_core::separation::SeparationModel,
    set: &SessionSet,
) -> anyhow::Result<(Array2<f64>, Vec<f64>)> {
    let mut out = Array2::zeros((set.sessions.len(), model.dense_dim()));
    for (mut row, session) in out.rows_mut().into_iter().zip(&set.sessions) {
        let ids: Vec<String> =
            session.utterances.iter().map(|u| sentence_key(&session.id, &u.id)).collect();
        let ext = extract_dense_vectors(model, &ids).in_module("separation")?;
        row.assign(&mean_pool(ext.vectors.view()).in_module("classify")?);
    }
    let labels: Vec<u8> = set.sessions.iter().map(|s| s.label).collect();
    Ok((out, signed(&labels)))
}

fn split_rows(x: &Array2<f64>, labels: &[u8]) -> (Array2<f64>, Vec<f64>, Array2<f64>, Vec<f64>) {
    let even: Vec<usize> = (0..x.nrows()).step_by(2).collect();
    let odd: Vec<usize> = (1..x.nrows()).step_by(2).collect();
    let y = signed(labels);
    let pick = |idx: &[usize]| idx.iter().map(|&i| y[i]).collect::<Vec<_>>();
    (
        x.select(Axis(0), &even),
        pick(&even),
        x.select(Axis(0), &odd),
        pick(&odd),
    )
}

fn sweep_point(cfg: &RunConfig, data: &SweepData, d: usize, dir: &std::path::Path) -> anyhow::Result<SweepRow> {
    let s = &cfg.settings;
    let tc = TrainConfig {
        dense_dim: d,
        ..s.separation.clone()
    };
    let (model, history) = train(&data.corpus, &tc).in_module("separation")?;
    write_text(&dir.join(format!("loss_d{d}.csv")), &loss_history_csv(&history))?;
    let v = extract_dense_vectors(&model, &data.corpus.ids()).in_module("separation")?.vectors;
    let mi = estimate_mi(v.view(), data.embeddings.view(), &s.mine).in_module("mine")?;
    let (xt, yt, xe, ye) = match &data.task {
        Task::Sentences { labels } => split_rows(&v, labels),
        Task::Sessions { train, dev, dev_corpus } => {
            let (extended, _) = fit_dense_rows(&model, dev_corpus, &tc).in_module("separation")?;
            let (xt, yt) = pooled_sessions(&extended, train)?;
            let (xe, ye) = pooled_sessions(&extended, dev)?;
            (xt, yt, xe, ye)
        }
    };
    let report = random_search(xt.view(), &yt, xe.view(), &ye, s.classify.trials, cfg.seed)
        .in_module("classify")?;
    Ok(SweepRow {
        d,
        mi: mi.mi_nats,
        f1_avg: report.f1_avg,
        f1_max: report.f1_max,
        f1_std: report.f1_std,
    })
}

pub(super) fn sweep(cfg: &RunConfig, a: &SweepArgs) -> anyhow::Result<()> {
    create_dir(&a.out)?;
    let data = match (&a.manifest, &a.dev_manifest) {
        (Some(train_path), Some(dev_path)) => {
            let train = load_manifest(train_path).in_module("manifest")?;
            let dev = load_manifest(dev_path).in_module("manifest")?;
            let corpus = SentenceCorpus::from_sessions(&train)
                .in_module("separation")
                .with_context(|| format!("building sentences from {}", train_path.display()))?;
            let dev_corpus = SentenceCorpus::from_sessions(&dev)
                .in_module("separation")
                .with_context(|| format!("building sentences from {}", dev_path.display()))?;
            SweepData {
                embeddings: embeddings_of(&corpus),
                corpus,
                task: Task::Sessions { train, dev, dev_corpus },
            }
        }
        _ => {
            let syn = gen_synthetic_layers(&cfg.settings.synthetic).in_module("synthetic")?;
            let corpus = syn.to_sentence_corpus().in_module("synthetic")?;
            SweepData {
                embeddings: syn.embeddings.clone(),
                corpus,
                task: Task::Sentences { labels: syn.labels.clone() },
            }
        }
    };
    let mut rows = Vec::with_capacity(a.dims.len());
    for &d in &a.dims {
        let row = sweep_point(cfg, &data, d, &a.out)?;
        println!(
            "d = {d}: MI {:.4} nats, F1 avg {:.4} max {:.4} std {:.4}",
            row.mi, row.f1_avg, row.f1_max, row.f1_std
        );
        rows.push(row);
    }
    write_text(&a.out.join("sweep.csv"), &sweep_rows_csv(&rows))?;
    let summary = SweepSummary::from_rows(rows).context("no dimensions to sweep")?;
    write_json(&a.out.join("summary.json"), &summary)?;
    write_record_in_dir(cfg, &a.out)?;
    println!(
        "minimum MI at d = {}, best F1 at d = {} (gap {:.4})",
        summary.min_mi_dim, summary.best_f1_dim, summary.f1_gap
    );
    Ok(())
}
