use std::path::Path;

use anyhow::{bail, Context};
use lsep_core::classify::mean_pool;
use lsep_core::corpus_ops::{
    balance_classes, gen_synthetic_layers, sample_subdialogues, spans_to_jsonl,
};
use lsep_core::dsp::decode_wav;
use lsep_core::landmark::{bigrams_to_jsonl, detect_landmarks, to_bigrams};
use lsep_core::manifest::{load_manifest, SessionSet};
use lsep_core::separation::{
    extract_dense_vectors, fit_dense_rows, load_checkpoint, loss_history_csv, save_checkpoint,
    sentence_key, train, SentenceCorpus, TrainConfig,
};
use lsep_core::tensor::read_tensor;
use ndarray::{Array2, Axis};
use serde_json::json;

use super::{
    create_dir, file_stem_for, write_json, write_matrix, write_record_for_file,
    write_record_in_dir, write_text, InModule,
};
use crate::args::{AugmentArgs, DevMode, ExtractArgs, LandmarksArgs, TrainSepArgs};
use crate::config::RunConfig;

pub(super) fn landmarks(cfg: &RunConfig, a: &LandmarksArgs) -> anyhow::Result<()> {
    let s = &cfg.settings;
    let audio = decode_wav(&a.input).in_module("dsp")?;
    let id = a
        .input
        .file_stem()
        .map(|x| x.to_string_lossy().into_owned())
        .unwrap_or_default();
    let seq = detect_landmarks(&id, &audio, &s.frontend, &s.detector).in_module("landmark")?;
    write_text(&a.out, &seq.to_jsonl())?;
    if let Some(path) = &a.bigrams {
        write_text(path, &bigrams_to_jsonl(&to_bigrams(&seq, a.bigram_mode)))?;
    }
    write_record_for_file(cfg, &a.out)?;
    println!("{} landmarks -> {}", seq.len(), a.out.display());
    Ok(())
}

pub(super) fn augment(cfg: &RunConfig, a: &AugmentArgs) -> anyhow::Result<()> {
    let base = &cfg.settings.augmentation;
    let set = load_manifest(&a.manifest).in_module("manifest")?;
    let quotas = if a.balance {
        Some(balance_classes(&set, base, a.per_class_total).in_module("augmentation")?)
    } else {
        None
    };
    let mut out = String::new();
    let mut total = 0;
    for session in &set.sessions {
        let mut session_cfg = base.clone();
        if let Some(q) = &quotas {
            session_cfg.samples = q[&session.id];
        }
        let spans = sample_subdialogues(session, &session_cfg).in_module("augmentation")?;
        total += spans.len();
        out.push_str(&spans_to_jsonl(&session.id, &spans));
    }
    write_text(&a.out, &out)?;
    write_record_for_file(cfg, &a.out)?;
    println!("{total} spans from {} sessions -> {}", set.sessions.len(), a.out.display());
    Ok(())
}

fn manifest_corpus(path: &Path) -> anyhow::Result<(SessionSet, SentenceCorpus)> {
    let set = load_manifest(path).in_module("manifest")?;
    let corpus = SentenceCorpus::from_sessions(&set)
        .in_module("separation")
        .with_context(|| format!("building sentences from {}", path.display()))?;
    Ok((set, corpus))
}

fn save(dir: &Path, model: &lsep_core::separation::SeparationModel, tc: &TrainConfig) -> anyhow::Result<()> {
    save_checkpoint(model, tc.objective, tc.temperature, tc.seed, dir).in_module("separation")?;
    Ok(())
}

pub(super) fn train_sep(cfg: &RunConfig, a: &TrainSepArgs) -> anyhow::Result<()> {
    let tc = &cfg.settings.separation;
    create_dir(&a.out)?;
    let (model, history) = if a.synthetic {
        let syn = gen_synthetic_layers(&cfg.settings.synthetic).in_module("synthetic")?;
        write_json(&a.out.join("latents.json"), &syn.latent_json())?;
        let corpus = syn.to_sentence_corpus().in_module("synthetic")?;
        train(&corpus, tc).in_module("separation")?
    } else {
        let Some(manifest) = &a.manifest else {
            bail!("either --manifest or --synthetic is required");
        };
        let (_, corpus) = manifest_corpus(manifest)?;
        match (&a.dev_manifest, a.dev_mode) {
            (None, _) => train(&corpus, tc).in_module("separation")?,
            (Some(dev), DevMode::Frozen) => {
                let (_, dev_corpus) = manifest_corpus(dev)?;
                let (model, history) = train(&corpus, tc).in_module("separation")?;
                let (extended, dev_history) =
                    fit_dense_rows(&model, &dev_corpus, tc).in_module("separation")?;
                write_text(&a.out.join("dev_loss.csv"), &loss_history_csv(&dev_history))?;
                (extended, history)
            }
            (Some(dev), DevMode::Joint) => {
                let (_, dev_corpus) = manifest_corpus(dev)?;
                let joint = corpus.sentences().iter().chain(dev_corpus.sentences()).cloned().collect();
                let corpus = SentenceCorpus::new(joint).in_module("separation")?;
                train(&corpus, tc).in_module("separation")?
            }
        }
    };
    save(&a.out, &model, tc)?;
    write_text(&a.out.join("loss.csv"), &loss_history_csv(&history))?;
    write_record_in_dir(cfg, &a.out)?;
    let alpha: Vec<String> = model.alpha().iter().map(|w| format!("{w:.3}")).collect();
    println!(
        "trained {} dense rows (d = {}), final loss {:.6}, layer weights [{}]",
        model.dense.nrows(),
        model.dense_dim(),
        history.last().copied().unwrap_or(f64::NAN),
        alpha.join(", ")
    );
    Ok(())
}

/// Mean of token rows for rank-2 embeddings; rank-1 tensors are taken as is.
fn pooled_embedding(path: &Path) -> anyhow::Result<Vec<f64>> {
    let t = read_tensor(path).in_module("tensor")?;
    match t.dims().len() {
        1 => Ok(t.to_vec_f64()),
        2 => Ok(mean_pool(t.to_array2().in_module("tensor")?.view()).in_module("classify")?.to_vec()),
        _ => bail!("{}: expected [D] or [T, D], got {:?}", path.display(), t.dims()),
    }
}

fn stack_rows(rows: &[Vec<f64>]) -> anyhow::Result<Array2<f64>> {
    let width = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != width) {
        bail!("rows differ in width");
    }
    Ok(Array2::from_shape_vec((rows.len(), width), rows.concat())?)
}

pub(super) fn extract(cfg: &RunConfig, a: &ExtractArgs) -> anyhow::Result<()> {
    let (model, _) = load_checkpoint(&a.checkpoint).in_module("separation")?;
    create_dir(&a.out)?;
    let alpha = model.alpha();
    let mut alpha_csv = String::from("layer,weight\n");
    for (l, w) in alpha.iter().enumerate() {
        alpha_csv.push_str(&format!("{l},{w}\n"));
    }
    write_text(&a.out.join("alpha.csv"), &alpha_csv)?;

    let ids: Vec<String> = match &a.manifest {
        None => model.sentence_ids.clone(),
        Some(path) => {
            let set = load_manifest(path).in_module("manifest")?;
            let mut pooled = Vec::with_capacity(set.sessions.len());
            let mut llm = Vec::new();
            let mut all_ids = Vec::new();
            for session in &set.sessions {
                let ids: Vec<String> =
                    session.utterances.iter().map(|u| sentence_key(&session.id, &u.id)).collect();
                let ext = extract_dense_vectors(&model, &ids).in_module("separation")?;
                write_matrix(
                    &a.out.join("sessions").join(format!("{}.ften", file_stem_for(&session.id))),
                    &ext.vectors,
                )?;
                pooled.push(mean_pool(ext.vectors.view()).in_module("classify")?.to_vec());
                if let Some(p) = &session.llm_emb {
                    llm.push(pooled_embedding(p)?);
                }
                all_ids.extend(ids);
            }
            write_matrix(&a.out.join("pooled.ften"), &stack_rows(&pooled)?)?;
            if !llm.is_empty() {
                if llm.len() != set.sessions.len() {
                    bail!("only {} of {} sessions have LLM embeddings", llm.len(), set.sessions.len());
                }
                write_matrix(&a.out.join("llm.ften"), &stack_rows(&llm)?)?;
            }
            let labels: Vec<u8> = set.sessions.iter().map(|s| s.label).collect();
            let sessions: Vec<&str> = set.sessions.iter().map(|s| s.id.as_str()).collect();
            write_json(&a.out.join("labels.json"), &labels)?;
            write_json(&a.out.join("sessions.json"), &sessions)?;
            all_ids
        }
    };
    let ext = extract_dense_vectors(&model, &ids).in_module("separation")?;
    write_matrix(&a.out.join("vectors.ften"), &ext.vectors)?;
    write_json(&a.out.join("ids.json"), &ext.ids)?;
    write_json(
        &a.out.join("summary.json"),
        &json!({
            "rows": ext.vectors.len_of(Axis(0)),
            "dense_dim": model.dense_dim(),
            "alpha": alpha.to_vec(),
        }),
    )?;
    write_record_in_dir(cfg, &a.out)?;
    println!("{} dense vectors -> {}", ids.len(), a.out.display());
    Ok(())
}
