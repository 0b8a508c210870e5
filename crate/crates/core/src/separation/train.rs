use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::corpus::SentenceCorpus;
use super::grad::{loss_and_gradients, Gradients, SampleRef};
use super::loss::Objective;
use super::model::SeparationModel;
use crate::error::{Error, Result};
use crate::optim::{AdamConfig, AdamState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub objective: Objective,
    pub temperature: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub dense_dim: usize,
    pub leaky_slope: f64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: Objective::SpeechPreserve,
            temperature: 0.1,
            batch_size: 64,
            epochs: 1500,
            seed: 0,
            dense_dim: 300,
            leaky_slope: 0.01,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::Validation("temperature must be positive".into()));
        }
        if self.dense_dim == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Validation(
                "dense_dim, epochs and batch_size must be at least 1".into(),
            ));
        }
        if !(self.adam.lr > 0.0) {
            return Err(Error::Validation("learning rate must be positive".into()));
        }
        Ok(())
    }
}

struct Optimizer {
    cfg: AdamConfig,
    step: u64,
    logits: AdamState,
    w_speech: AdamState,
    b_speech: AdamState,
    w_sentence: AdamState,
    b_sentence: AdamState,
    dense: AdamState,
    /// Rows `dense_from..` of the dense table are trainable.
    dense_from: usize,
    freeze_shared: bool,
}

impl Optimizer {
    fn new(model: &SeparationModel, cfg: AdamConfig, dense_from: usize, freeze_shared: bool) -> Self {
        let d = model.dense_dim();
        Self {
            cfg,
            step: 0,
            logits: AdamState::new(model.layer_logits.len()),
            w_speech: AdamState::new(model.w_speech.len()),
            b_speech: AdamState::new(model.b_speech.len()),
            w_sentence: AdamState::new(model.w_sentence.len()),
            b_sentence: AdamState::new(model.b_sentence.len()),
            dense: AdamState::new((model.dense.nrows() - dense_from) * d),
            dense_from,
            freeze_shared,
        }
    }

    fn apply(&mut self, model: &mut SeparationModel, g: &Gradients) {
        self.step += 1;
        let t = self.step;
        let cfg = self.cfg;
        if !self.freeze_shared {
            self.logits.step(&cfg, t, slice_mut1(&mut model.layer_logits), slice1(&g.layer_logits));
            self.w_speech.step(&cfg, t, slice_mut2(&mut model.w_speech), slice2(&g.w_speech));
            self.b_speech.step(&cfg, t, slice_mut1(&mut model.b_speech), slice1(&g.b_speech));
            self.w_sentence.step(&cfg, t, slice_mut2(&mut model.w_sentence), slice2(&g.w_sentence));
            self.b_sentence.step(&cfg, t, slice_mut1(&mut model.b_sentence), slice1(&g.b_sentence));
        }
        let d = model.dense_dim();
        let rows = model.dense.nrows() - self.dense_from;
        let mut dense_grad = vec![0.0; rows * d];
        for (&row, gr) in &g.dense_rows {
            if row >= self.dense_from {
                let at = (row - self.dense_from) * d;
                dense_grad[at..at + d].copy_from_slice(slice1(gr));
            }
        }
        let flat = model
            .dense
            .as_slice_mut()
            .expect("dense table is contiguous");
        self.dense.step(&cfg, t, &mut flat[self.dense_from * d..], &dense_grad);
    }
}

fn slice1(a: &Array1<f64>) -> &[f64] {
    a.as_slice().expect("contiguous")
}

fn slice2(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("contiguous")
}

fn slice_mut1(a: &mut Array1<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("contiguous")
}

fn slice_mut2(a: &mut Array2<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("contiguous")
}

fn run_epochs(
    model: &mut SeparationModel,
    corpus: &SentenceCorpus,
    samples: &[SampleRef],
    cfg: &TrainConfig,
    opt: &mut Optimizer,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(rng);
        let mut sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<SampleRef> = chunk.iter().map(|&i| samples[i]).collect();
            let (loss, g) = loss_and_gradients(model, corpus, &batch, cfg.objective, cfg.temperature)
                .map_err(|e| match e {
                    Error::DegenerateSimilarity(d) => Error::Divergence { epoch, detail: d },
                    other => other,
                })?;
            sum += loss * batch.len() as f64;
            opt.apply(model, &g);
        }
        let mean = sum / samples.len() as f64;
        if !mean.is_finite() || !model.is_finite() {
            return Err(Error::Divergence {
                epoch,
                detail: format!("mean loss {mean}"),
            });
        }
        history.push(mean);
    }
    Ok(history)
}

/// Trains a fresh model over every sentence of `corpus`. Returns the model
/// and the per-epoch mean loss.
pub fn train(corpus: &SentenceCorpus, cfg: &TrainConfig) -> Result<(SeparationModel, Vec<f64>)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = SeparationModel::init(
        corpus.n_layers(),
        corpus.layer_dim(),
        corpus.embedding_dim(),
        cfg.dense_dim,
        corpus.ids(),
        cfg.leaky_slope,
        &mut rng,
    )?;
    let samples: Vec<SampleRef> = (0..corpus.len()).map(|i| (i, i)).collect();
    let mut opt = Optimizer::new(&model, cfg.adam, 0, false);
    let history = run_epochs(&mut model, corpus, &samples, cfg, &mut opt, &mut rng)?;
    Ok((model, history))
}

/// Adds dense rows for the sentences of `corpus` (e.g. a held-out split) and
/// optimizes only those rows; layer weights and projections stay frozen.
pub fn fit_dense_rows(
    model: &SeparationModel,
    corpus: &SentenceCorpus,
    cfg: &TrainConfig,
) -> Result<(SeparationModel, Vec<f64>)> {
    cfg.validate()?;
    if corpus.n_layers() != model.n_layers()
        || corpus.layer_dim() != model.layer_dim()
        || corpus.embedding_dim() != model.embedding_dim()
    {
        return Err(Error::Shape("corpus feature dims differ from the model's".into()));
    }
    let ids = corpus.ids();
    if let Some(dup) = ids.iter().find(|id| model.row_of(id).is_some()) {
        return Err(Error::Schema(format!("sentence {dup} already has a dense row")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let base = model.dense.nrows();
    let mut extended = model.with_extra_rows(&ids, &mut rng)?;
    let samples: Vec<SampleRef> = (0..corpus.len()).map(|i| (i, base + i)).collect();
    let mut opt = Optimizer::new(&extended, cfg.adam, base, true);
    let history = run_epochs(&mut extended, corpus, &samples, cfg, &mut opt, &mut rng)?;
    Ok((extended, history))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseExtraction {
    pub ids: Vec<String>,
    /// One row per requested id.
    pub vectors: Array2<f64>,
    pub alpha: Array1<f64>,
}

pub fn extract_dense_vectors(model: &SeparationModel, ids: &[String]) -> Result<DenseExtraction> {
    let mut vectors = Array2::zeros((ids.len(), model.dense_dim()));
    for (i, id) in ids.iter().enumerate() {
        let row = model.row_of(id).ok_or_else(|| Error::MissingRow(id.clone()))?;
        vectors.row_mut(i).assign(&model.dense.row(row));
    }
    Ok(DenseExtraction {
        ids: ids.to_vec(),
        vectors,
        alpha: model.alpha(),
    })
}

pub fn loss_history_csv(history: &[f64]) -> String {
    let mut out = String::from("epoch,mean_loss\n");
    for (i, l) in history.iter().enumerate() {
        out.push_str(&format!("{},{l}\n", i + 1));
    }
    out
}
