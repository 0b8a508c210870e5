//! Analytic gradients of the batch-mean separation loss.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView1};

use super::corpus::SentenceCorpus;
use super::loss::{sample_loss, sample_loss_grad, Objective};
use super::model::{SeparationModel, SimilarityPair};
use crate::error::{Error, Result};

/// Gradients for every parameter group. Dense-vector gradients are kept
/// only for the rows a batch touched.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layer_logits: Array1<f64>,
    pub w_speech: Array2<f64>,
    pub b_speech: Array1<f64>,
    pub w_sentence: Array2<f64>,
    pub b_sentence: Array1<f64>,
    pub dense_rows: BTreeMap<usize, Array1<f64>>,
}

impl Gradients {
    fn zeros(model: &SeparationModel) -> Self {
        Self {
            layer_logits: Array1::zeros(model.layer_logits.len()),
            w_speech: Array2::zeros(model.w_speech.dim()),
            b_speech: Array1::zeros(model.b_speech.len()),
            w_sentence: Array2::zeros(model.w_sentence.dim()),
            b_sentence: Array1::zeros(model.b_sentence.len()),
            dense_rows: BTreeMap::new(),
        }
    }
}

/// A sample is `(corpus sentence index, dense row index)`.
pub type SampleRef = (usize, usize);

struct Cos {
    value: f64,
    d_v: Array1<f64>,
    d_z: Array1<f64>,
}

fn cos_with_grad(v: ArrayView1<'_, f64>, z: ArrayView1<'_, f64>) -> Result<Cos> {
    let nv = v.dot(&v).sqrt();
    let nz = z.dot(&z).sqrt();
    if nv == 0.0 || nz == 0.0 {
        return Err(Error::DegenerateSimilarity("zero-norm dense vector or projection".into()));
    }
    let value = v.dot(&z) / (nv * nz);
    let d_v = &z / (nv * nz) - &v * (value / (nv * nv));
    let d_z = &v / (nv * nz) - &z * (value / (nz * nz));
    Ok(Cos { value, d_v, d_z })
}

/// Batch-mean loss and its gradients.
pub fn loss_and_gradients(
    model: &SeparationModel,
    corpus: &SentenceCorpus,
    batch: &[SampleRef],
    objective: Objective,
    tau: f64,
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::Precondition("empty batch".into()));
    }
    let alpha = model.alpha();
    let scale = 1.0 / batch.len() as f64;
    let mut g = Gradients::zeros(model);
    let mut g_alpha = Array1::<f64>::zeros(alpha.len());
    let mut total = 0.0;

    for &(si, row) in batch {
        let sentence = corpus.get(si);
        let v = model.dense.row(row);
        let h = alpha.dot(&sentence.layers);
        let a_sp = model.speech_preactivation(h.view());
        let z_sp = a_sp.mapv(|x| model.leaky(x));
        let a_se = model.sentence_preactivation(sentence.embedding.view());
        let z_se = a_se.mapv(|x| model.leaky(x));

        let c_sp = cos_with_grad(v, z_sp.view())?;
        let c_se = cos_with_grad(v, z_se.view())?;
        let pair = SimilarityPair {
            sim_speech: c_sp.value,
            sim_sentence: c_se.value,
        };
        total += sample_loss(pair, objective, tau);
        let (d_sp, d_se) = sample_loss_grad(pair, objective, tau);
        let (d_sp, d_se) = (d_sp * scale, d_se * scale);

        let gv = &c_sp.d_v * d_sp + &c_se.d_v * d_se;
        g.dense_rows
            .entry(row)
            .and_modify(|acc| *acc += &gv)
            .or_insert(gv);

        let mut ga_sp = &c_sp.d_z * d_sp;
        ga_sp.zip_mut_with(&a_sp, |g, &a| *g *= model.leaky_grad(a));
        add_outer(&mut g.w_speech, ga_sp.view(), h.view());
        g.b_speech += &ga_sp;
        let gh = model.w_speech.t().dot(&ga_sp);
        g_alpha += &sentence.layers.dot(&gh);

        if d_se != 0.0 {
            let mut ga_se = &c_se.d_z * d_se;
            ga_se.zip_mut_with(&a_se, |g, &a| *g *= model.leaky_grad(a));
            add_outer(&mut g.w_sentence, ga_se.view(), sentence.embedding.view());
            g.b_sentence += &ga_se;
        }
    }

    // softmax Jacobian: dL/dlogit_k = alpha_k (g_k - sum_l alpha_l g_l)
    let mean_g = alpha.dot(&g_alpha);
    g.layer_logits = &alpha * &(g_alpha - mean_g);

    Ok((total * scale, g))
}

/// Batch-mean loss only.
pub fn batch_loss(
    model: &SeparationModel,
    corpus: &SentenceCorpus,
    batch: &[SampleRef],
    objective: Objective,
    tau: f64,
) -> Result<f64> {
    Ok(loss_and_gradients(model, corpus, batch, objective, tau)?.0)
}

/// `acc += a bᵀ` without a temporary.
fn add_outer(acc: &mut Array2<f64>, a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) {
    for (mut row, &ai) in acc.rows_mut().into_iter().zip(a) {
        if ai != 0.0 {
            row.scaled_add(ai, &b);
        }
    }
}

/// Gradients for a batch of corpus sentences whose dense rows share the
/// corpus order.
pub fn gradients(
    model: &SeparationModel,
    corpus: &SentenceCorpus,
    batch: &[usize],
    objective: Objective,
    tau: f64,
) -> Result<Gradients> {
    let refs: Vec<SampleRef> = batch.iter().map(|&i| (i, i)).collect();
    Ok(loss_and_gradients(model, corpus, &refs, objective, tau)?.1)
}
