use std::collections::HashMap;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};

/// Layer weights, the two projections into the shared latent space and the
/// per-sentence dense-vector table.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparationModel {
    /// Softmax of these gives the layer weights.
    pub layer_logits: Array1<f64>,
    /// `d x dim_h`
    pub w_speech: Array2<f64>,
    pub b_speech: Array1<f64>,
    /// `d x dim_s`
    pub w_sentence: Array2<f64>,
    pub b_sentence: Array1<f64>,
    /// `n_sentences x d`, one trainable row per sentence.
    pub dense: Array2<f64>,
    pub sentence_ids: Vec<String>,
    pub leaky_slope: f64,
    row_index: HashMap<String, usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityPair {
    pub sim_speech: f64,
    pub sim_sentence: f64,
}

impl SeparationModel {
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        layer_logits: Array1<f64>,
        w_speech: Array2<f64>,
        b_speech: Array1<f64>,
        w_sentence: Array2<f64>,
        b_sentence: Array1<f64>,
        dense: Array2<f64>,
        sentence_ids: Vec<String>,
        leaky_slope: f64,
    ) -> Result<Self> {
        let d = dense.ncols();
        if w_speech.nrows() != d
            || w_sentence.nrows() != d
            || b_speech.len() != d
            || b_sentence.len() != d
        {
            return Err(Error::Shape(format!(
                "projection outputs ({}, {}) and biases ({}, {}) must match dense dim {d}",
                w_speech.nrows(),
                w_sentence.nrows(),
                b_speech.len(),
                b_sentence.len()
            )));
        }
        if dense.nrows() != sentence_ids.len() {
            return Err(Error::Shape(format!(
                "{} dense rows for {} sentence ids",
                dense.nrows(),
                sentence_ids.len()
            )));
        }
        if layer_logits.is_empty() {
            return Err(Error::Shape("at least one layer weight required".into()));
        }
        let mut row_index = HashMap::with_capacity(sentence_ids.len());
        for (i, id) in sentence_ids.iter().enumerate() {
            if row_index.insert(id.clone(), i).is_some() {
                return Err(Error::Schema(format!("duplicate sentence id {id}")));
            }
        }
        let model = Self {
            layer_logits,
            w_speech,
            b_speech,
            w_sentence,
            b_sentence,
            dense,
            sentence_ids,
            leaky_slope,
            row_index,
        };
        if !model.is_finite() {
            return Err(Error::Validation("model parameters must be finite".into()));
        }
        Ok(model)
    }

    /// Projections uniform in `±1/sqrt(fan_in)`, dense rows `N(0, 1/sqrt(d))`,
    /// zero layer logits.
    pub fn init<R: Rng>(
        n_layers: usize,
        dim_h: usize,
        dim_s: usize,
        dense_dim: usize,
        sentence_ids: Vec<String>,
        leaky_slope: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if dense_dim == 0 {
            return Err(Error::Validation("dense dimension must be at least 1".into()));
        }
        let uniform = |fan_in: usize, rows: usize, rng: &mut R| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let u = Uniform::new_inclusive(-bound, bound).expect("valid bound");
            Array2::from_shape_simple_fn((rows, fan_in), || u.sample(rng))
        };
        let bias = |fan_in: usize, rows: usize, rng: &mut R| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let u = Uniform::new_inclusive(-bound, bound).expect("valid bound");
            Array1::from_shape_simple_fn(rows, || u.sample(rng))
        };
        let w_speech = uniform(dim_h, dense_dim, rng);
        let b_speech = bias(dim_h, dense_dim, rng);
        let w_sentence = uniform(dim_s, dense_dim, rng);
        let b_sentence = bias(dim_s, dense_dim, rng);
        let dense = init_dense_rows(sentence_ids.len(), dense_dim, rng);
        Self::from_parts(
            Array1::zeros(n_layers),
            w_speech,
            b_speech,
            w_sentence,
            b_sentence,
            dense,
            sentence_ids,
            leaky_slope,
        )
    }

    pub fn n_layers(&self) -> usize {
        self.layer_logits.len()
    }

    pub fn dense_dim(&self) -> usize {
        self.dense.ncols()
    }

    pub fn layer_dim(&self) -> usize {
        self.w_speech.ncols()
    }

    pub fn embedding_dim(&self) -> usize {
        self.w_sentence.ncols()
    }

    pub fn alpha(&self) -> Array1<f64> {
        softmax(self.layer_logits.view())
    }

    pub fn row_of(&self, id: &str) -> Option<usize> {
        self.row_index.get(id).copied()
    }

    pub fn is_finite(&self) -> bool {
        self.layer_logits
            .iter()
            .chain(self.w_speech.iter())
            .chain(self.b_speech.iter())
            .chain(self.w_sentence.iter())
            .chain(self.b_sentence.iter())
            .chain(self.dense.iter())
            .all(|x| x.is_finite())
    }

    pub fn leaky(&self, x: f64) -> f64 {
        if x > 0.0 {
            x
        } else {
            self.leaky_slope * x
        }
    }

    /// Subgradient; the negative-side slope is used at zero.
    pub fn leaky_grad(&self, x: f64) -> f64 {
        if x > 0.0 {
            1.0
        } else {
            self.leaky_slope
        }
    }

    pub fn speech_preactivation(&self, h: ArrayView1<'_, f64>) -> Array1<f64> {
        self.w_speech.dot(&h) + &self.b_speech
    }

    pub fn sentence_preactivation(&self, s: ArrayView1<'_, f64>) -> Array1<f64> {
        self.w_sentence.dot(&s) + &self.b_sentence
    }

    /// Appends freshly initialized rows for new sentence ids.
    pub fn with_extra_rows<R: Rng>(&self, ids: &[String], rng: &mut R) -> Result<Self> {
        let extra = init_dense_rows(ids.len(), self.dense_dim(), rng);
        let dense = ndarray::concatenate(ndarray::Axis(0), &[self.dense.view(), extra.view()])
            .map_err(|e| Error::Shape(e.to_string()))?;
        let mut all_ids = self.sentence_ids.clone();
        all_ids.extend(ids.iter().cloned());
        Self::from_parts(
            self.layer_logits.clone(),
            self.w_speech.clone(),
            self.b_speech.clone(),
            self.w_sentence.clone(),
            self.b_sentence.clone(),
            dense,
            all_ids,
            self.leaky_slope,
        )
    }
}

fn init_dense_rows<R: Rng>(n: usize, d: usize, rng: &mut R) -> Array2<f64> {
    let normal = Normal::new(0.0, 1.0 / (d as f64).sqrt()).expect("positive std");
    Array2::from_shape_simple_fn((n, d), || normal.sample(rng))
}

pub fn softmax(logits: ArrayView1<'_, f64>) -> Array1<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp = logits.mapv(|x| (x - max).exp());
    let total = exp.sum();
    exp / total
}

/// `sum_l alpha_l * h_l` over the rows of `stack`.
pub fn weighted_sum(stack: ArrayView2<'_, f64>, alpha: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    if stack.nrows() != alpha.len() {
        return Err(Error::Shape(format!(
            "{} layer weights for {} layers",
            alpha.len(),
            stack.nrows()
        )));
    }
    Ok(alpha.dot(&stack))
}

pub fn cosine(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Result<f64> {
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateSimilarity("zero-norm vector".into()));
    }
    Ok((a.dot(&b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Projects both modalities with LeakyReLU dense layers and measures the
/// cosine similarity of `v` with each projection.
pub fn project_and_sim(
    model: &SeparationModel,
    h_speech: ArrayView1<'_, f64>,
    sentence: ArrayView1<'_, f64>,
    v: ArrayView1<'_, f64>,
) -> Result<SimilarityPair> {
    if h_speech.len() != model.layer_dim()
        || sentence.len() != model.embedding_dim()
        || v.len() != model.dense_dim()
    {
        return Err(Error::Shape(format!(
            "inputs ({}, {}, {}) do not match model ({}, {}, {})",
            h_speech.len(),
            sentence.len(),
            v.len(),
            model.layer_dim(),
            model.embedding_dim(),
            model.dense_dim()
        )));
    }
    let z_speech = model.speech_preactivation(h_speech).mapv(|x| model.leaky(x));
    let z_sentence = model.sentence_preactivation(sentence).mapv(|x| model.leaky(x));
    Ok(SimilarityPair {
        sim_speech: cosine(v, z_speech.view())?,
        sim_sentence: cosine(v, z_sentence.view())?,
    })
}
