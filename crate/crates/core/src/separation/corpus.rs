use std::collections::HashMap;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::manifest::SessionSet;
use crate::tensor::read_tensor;

/// One training sentence: its layer stack (`L x dim_h`, one row per SSL
/// layer) and its sentence embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Sentence {
    /// Corpus-unique key, `session/utterance` for manifest-backed corpora.
    pub id: String,
    pub session: String,
    pub layers: Array2<f64>,
    pub embedding: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentenceCorpus {
    sentences: Vec<Sentence>,
    index: HashMap<String, usize>,
}

impl SentenceCorpus {
    pub fn new(sentences: Vec<Sentence>) -> Result<Self> {
        let Some(first) = sentences.first() else {
            return Err(Error::InsufficientInput("corpus has no sentences".into()));
        };
        let (l, dh) = first.layers.dim();
        let ds = first.embedding.len();
        if l == 0 || dh == 0 || ds == 0 {
            return Err(Error::Shape("layer stacks and embeddings must be non-empty".into()));
        }
        let mut index = HashMap::with_capacity(sentences.len());
        for (i, s) in sentences.iter().enumerate() {
            if s.layers.dim() != (l, dh) || s.embedding.len() != ds {
                return Err(Error::Shape(format!(
                    "sentence {}: stack {:?} / embedding {} differ from {:?} / {ds}",
                    s.id,
                    s.layers.dim(),
                    s.embedding.len(),
                    (l, dh)
                )));
            }
            if s.layers.iter().chain(s.embedding.iter()).any(|x| !x.is_finite()) {
                return Err(Error::Validation(format!("sentence {} has non-finite features", s.id)));
            }
            if index.insert(s.id.clone(), i).is_some() {
                return Err(Error::Schema(format!("duplicate sentence id {}", s.id)));
            }
        }
        Ok(Self { sentences, index })
    }

    /// Builds a corpus from every utterance of `set`; each must carry both a
    /// layer stack (`[L, D]`, or `[L, T, D]` averaged over `T`) and a
    /// sentence embedding.
    pub fn from_sessions(set: &SessionSet) -> Result<Self> {
        let mut sentences = Vec::new();
        for session in &set.sessions {
            for u in &session.utterances {
                let (Some(lp), Some(ep)) = (&u.layers, &u.sent_emb) else {
                    return Err(Error::Precondition(format!(
                        "session {} utterance {} lacks layers or sent_emb",
                        session.id, u.id
                    )));
                };
                let layers = read_tensor(lp)?.to_matrix_mean_middle()?;
                let emb = read_tensor(ep)?;
                let embedding = Array1::from(emb.to_vec_f64());
                sentences.push(Sentence {
                    id: sentence_key(&session.id, &u.id),
                    session: session.id.clone(),
                    layers,
                    embedding,
                });
            }
        }
        Self::new(sentences)
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn n_layers(&self) -> usize {
        self.sentences[0].layers.nrows()
    }

    pub fn layer_dim(&self) -> usize {
        self.sentences[0].layers.ncols()
    }

    pub fn embedding_dim(&self) -> usize {
        self.sentences[0].embedding.len()
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn get(&self, i: usize) -> &Sentence {
        &self.sentences[i]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn ids(&self) -> Vec<String> {
        self.sentences.iter().map(|s| s.id.clone()).collect()
    }

    /// Mean over layers of each stack (`n x dim_h`): the unweighted baseline.
    pub fn layer_means(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.len(), self.layer_dim()));
        for (mut row, s) in out.rows_mut().into_iter().zip(&self.sentences) {
            row.assign(&s.layers.mean_axis(ndarray::Axis(0)).expect("non-empty stack"));
        }
        out
    }
}

pub fn sentence_key(session: &str, utterance: &str) -> String {
    format!("{session}/{utterance}")
}
