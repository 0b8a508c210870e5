use serde::{Deserialize, Serialize};

use super::model::SimilarityPair;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// Pull the dense vector toward the speech projection and away from the
    /// sentence projection.
    SpeechPreserve,
    /// The mirror image: keep content, push speech away.
    TextPreserve,
    /// Plain similarity maximization against the speech projection.
    SimMax,
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Objective::SpeechPreserve => "speech-preserve",
            Objective::TextPreserve => "text-preserve",
            Objective::SimMax => "sim-max",
        })
    }
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "speech-preserve" => Ok(Objective::SpeechPreserve),
            "text-preserve" => Ok(Objective::TextPreserve),
            "sim-max" => Ok(Objective::SimMax),
            other => Err(Error::Validation(format!("unknown objective {other:?}"))),
        }
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Per-sample loss. The two contrastive objectives are two-way softmax
/// cross-entropies: `-ln(e^{a/τ} / (e^{a/τ} + e^{b/τ})) = softplus((b - a)/τ)`.
pub fn sample_loss(pair: SimilarityPair, objective: Objective, tau: f64) -> f64 {
    match objective {
        Objective::SpeechPreserve => softplus((pair.sim_sentence - pair.sim_speech) / tau),
        Objective::TextPreserve => softplus((pair.sim_speech - pair.sim_sentence) / tau),
        Objective::SimMax => -pair.sim_speech,
    }
}

/// Derivative of [`sample_loss`] with respect to `(sim_speech, sim_sentence)`.
pub fn sample_loss_grad(pair: SimilarityPair, objective: Objective, tau: f64) -> (f64, f64) {
    match objective {
        Objective::SpeechPreserve => {
            let q = sigmoid((pair.sim_sentence - pair.sim_speech) / tau);
            (-q / tau, q / tau)
        }
        Objective::TextPreserve => {
            let r = sigmoid((pair.sim_speech - pair.sim_sentence) / tau);
            (r / tau, -r / tau)
        }
        Objective::SimMax => (-1.0, 0.0),
    }
}

/// Batch-mean loss.
pub fn loss(batch: &[SimilarityPair], objective: Objective, tau: f64) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Precondition("loss over an empty batch".into()));
    }
    if !(tau > 0.0) {
        return Err(Error::Precondition(format!("temperature must be positive, got {tau}")));
    }
    let total: f64 = batch.iter().map(|&p| sample_loss(p, objective, tau)).sum();
    Ok(total / batch.len() as f64)
}
