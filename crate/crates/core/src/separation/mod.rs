//! Contrastive information separation.
//!
//! Each sentence's SSL layer stack is collapsed by a learned convex
//! combination of layers, projected (LeakyReLU dense layer) into a latent
//! space shared with a projection of the sentence embedding, and compared by
//! cosine similarity with a per-sentence trainable dense vector. The training
//! objective decides which modality the dense vector keeps.

mod checkpoint;
mod corpus;
mod grad;
mod loss;
mod model;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointDescriptor};
pub use corpus::{sentence_key, Sentence, SentenceCorpus};
pub use grad::{batch_loss, gradients, loss_and_gradients, Gradients, SampleRef};
pub use loss::{loss, sample_loss, sample_loss_grad, sigmoid, softplus, Objective};
pub use model::{cosine, project_and_sim, softmax, weighted_sum, SeparationModel, SimilarityPair};
pub use train::{
    extract_dense_vectors, fit_dense_rows, loss_history_csv, train, DenseExtraction, TrainConfig,
};

#[cfg(test)]
mod tests;
