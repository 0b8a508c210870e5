// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dsp;
pub mod error;
pub mod explain;
pub mod classify;
pub mod corpus_ops;
pub mod landmark;
pub mod manifest;
pub mod mine;
pub mod optim;
pub mod separation;
pub mod tensor;

pub use error::{Error, Result};
