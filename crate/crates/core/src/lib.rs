//! Contextual decomposition for stacked-LSTM and single-headed-attention RNN
//! language models, with synthetic number-agreement corpora and
//! subject-attribution evaluation.

pub mod corpus;
pub mod decomp;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod model_io;
pub mod numerics;
pub mod parallel;
pub mod shapley;

pub mod cli;

pub use error::{Error, Result};
