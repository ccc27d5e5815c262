//! Post-hoc explanation methods for recurrent and convolutional text
//! classifiers, and the hybrid-document and agreement pointing games used to
//! compare them.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: dense matrices, activations, seeded randomness.
//! - [`models`]: GRU, QGRU, LSTM, QLSTM and CNN classifiers with traces,
//!   reverse-mode gradients, an Adam trainer and a checkpoint format.
//! - [`explain`]: the explanation catalog (gradients, integrated gradients,
//!   epsilon-LRP, DeepLIFT, cell decomposition, omission/occlusion, LIMSSE).
//! - [`eval`]: pointing-game metrics, hybrid documents, agreement samples.
//! - [`render`]: RGB relevance coding to HTML and ANSI.
//! - [`corpus`]: JSON-lines documents and a synthetic keyword corpus.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod explain;
pub mod models;
pub mod numerics;
pub mod render;

pub use error::{Error, Result};
pub use explain::{explain, Method, MethodOptions, RelevanceMap};
pub use models::{
    Arch, Checkpoint, Direction, ForwardTrace, ModelConfig, NetworkParams, TokenSequence,
    Vocabulary,
};
pub use numerics::{Matrix, SeededRng};
