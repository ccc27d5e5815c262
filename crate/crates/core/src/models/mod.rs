//! Task classifiers: embedding layer, one of five core layers, dense softmax head.

mod backward;
mod checkpoint;
mod forward;
mod params;
mod train;
mod vocab;

pub use backward::{backward, gradients, Gradients, Objective};
pub use checkpoint::Checkpoint;
pub use forward::{
    class_outputs, embed, empty_representation, forward, forward_embedded, scores_embedded,
    ConvTrace, CoreTrace, ForwardTrace, RecurrentTrace,
};
pub use params::{Arch, Cell, ConvGate, Direction, ModelConfig, NetworkParams, RecurrentGate};
pub use train::{evaluate, train, train_with, EpochStats, LabeledSequence, TrainConfig};
pub use vocab::{TokenSequence, Vocabulary, OOV_TOKEN};
