//! Recurrent cells, the embedding/recurrent/head model, BPTT, Adam and the
//! training loop.

mod cell;
mod model;
mod optim;
mod train;

pub use cell::{CellKind, LayerGrads, RecurrentLayer};
pub use model::{
    argmax_rows, cross_entropy, encode, Batch, ForwardTrace, Gradients, RecurrentModel, Source, CLASSES, PAD_ID, VOCAB,
};
pub use optim::{adam_step, Adam, AdamState, BETA1, BETA2, EPSILON};
pub use train::{
    evaluate, evaluate_encoded, read_history, train, train_encoded, write_history, EncodedSplit, EpochRecord,
    TrainConfig, Trainer,
};
