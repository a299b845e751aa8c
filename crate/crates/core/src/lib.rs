//! Sparse recurrent networks on Reber-grammar classification.
//!
//! The crate trains RNN-Tanh, RNN-ReLU, LSTM and GRU classifiers with
//! hand-written backpropagation through time, prunes them by weight
//! magnitude and measures how quickly they recover, builds recurrent
//! architectures from Watts–Strogatz and Barabási–Albert random graphs, and
//! relates the graphs' structural properties to the accuracy they reach.

#![allow(clippy::needless_range_loop)]

pub mod analysis;
pub mod error;
pub mod graph;
pub mod metrics;
pub mod numerics;
mod parallel;
pub mod pruning;
pub mod reber;
pub mod recurrent;

pub use error::{Error, Result};
pub use numerics::{Matrix, Rng};
pub use recurrent::{CellKind, RecurrentModel};
