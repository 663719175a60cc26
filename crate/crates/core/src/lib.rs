//! Adaptive parameterization for feed-forward and recurrent networks.
//!
//! The crate is organized bottom-up:
//!
//! - [`autodiff`]: tensors on a tape with reverse-mode gradients and a
//!   finite-difference checker.
//! - [`layers`]: adaptive feed-forward layers (input, output, IO, SVA and
//!   general order-q policies), activation-effect diagnostics and the
//!   constructive IO factorization.
//! - [`recurrent`]: LSTM, adaptive LSTM, stacking and truncated unrolling.
//! - [`optim`]: Adam, SGD, clipping, schedules, variational dropout and the
//!   training loop bookkeeping.
//! - [`data`]: synthetic regression data, IDX files, text corpora and BPTT
//!   batching.

pub mod autodiff;
pub mod checkpoint;
pub mod data;
mod error;
pub mod layers;
pub mod linalg;
pub mod optim;
pub mod recurrent;
pub mod rng;
mod tensor;

pub use autodiff::{Activation, Gradients, Graph, Init, ParamId, ParamStore, Var};
pub use error::{Error, Result};
pub use tensor::Tensor;
