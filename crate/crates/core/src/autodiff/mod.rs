//! Reverse-mode differentiation over dense tensors.

mod gradcheck;
mod graph;
mod params;

pub use gradcheck::{grad_check, grad_check_coords, relative_error, sample_coords, GradCheck};
pub use graph::{sigmoid, Activation, Gradients, Graph, Var};
pub use params::{Init, ParamId, ParamStore, Parameter};
