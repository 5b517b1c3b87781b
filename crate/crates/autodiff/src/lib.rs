//! Minimal dense tensor arithmetic with reverse-mode differentiation.
//!
//! Everything trainable in the workspace is expressed on top of a [`Graph`]
//! that is rebuilt for every forward pass. Parameters enter the graph as
//! borrowed leaves, so building a graph never copies model weights.

mod error;
mod gradcheck;
mod graph;
mod optim;
mod params;
mod tensor;

pub use error::{AutodiffError, Result};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use graph::{Gradients, Graph, NodeId, OpKind};
pub use optim::{OptimKind, OptimState};
pub use params::ParamSet;
pub use tensor::Tensor;
