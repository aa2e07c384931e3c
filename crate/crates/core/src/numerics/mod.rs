//! Dense matrices, reverse-mode differentiation and gradient checking.

mod gradcheck;
mod graph;
mod matrix;

pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use graph::{Gradients, Graph, NodeId};
pub use matrix::{cosine, Matrix};
