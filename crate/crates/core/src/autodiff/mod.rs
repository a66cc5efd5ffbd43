//! Reverse-mode differentiation over a static graph.

mod gradcheck;
mod graph;
mod params;
pub mod suite;

pub use gradcheck::{compare, grad_check, relative_error, GradCheckOptions, GradCheckReport, Mismatch};
pub use graph::{Activations, Graph, GraphBuilder, Node, NodeId, Op, ParamId};
pub use params::{Gradients, Init, ParamSpec, ParamStore};
