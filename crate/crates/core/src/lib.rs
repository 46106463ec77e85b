//! Feed-forward networks as weighted DAGs, affine symmetries of their
//! nonlinearities, and the rewrites those symmetries induce.

pub mod complexan;
pub mod json;
pub mod network;
pub mod nonlinearity;
pub mod sampling;
pub mod rewrite;
pub mod symmetry;

pub use network::{Network, NetworkBuilder, NodeId, NodeSet};
pub use nonlinearity::{Nonlinearity, Zab};
pub use symmetry::{AffineSymmetry, Term};
