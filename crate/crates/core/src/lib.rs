//! Multi-laplacian graph convolutional networks.

pub mod cheb;
pub mod checkpoint;
pub mod cpd;
pub mod dataset;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod laplacian;
pub mod linalg;
pub mod model;
pub mod multilap;
pub mod optim;
pub mod pooling;
pub mod skeleton;
pub mod synthetic;
pub mod train;

pub use error::{ErrorKind, MlgcnError, Result};
pub use graph::Graph;
