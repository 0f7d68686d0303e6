//! Filter pruning for convolutional networks by sparse subspace clustering
//! of feature maps, cluster-averaged filter merging and least-squares
//! reconstruction of the next layer's outputs.

pub mod error;
pub mod linalg;
pub mod nn;

pub use error::{Error, Result};
pub mod config;
pub mod ssc;
pub mod pruner;
pub mod baselines;
pub mod io;
pub mod zoo;

pub use config::RunConfig;
