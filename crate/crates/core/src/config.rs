use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Solver hyperparameters shared by clustering and reconstruction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Data-fidelity multiplier; the LASSO weight is `alpha / mu`.
    pub alpha: f64,
    pub ssc_max_iter: usize,
    pub ssc_tol: f64,
    pub ridge: f64,
    /// Cap on data-matrix rows fed to the self-expressive solver.
    pub max_rows: usize,
    pub seed: u64,
    pub kmeans_restarts: usize,
    /// Cluster on activations of the unpruned model instead of the
    /// partially pruned one.
    pub cluster_on_original: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            alpha: 20.0,
            ssc_max_iter: 500,
            ssc_tol: 1e-6,
            ridge: 1e-8,
            max_rows: 4096,
            seed: 42,
            kmeans_restarts: 10,
            cluster_on_original: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("alpha", self.alpha),
            ("ssc_tol", self.ssc_tol),
            ("ridge", self.ridge),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Parameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.alpha <= 1.0 {
            return Err(Error::Parameter(format!("alpha must exceed 1, got {}", self.alpha)));
        }
        for (name, v) in [
            ("ssc_max_iter", self.ssc_max_iter),
            ("max_rows", self.max_rows),
            ("kmeans_restarts", self.kmeans_restarts),
        ] {
            if v == 0 {
                return Err(Error::Parameter(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}
