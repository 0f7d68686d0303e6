//! Sparse subspace clustering of feature maps.
//!
//! Channels are points: each column of the data matrix is one channel's
//! responses over all calibration positions. A sparse self-expressive code
//! links every channel to others spanning the same subspace, and spectral
//! clustering on the code's affinity graph partitions the channels.

mod data;
mod kmeans;
mod lasso;
mod spectral;

pub use data::build_data_matrix;
pub use kmeans::{kmeans, KMeansFit, KMEANS_MAX_ITER};
pub use lasso::{solve_self_expressive, SelfExpressiveness};
pub use spectral::{affinity, normalized_laplacian, spectral_cluster, spectral_embedding};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Partition of `c` channels into `k` non-empty clusters.
///
/// Labels are canonical: cluster ids increase with each cluster's smallest
/// member index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterAssignment {
    labels: Vec<usize>,
    k: usize,
}

impl ClusterAssignment {
    /// Builds an assignment from arbitrary labels and relabels it canonically.
    pub fn from_labels(labels: &[usize]) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Input("cluster assignment over zero channels".into()));
        }
        let mut remap = std::collections::HashMap::new();
        let canonical = labels
            .iter()
            .map(|l| {
                let next = remap.len();
                *remap.entry(*l).or_insert(next)
            })
            .collect();
        Ok(Self {
            labels: canonical,
            k: remap.len(),
        })
    }

    /// One cluster per channel.
    pub fn singletons(c: usize) -> Self {
        Self {
            labels: (0..c).collect(),
            k: c,
        }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Member channel indices of each cluster, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.members().iter().map(Vec::len).collect()
    }
}

/// Full clustering pipeline on calibration feature maps `[c, H, W]`.
pub fn cluster_feature_maps(
    maps: &[Tensor],
    k: usize,
    cfg: &RunConfig,
) -> Result<(ClusterAssignment, SelfExpressiveness)> {
    let x = build_data_matrix(maps, cfg.max_rows, cfg.seed)?;
    if k > x.cols() || k == 0 {
        return Err(Error::Parameter(format!(
            "cannot form {k} clusters from {} channels",
            x.cols()
        )));
    }
    if k == x.cols() {
        // nothing to merge; skip the solver
        let se = SelfExpressiveness::empty(x.cols());
        return Ok((ClusterAssignment::singletons(k), se));
    }
    let se = solve_self_expressive(&x, cfg.alpha, cfg.ssc_max_iter, cfg.ssc_tol)?;
    let assignment = spectral_cluster(&se.coeffs, k, cfg.seed, cfg.kmeans_restarts)?;
    Ok((assignment, se))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_relabeling() {
        let a = ClusterAssignment::from_labels(&[2, 0, 2, 1]).unwrap();
        assert_eq!(a.labels(), &[0, 1, 0, 2]);
        assert_eq!(a.k(), 3);
        assert_eq!(a.members(), vec![vec![0, 2], vec![1], vec![3]]);
        assert_eq!(a.sizes(), vec![2, 1, 1]);
        assert!(ClusterAssignment::from_labels(&[]).is_err());
    }
}
