use serde::{Deserialize, Serialize};

/// Outcome of pruning one upper/lower conv pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneRecord {
    pub upper_layer: String,
    pub lower_layer: String,
    /// Channel-selection method: `ssc` or a baseline name.
    pub selector: String,
    pub c: usize,
    pub c_prime: usize,
    pub speed_up_ratio: f64,
    pub cluster_sizes: Vec<usize>,
    /// Relative Frobenius error of the lower layer's outputs with merged
    /// weights, before and after the least-squares refit.
    pub recon_error_before: f64,
    pub recon_error_after: f64,
    pub refit_applied: bool,
    pub ssc_iterations: usize,
    pub ssc_final_objective: f64,
    pub params_before: u64,
    pub params_after: u64,
    pub flops_before: u64,
    pub flops_after: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    pub records: Vec<PruneRecord>,
    pub params_before: u64,
    pub params_after: u64,
    pub flops_before: u64,
    pub flops_after: u64,
    /// Always false: recovery is by reconstruction alone.
    pub fine_tuned: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluation: Option<AccuracyCheck>,
}

/// Top-k accuracy of the model before and after pruning on a labelled set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCheck {
    pub topk: usize,
    pub samples: usize,
    pub accuracy_before: f64,
    pub accuracy_after: f64,
    /// `accuracy_before - accuracy_after`.
    pub accuracy_drop: f64,
}

impl PruneReport {
    pub fn flops_reduction(&self) -> f64 {
        if self.flops_after == 0 {
            return 1.0;
        }
        self.flops_before as f64 / self.flops_after as f64
    }
}
