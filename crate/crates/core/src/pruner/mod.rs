//! Layer-pair pruning: cluster the feature maps feeding a conv layer, merge
//! the matching filters of the producing layer and input channels of the
//! consuming layer, then refit the consumer by least squares.

mod merge;
mod reconstruct;
mod report;
mod strategy;

pub use merge::{
    cluster_lower_channels, cluster_upper_filters, select_lower_channels, select_upper_filters,
};
pub use reconstruct::{reconstruct, Reconstruction, FALLBACK_RIDGE};
pub use report::{AccuracyCheck, PruneRecord, PruneReport};
pub use strategy::{BlockEntry, LayerEntry, PruneStrategy, Target};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::nn::{count_costs, fold_batchnorm, layer_input, ConvLayer, Layer, ModelGraph, Tensor};
use crate::ssc::{cluster_feature_maps, ClusterAssignment};

/// Producer/consumer pair and the partition of the channels between them.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerPrunePlan {
    pub upper_layer: String,
    pub lower_layer: String,
    pub target_channels: usize,
    pub assignment: ClusterAssignment,
}

/// Which of the `c` channels between a pair survive, and how.
#[derive(Clone, Debug, PartialEq)]
pub enum ChannelSelection {
    /// Merge each cluster into one channel by averaging.
    Clusters(ClusterAssignment),
    /// Keep these channels (ascending) and drop the rest.
    Keep(Vec<usize>),
}

impl ChannelSelection {
    pub fn c_prime(&self) -> usize {
        match self {
            ChannelSelection::Clusters(a) => a.k(),
            ChannelSelection::Keep(k) => k.len(),
        }
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        match self {
            ChannelSelection::Clusters(a) => a.sizes(),
            ChannelSelection::Keep(k) => vec![1; k.len()],
        }
    }
}

/// Checks that `upper` feeds `lower` through ReLU/pooling only and that
/// pruning `upper`'s filters leaves every residual add intact.
pub fn check_pair(model: &ModelGraph, upper: &str, lower: &str) -> Result<()> {
    let ui = model.layer_index(upper)?;
    let li = model.layer_index(lower)?;
    let up = model.conv(upper)?;
    let low = model.conv(lower)?;
    if ui >= li {
        return Err(Error::Structure(format!("`{upper}` does not precede `{lower}`")));
    }
    if let Some(between) = model.layers()[ui + 1..li]
        .iter()
        .find(|l| !matches!(l, Layer::Relu { .. } | Layer::MaxPool { .. }))
    {
        return Err(Error::Structure(format!(
            "`{upper}` and `{lower}` are separated by {} layer `{}`",
            between.kind(),
            between.name()
        )));
    }
    for block in model.blocks() {
        if let Some(pos) = block.conv_layer_names.iter().position(|n| n == upper) {
            if pos + 1 == block.conv_layer_names.len() {
                return Err(Error::Structure(format!(
                    "`{upper}` ends block `{}`; its output width is fixed by the shortcut",
                    block.block_id
                )));
            }
            if pos >= block.prunable_prefix {
                return Err(Error::Structure(format!(
                    "`{upper}` is outside the prunable prefix of block `{}`",
                    block.block_id
                )));
            }
        }
    }
    if up.c_out() != low.c_in() {
        return Err(Error::Shape(format!(
            "`{upper}` has {} filters but `{lower}` takes {} channels",
            up.c_out(),
            low.c_in()
        )));
    }
    Ok(())
}

/// The conv layer whose output reaches `lower` through ReLU/pooling only.
pub fn upper_of(model: &ModelGraph, lower: &str) -> Result<String> {
    let li = model.layer_index(lower)?;
    model.conv(lower)?;
    for layer in model.layers()[..li].iter().rev() {
        match layer {
            Layer::Conv(c) => return Ok(c.name.clone()),
            Layer::Relu { .. } | Layer::MaxPool { .. } => continue,
            other => {
                return Err(Error::Structure(format!(
                    "`{lower}` is fed through {} layer `{}`, not directly by a conv",
                    other.kind(),
                    other.name()
                )))
            }
        }
    }
    Err(Error::Structure(format!("no conv layer feeds `{lower}`")))
}

/// Tensors entering `lower` for each calibration input.
pub fn lower_inputs(model: &ModelGraph, lower: &str, calib: &[Tensor]) -> Result<Vec<Tensor>> {
    calib.iter().map(|x| layer_input(model, x, lower)).collect()
}

/// Applies a channel selection to a pair and refits the lower layer.
///
/// Returns the pruned model and the reconstruction outcome.
pub fn apply_selection(
    original: &ModelGraph,
    current: &ModelGraph,
    upper: &str,
    lower: &str,
    selection: &ChannelSelection,
    calib: &[Tensor],
    ridge: f64,
) -> Result<(ModelGraph, Reconstruction)> {
    check_pair(current, upper, lower)?;
    let up = current.conv(upper)?;
    let low = current.conv(lower)?;
    let ((upper_w, upper_b), lower_w) = match selection {
        ChannelSelection::Clusters(a) => (
            cluster_upper_filters(&up.weights, up.bias.as_ref(), a)?,
            cluster_lower_channels(&low.weights, a)?,
        ),
        ChannelSelection::Keep(keep) => (
            select_upper_filters(&up.weights, up.bias.as_ref(), keep)?,
            select_lower_channels(&low.weights, keep)?,
        ),
    };
    let pruned_upper = ConvLayer::new(upper, upper_w, upper_b, up.stride, up.padding)?;
    let pruned_lower = ConvLayer::new(lower, lower_w, low.bias.clone(), low.stride, low.padding)?;
    let recon = reconstruct(original, current, &pruned_upper, &pruned_lower, calib, ridge)?;
    let pruned = current.with_convs_replaced(vec![pruned_upper, recon.lower.clone()])?;
    Ok((pruned, recon))
}

/// Clusters the channels feeding `lower` into `c_prime` groups.
pub fn plan_pair(
    current: &ModelGraph,
    upper: &str,
    lower: &str,
    c_prime: usize,
    calib: &[Tensor],
    cfg: &RunConfig,
) -> Result<(LayerPrunePlan, crate::ssc::SelfExpressiveness)> {
    check_pair(current, upper, lower)?;
    let c = current.conv(upper)?.c_out();
    if c_prime == 0 || c_prime > c {
        return Err(Error::Parameter(format!(
            "cannot prune `{upper}` from {c} to {c_prime} filters"
        )));
    }
    let maps = lower_inputs(current, lower, calib)?;
    let (assignment, se) = cluster_feature_maps(&maps, c_prime, cfg)?;
    Ok((
        LayerPrunePlan {
            upper_layer: upper.to_string(),
            lower_layer: lower.to_string(),
            target_channels: c_prime,
            assignment,
        },
        se,
    ))
}

/// One pruning step with targets from `original` and inputs from `current`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn prune_pair_against(
    original: &ModelGraph,
    current: &ModelGraph,
    cluster_source: &ModelGraph,
    upper: &str,
    lower: &str,
    c_prime: usize,
    calib: &[Tensor],
    cfg: &RunConfig,
) -> Result<(ModelGraph, PruneRecord)> {
    let (plan, se) = plan_pair(cluster_source, upper, lower, c_prime, calib, cfg)?;
    let selection = ChannelSelection::Clusters(plan.assignment);
    let (pruned, recon) = apply_selection(original, current, upper, lower, &selection, calib, cfg.ridge)?;
    let mut record = make_record(current, &pruned, upper, lower, "ssc", &selection, &recon)?;
    record.ssc_iterations = se.iterations_run;
    record.ssc_final_objective = se.final_objective;
    Ok((pruned, record))
}

pub(crate) fn make_record(
    before: &ModelGraph,
    after: &ModelGraph,
    upper: &str,
    lower: &str,
    selector: &str,
    selection: &ChannelSelection,
    recon: &Reconstruction,
) -> Result<PruneRecord> {
    let c = before.conv(upper)?.c_out();
    let c_prime = selection.c_prime();
    let cost_before = count_costs(before);
    let cost_after = count_costs(after);
    Ok(PruneRecord {
        upper_layer: upper.to_string(),
        lower_layer: lower.to_string(),
        selector: selector.to_string(),
        c,
        c_prime,
        speed_up_ratio: c as f64 / c_prime as f64,
        cluster_sizes: selection.cluster_sizes(),
        recon_error_before: recon.error_before,
        recon_error_after: recon.error_after,
        refit_applied: recon.refit_applied,
        ssc_iterations: 0,
        ssc_final_objective: 0.0,
        params_before: cost_before.params,
        params_after: cost_after.params,
        flops_before: cost_before.flops,
        flops_after: cost_after.flops,
    })
}

/// Prunes `upper`'s filters (and `lower`'s input channels) down to `c_prime`.
pub fn prune_layer_pair(
    model: &ModelGraph,
    upper: &str,
    lower: &str,
    c_prime: usize,
    calib: &[Tensor],
    cfg: &RunConfig,
) -> Result<(ModelGraph, PruneRecord)> {
    cfg.validate()?;
    prune_pair_against(model, model, model, upper, lower, c_prime, calib, cfg)
}

/// Upper/lower pairs named by a strategy, shallow to deep.
pub fn resolve_pairs(model: &ModelGraph, strategy: &PruneStrategy) -> Result<Vec<(String, String, Target)>> {
    let mut pairs = Vec::new();
    for entry in &strategy.layers {
        let target = entry.target()?;
        let upper = upper_of(model, &entry.layer)?;
        pairs.push((upper, entry.layer.clone(), target));
    }
    for entry in &strategy.blocks {
        let target = entry.target()?;
        let block = model.block(&entry.block)?;
        let names = &block.conv_layer_names;
        let pruned = block.prunable_prefix.min(names.len().saturating_sub(1));
        for i in 0..pruned {
            pairs.push((names[i].clone(), names[i + 1].clone(), target));
        }
    }
    let mut keyed = Vec::with_capacity(pairs.len());
    for (u, l, t) in pairs {
        check_pair(model, &u, &l)?;
        keyed.push((model.layer_index(&u)?, u, l, t));
    }
    keyed.sort_by_key(|(i, ..)| *i);
    if let Some(w) = keyed.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::Structure(format!("layer `{}` is targeted twice", w[0].1)));
    }
    Ok(keyed.into_iter().map(|(_, u, l, t)| (u, l, t)).collect())
}

/// Prunes every pair in `strategy` sequentially from shallow to deep.
///
/// Batch norm is folded first. Each step clusters and refits against the
/// partially pruned model's activations while the refit targets always come
/// from the unpruned model.
pub fn prune_model(
    model: &ModelGraph,
    strategy: &PruneStrategy,
    calib: &[Tensor],
    cfg: &RunConfig,
) -> Result<(ModelGraph, PruneReport)> {
    cfg.validate()?;
    let original = fold_batchnorm(model)?;
    let pairs = resolve_pairs(&original, strategy)?;
    if !pairs.is_empty() && calib.is_empty() {
        return Err(Error::Input("pruning needs calibration inputs".into()));
    }
    let mut current = original.clone();
    let mut records = Vec::with_capacity(pairs.len());
    for (upper, lower, target) in pairs {
        let c = current.conv(&upper)?.c_out();
        let c_prime = target.channels_for(c)?;
        let source = if cfg.cluster_on_original {
            &original
        } else {
            &current
        };
        let (next, record) =
            prune_pair_against(&original, &current, source, &upper, &lower, c_prime, calib, cfg)?;
        current = next;
        records.push(record);
    }
    let before = count_costs(&original);
    let after = count_costs(&current);
    let report = PruneReport {
        records,
        params_before: before.params,
        params_after: after.params,
        flops_before: before.flops,
        flops_after: after.flops,
        fine_tuned: false,
        evaluation: None,
    };
    Ok((current, report))
}
