//! Alternative channel selectors to compare against subspace clustering.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io::evaluate_topk;
use crate::nn::{forward, ModelGraph, Tensor};
use crate::pruner::{apply_selection, check_pair, lower_inputs, ChannelSelection, Target};
use crate::ssc::{build_data_matrix, cluster_feature_maps, kmeans, ClusterAssignment};

/// Channel selection baselines.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelectorKind {
    /// The first `c′` channels.
    FirstK,
    /// A uniform `c′`-subset.
    Random(u64),
    /// The `c′` channels whose producing filters have the largest absolute
    /// weight sum.
    MaxResponse,
    /// k-means on the normalized feature maps, merged like clusters.
    KMeansRaw(u64),
}

/// Any method the comparison can run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Selector {
    Ssc,
    Baseline(SelectorKind),
}

impl Selector {
    pub fn name(&self) -> &'static str {
        match self {
            Selector::Ssc => "ssc",
            Selector::Baseline(SelectorKind::FirstK) => "firstk",
            Selector::Baseline(SelectorKind::Random(_)) => "random",
            Selector::Baseline(SelectorKind::MaxResponse) => "maxresponse",
            Selector::Baseline(SelectorKind::KMeansRaw(_)) => "kmeans",
        }
    }

    /// Parses a selector name; seeded baselines take `seed`.
    pub fn parse(name: &str, seed: u64) -> Result<Self> {
        Ok(match name.trim() {
            "ssc" => Selector::Ssc,
            "firstk" => Selector::Baseline(SelectorKind::FirstK),
            "random" => Selector::Baseline(SelectorKind::Random(seed)),
            "maxresponse" => Selector::Baseline(SelectorKind::MaxResponse),
            "kmeans" => Selector::Baseline(SelectorKind::KMeansRaw(seed)),
            other => {
                return Err(Error::Input(format!(
                    "unknown selector `{other}` (expected firstk, random, maxresponse, kmeans or ssc)"
                )))
            }
        })
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Selector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Selector::parse(s, RunConfig::default().seed)
    }
}

/// Picks `c_prime` of the `c` filters of `upper_weights` (`[c, c_in, kh, kw]`).
///
/// `feature_maps` are the `[c, H, W]` tensors the filters produce and are only
/// read by [`SelectorKind::KMeansRaw`].
pub fn select_channels(
    kind: SelectorKind,
    upper_weights: &Tensor,
    feature_maps: &[Tensor],
    c_prime: usize,
    cfg: &RunConfig,
) -> Result<ChannelSelection> {
    let c = *upper_weights
        .shape()
        .first()
        .ok_or_else(|| Error::Shape("filter tensor has no output axis".into()))?;
    if c_prime == 0 || c_prime > c {
        return Err(Error::Parameter(format!("cannot select {c_prime} of {c} channels")));
    }
    Ok(match kind {
        SelectorKind::FirstK => ChannelSelection::Keep((0..c_prime).collect()),
        SelectorKind::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut keep = index::sample(&mut rng, c, c_prime).into_vec();
            keep.sort_unstable();
            ChannelSelection::Keep(keep)
        }
        SelectorKind::MaxResponse => {
            let per = upper_weights.stride0();
            let sums: Vec<f64> = upper_weights
                .data()
                .chunks(per)
                .map(|f| f.iter().map(|w| w.abs() as f64).sum())
                .collect();
            let mut order: Vec<usize> = (0..c).collect();
            // stable sort keeps the lower index first on ties
            order.sort_by(|a, b| sums[*b].total_cmp(&sums[*a]));
            let mut keep = order[..c_prime].to_vec();
            keep.sort_unstable();
            ChannelSelection::Keep(keep)
        }
        SelectorKind::KMeansRaw(seed) => {
            if feature_maps.is_empty() {
                return Err(Error::Input("k-means selection needs calibration feature maps".into()));
            }
            let x = build_data_matrix(feature_maps, cfg.max_rows, seed)?;
            if x.cols() != c {
                return Err(Error::Shape(format!(
                    "feature maps have {} channels but there are {c} filters",
                    x.cols()
                )));
            }
            if c_prime == c {
                ChannelSelection::Clusters(ClusterAssignment::singletons(c))
            } else {
                let fit = kmeans(&x.transpose(), c_prime, cfg.kmeans_restarts, seed)?;
                ChannelSelection::Clusters(ClusterAssignment::from_labels(&fit.labels)?)
            }
        }
    })
}

/// One selector at one ratio.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub selector: String,
    pub ratio: f64,
    pub c: usize,
    pub c_prime: usize,
    pub cluster_sizes: Vec<usize>,
    pub recon_error_before: f64,
    pub recon_error_after: f64,
    /// Relative Frobenius error of the network outputs on the held-out set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_error: Option<f64>,
    /// Top-1 accuracy on the held-out set when labels are given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub upper_layer: String,
    pub lower_layer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original_accuracy: Option<f64>,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn rows_for<'a>(&'a self, selector: &'a str) -> impl Iterator<Item = &'a ComparisonRow> + 'a {
        self.rows.iter().filter(move |r| r.selector == selector)
    }
}

/// Held-out inputs and optional class labels.
#[derive(Clone, Copy, Debug, Default)]
pub struct HeldOut<'a> {
    pub inputs: &'a [Tensor],
    pub labels: Option<&'a [usize]>,
}

/// Prunes the pair with every selector at every ratio and measures each
/// result. Keep-set selectors get the same least-squares refit as the
/// clustering ones, so rows differ only in which channels were chosen.
#[allow(clippy::too_many_arguments)]
pub fn compare_selectors(
    model: &ModelGraph,
    upper: &str,
    lower: &str,
    ratios: &[f64],
    calib: &[Tensor],
    held_out: HeldOut<'_>,
    selectors: &[Selector],
    cfg: &RunConfig,
) -> Result<ComparisonTable> {
    cfg.validate()?;
    check_pair(model, upper, lower)?;
    if calib.is_empty() {
        return Err(Error::Input("comparison needs calibration inputs".into()));
    }
    if let Some(labels) = held_out.labels {
        if labels.len() != held_out.inputs.len() {
            return Err(Error::Input(format!(
                "{} labels for {} held-out inputs",
                labels.len(),
                held_out.inputs.len()
            )));
        }
    }
    let c = model.conv(upper)?.c_out();
    let targets: Vec<usize> = ratios
        .iter()
        .map(|r| Target::Ratio(*r).channels_for(c))
        .collect::<Result<_>>()?;
    let maps = lower_inputs(model, lower, calib)?;
    let reference = outputs(model, held_out.inputs)?;
    let accuracy = |m: &ModelGraph| -> Result<Option<f64>> {
        held_out
            .labels
            .map(|l| evaluate_topk(m, held_out.inputs, l, 1))
            .transpose()
    };

    let mut rows = Vec::with_capacity(selectors.len() * ratios.len());
    for selector in selectors {
        for (&ratio, &c_prime) in ratios.iter().zip(&targets) {
            let selection = match selector {
                Selector::Ssc => ChannelSelection::Clusters(cluster_feature_maps(&maps, c_prime, cfg)?.0),
                Selector::Baseline(kind) => {
                    select_channels(*kind, &model.conv(upper)?.weights, &maps, c_prime, cfg)?
                }
            };
            let (pruned, recon) = apply_selection(model, model, upper, lower, &selection, calib, cfg.ridge)?;
            let output_error = if held_out.inputs.is_empty() {
                None
            } else {
                Some(relative_distance(&outputs(&pruned, held_out.inputs)?, &reference))
            };
            rows.push(ComparisonRow {
                selector: selector.name().to_string(),
                ratio,
                c,
                c_prime,
                cluster_sizes: selection.cluster_sizes(),
                recon_error_before: recon.error_before,
                recon_error_after: recon.error_after,
                output_error,
                accuracy: accuracy(&pruned)?,
            });
        }
    }
    Ok(ComparisonTable {
        upper_layer: upper.to_string(),
        lower_layer: lower.to_string(),
        original_accuracy: accuracy(model)?,
        rows,
    })
}

fn outputs(model: &ModelGraph, inputs: &[Tensor]) -> Result<Vec<Tensor>> {
    inputs.iter().map(|x| forward(model, x, &[]).map(|(y, _)| y)).collect()
}

fn relative_distance(got: &[Tensor], want: &[Tensor]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (g, w) in got.iter().zip(want) {
        for (a, b) in g.data().iter().zip(w.data()) {
            let (a, b) = (*a as f64, *b as f64);
            num += (a - b) * (a - b);
            den += b * b;
        }
    }
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        num.sqrt()
    }
}
