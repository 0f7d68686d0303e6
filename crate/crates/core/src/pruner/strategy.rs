use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How many channels a pruned pair keeps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Target {
    /// Speed-up ratio `c / c′`.
    Ratio(f64),
    Channels(usize),
}

impl Target {
    /// Resolves to `c′` for a layer with `c` channels. Ratios map to
    /// `max(1, round(c / ratio))` with ties to even.
    pub fn channels_for(self, c: usize) -> Result<usize> {
        match self {
            Target::Ratio(r) => {
                if !(r.is_finite() && r >= 1.0) {
                    return Err(Error::Parameter(format!("speed-up ratio must be >= 1, got {r}")));
                }
                Ok(((c as f64 / r).round_ties_even() as usize).max(1))
            }
            Target::Channels(k) => {
                if k == 0 || k > c {
                    return Err(Error::Parameter(format!(
                        "cannot keep {k} of {c} channels"
                    )));
                }
                Ok(k)
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTarget {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    channels: Option<usize>,
}

impl RawTarget {
    fn resolve(&self, owner: &str) -> Result<Target> {
        match (self.ratio, self.channels) {
            (Some(r), None) => Ok(Target::Ratio(r)),
            (None, Some(c)) => Ok(Target::Channels(c)),
            _ => Err(Error::Input(format!(
                "strategy entry `{owner}` needs exactly one of `ratio` or `channels`"
            ))),
        }
    }

    fn from_target(t: Target) -> Self {
        match t {
            Target::Ratio(r) => Self {
                ratio: Some(r),
                channels: None,
            },
            Target::Channels(c) => Self {
                ratio: None,
                channels: Some(c),
            },
        }
    }
}

/// Prunes the input channels of `layer`, i.e. the filters of the conv
/// layer that feeds it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerEntry {
    pub layer: String,
    #[serde(flatten)]
    target: RawTarget,
}

/// Prunes the leading convs of a residual block up to its prunable prefix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockEntry {
    pub block: String,
    #[serde(flatten)]
    target: RawTarget,
}

impl LayerEntry {
    pub fn new(layer: impl Into<String>, target: Target) -> Self {
        Self {
            layer: layer.into(),
            target: RawTarget::from_target(target),
        }
    }

    pub fn target(&self) -> Result<Target> {
        self.target.resolve(&self.layer)
    }
}

impl BlockEntry {
    pub fn new(block: impl Into<String>, target: Target) -> Self {
        Self {
            block: block.into(),
            target: RawTarget::from_target(target),
        }
    }

    pub fn target(&self) -> Result<Target> {
        self.target.resolve(&self.block)
    }
}

/// Declarative whole-model pruning plan, stored as JSON:
///
/// ```json
/// { "layers": [ { "layer": "conv2", "ratio": 2.0 } ],
///   "blocks": [ { "block": "res1", "channels": 4 } ] }
/// ```
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PruneStrategy {
    #[serde(default)]
    pub layers: Vec<LayerEntry>,
    #[serde(default)]
    pub blocks: Vec<BlockEntry>,
}

impl PruneStrategy {
    /// Same ratio for the input channels of every listed layer.
    pub fn uniform<S: AsRef<str>>(layers: &[S], ratio: f64) -> Self {
        Self {
            layers: layers
                .iter()
                .map(|l| LayerEntry::new(l.as_ref(), Target::Ratio(ratio)))
                .collect(),
            blocks: Vec::new(),
        }
    }

    /// Same ratio for every listed residual block.
    pub fn blocks<S: AsRef<str>>(blocks: &[S], ratio: f64) -> Self {
        Self {
            layers: Vec::new(),
            blocks: blocks
                .iter()
                .map(|b| BlockEntry::new(b.as_ref(), Target::Ratio(ratio)))
                .collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty() && self.blocks.is_empty()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text)?;
        for l in &s.layers {
            l.target()?;
        }
        for b in &s.blocks {
            b.target()?;
        }
        Ok(s)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
