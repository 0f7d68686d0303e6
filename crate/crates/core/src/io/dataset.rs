use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tensor_file::{load_tensor, TENSOR_EXTENSION};
use crate::error::{Error, Result};
use crate::nn::{forward, ModelGraph, Tensor};

/// Tensor files in `dir`, sorted by file name.
pub fn tensor_files(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == TENSOR_EXTENSION) {
            files.push(path);
        }
    }
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Loads every tensor file in `dir` in name order; all must share a shape.
pub fn load_tensor_dir(dir: impl AsRef<Path>) -> Result<Vec<(String, Tensor)>> {
    let dir = dir.as_ref();
    let files = tensor_files(dir)?;
    load_files(dir, &files)
}

fn load_files(dir: &Path, files: &[PathBuf]) -> Result<Vec<(String, Tensor)>> {
    if files.is_empty() {
        return Err(Error::Input(format!(
            "no .{TENSOR_EXTENSION} files in {}",
            dir.display()
        )));
    }
    let mut out: Vec<(String, Tensor)> = Vec::with_capacity(files.len());
    for path in files {
        let t = load_tensor(path)?;
        if let Some((first, f)) = out.first() {
            if f.shape() != t.shape() {
                return Err(Error::Input(format!(
                    "{} has shape {:?} but {first} has {:?}",
                    path.display(),
                    t.shape(),
                    f.shape()
                )));
            }
        }
        out.push((file_name(path), t));
    }
    Ok(out)
}

/// Calibration tensors from `dir`: all of them in name order, or a seeded
/// uniform subset of `limit` (still in name order) when there are more.
pub fn load_calibration(dir: impl AsRef<Path>, limit: usize, seed: u64) -> Result<Vec<Tensor>> {
    let dir = dir.as_ref();
    if limit == 0 {
        return Err(Error::Parameter("calibration limit must be positive".into()));
    }
    let mut files = tensor_files(dir)?;
    if files.len() > limit {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut keep = index::sample(&mut rng, files.len(), limit).into_vec();
        keep.sort_unstable();
        files = keep.into_iter().map(|i| files[i].clone()).collect();
    }
    Ok(load_files(dir, &files)?.into_iter().map(|(_, t)| t).collect())
}

/// Reads a JSON object mapping tensor file names to class indices.
pub fn load_labels(path: impl AsRef<Path>) -> Result<BTreeMap<String, usize>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

/// Looks up the label of every named tensor; a file may be listed by its
/// full name or by its stem.
pub fn labels_for(names: &[String], labels: &BTreeMap<String, usize>) -> Result<Vec<usize>> {
    names
        .iter()
        .map(|n| {
            let stem = Path::new(n).file_stem().map(|s| s.to_string_lossy().into_owned());
            labels
                .get(n)
                .or_else(|| stem.and_then(|s| labels.get(&s)))
                .copied()
                .ok_or_else(|| Error::Input(format!("no label for `{n}`")))
        })
        .collect()
}

/// Whether `class` is among the `k` largest logits, ties ranked by lower
/// class index.
pub fn in_top_k(logits: &[f32], class: usize, k: usize) -> bool {
    let v = logits[class];
    let rank = logits
        .iter()
        .enumerate()
        .filter(|(j, x)| **x > v || (**x == v && *j < class))
        .count();
    rank < k
}

/// Fraction of inputs whose label is among the model's top `k` outputs.
pub fn evaluate_topk(model: &ModelGraph, inputs: &[Tensor], labels: &[usize], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Parameter("top-k needs k >= 1".into()));
    }
    if inputs.is_empty() {
        return Err(Error::Input("no inputs to evaluate".into()));
    }
    if labels.len() != inputs.len() {
        return Err(Error::Input(format!("{} labels for {} inputs", labels.len(), inputs.len())));
    }
    let mut hits = 0usize;
    for (x, &label) in inputs.iter().zip(labels) {
        let (y, _) = forward(model, x, &[])?;
        if label >= y.numel() {
            return Err(Error::Input(format!(
                "label {label} out of range for {} classes",
                y.numel()
            )));
        }
        if in_top_k(y.data(), label, k) {
            hits += 1;
        }
    }
    Ok(hits as f64 / inputs.len() as f64)
}
