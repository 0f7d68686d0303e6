//! Channel and filter merging by cluster averaging, plus plain selection.

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::ssc::ClusterAssignment;

fn check_rank4(w: &Tensor, what: &str) -> Result<()> {
    if w.rank() != 4 {
        return Err(Error::Shape(format!("{what} weights must be rank 4, got {:?}", w.shape())));
    }
    Ok(())
}

/// Averages the input channels of every filter within each cluster:
/// `V_j = mean_{p ∈ I_j} W[m, p]`. Output channel `j` is cluster `j`.
pub fn cluster_lower_channels(w: &Tensor, assignment: &ClusterAssignment) -> Result<Tensor> {
    check_rank4(w, "lower")?;
    let [c_out, c, kh, kw] = [w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]];
    if assignment.len() != c {
        return Err(Error::Shape(format!(
            "assignment covers {} channels, lower layer has {c}",
            assignment.len()
        )));
    }
    let area = kh * kw;
    let members = assignment.members();
    let k = members.len();
    let src = w.data();
    let mut out = Vec::with_capacity(c_out * k * area);
    let mut acc = vec![0.0f64; area];
    for m in 0..c_out {
        for group in &members {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for &p in group {
                let kernel = &src[(m * c + p) * area..(m * c + p + 1) * area];
                for (a, v) in acc.iter_mut().zip(kernel) {
                    *a += *v as f64;
                }
            }
            let inv = group.len() as f64;
            out.extend(acc.iter().map(|a| (a / inv) as f32));
        }
    }
    Tensor::new(vec![c_out, k, kh, kw], out)
}

/// Averages whole filters (and their biases) within each cluster.
pub fn cluster_upper_filters(
    w: &Tensor,
    bias: Option<&Tensor>,
    assignment: &ClusterAssignment,
) -> Result<(Tensor, Option<Tensor>)> {
    check_rank4(w, "upper")?;
    let c = w.shape()[0];
    if assignment.len() != c {
        return Err(Error::Shape(format!(
            "assignment covers {} channels, upper layer has {c} filters",
            assignment.len()
        )));
    }
    let per = w.stride0();
    let members = assignment.members();
    let src = w.data();
    let mut out = Vec::with_capacity(members.len() * per);
    let mut acc = vec![0.0f64; per];
    for group in &members {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for &p in group {
            for (a, v) in acc.iter_mut().zip(&src[p * per..(p + 1) * per]) {
                *a += *v as f64;
            }
        }
        let n = group.len() as f64;
        out.extend(acc.iter().map(|a| (a / n) as f32));
    }
    let mut shape = w.shape().to_vec();
    shape[0] = members.len();
    let bias = match bias {
        Some(b) => {
            if b.shape() != [c] {
                return Err(Error::Shape(format!("bias shape {:?} for {c} filters", b.shape())));
            }
            let avg = members
                .iter()
                .map(|g| (g.iter().map(|&p| b.data()[p] as f64).sum::<f64>() / g.len() as f64) as f32)
                .collect();
            Some(Tensor::new(vec![members.len()], avg)?)
        }
        None => None,
    };
    Ok((Tensor::new(shape, out)?, bias))
}

fn check_keep(keep: &[usize], c: usize) -> Result<()> {
    if keep.is_empty() {
        return Err(Error::Parameter("keep set is empty".into()));
    }
    if keep.iter().any(|&k| k >= c) || keep.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Parameter(format!(
            "keep set must be strictly ascending indices below {c}"
        )));
    }
    Ok(())
}

/// Keeps only the listed input channels of every filter.
pub fn select_lower_channels(w: &Tensor, keep: &[usize]) -> Result<Tensor> {
    check_rank4(w, "lower")?;
    let [c_out, c, kh, kw] = [w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]];
    check_keep(keep, c)?;
    let area = kh * kw;
    let mut out = Vec::with_capacity(c_out * keep.len() * area);
    for m in 0..c_out {
        for &p in keep {
            out.extend_from_slice(&w.data()[(m * c + p) * area..(m * c + p + 1) * area]);
        }
    }
    Tensor::new(vec![c_out, keep.len(), kh, kw], out)
}

/// Keeps only the listed filters.
pub fn select_upper_filters(
    w: &Tensor,
    bias: Option<&Tensor>,
    keep: &[usize],
) -> Result<(Tensor, Option<Tensor>)> {
    check_rank4(w, "upper")?;
    check_keep(keep, w.shape()[0])?;
    let per = w.stride0();
    let mut out = Vec::with_capacity(keep.len() * per);
    for &p in keep {
        out.extend_from_slice(&w.data()[p * per..(p + 1) * per]);
    }
    let mut shape = w.shape().to_vec();
    shape[0] = keep.len();
    let bias = bias
        .map(|b| Tensor::new(vec![keep.len()], keep.iter().map(|&p| b.data()[p]).collect()))
        .transpose()?;
    Ok((Tensor::new(shape, out)?, bias))
}
