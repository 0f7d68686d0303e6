use crate::error::{Error, Result};
use crate::linalg::{matmul, ridge_least_squares, Matrix};
use crate::nn::{forward, forward_until, im2col, ConvLayer, ModelGraph, Tensor};

/// Ridge used when an unregularized solve turns out singular.
pub const FALLBACK_RIDGE: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct Reconstruction {
    /// Lower layer with refitted weights and bias.
    pub lower: ConvLayer,
    /// Relative Frobenius error of the merged lower layer before refitting.
    pub error_before: f64,
    pub error_after: f64,
    /// False when the refit did not improve on the merged weights and they were kept.
    pub refit_applied: bool,
}

/// Design and target matrices of the lower layer's least-squares problem.
struct LeastSquaresProblem {
    /// im2col rows of the pruned inputs with a trailing ones column.
    design: Matrix,
    /// Original lower-layer outputs, one column per filter.
    targets: Matrix,
}

/// Refits the lower layer of a pruned pair so its outputs on `calib` match
/// the original model's.
///
/// Targets are the lower layer's raw outputs in `original`; inputs come from
/// `current` with both pruned layers substituted, so any upstream pruning
/// error is part of what the refit sees. The least-squares objective is the
/// mean squared error per output position, so `ridge` is independent of the
/// calibration set size.
pub fn reconstruct(
    original: &ModelGraph,
    current: &ModelGraph,
    pruned_upper: &ConvLayer,
    pruned_lower: &ConvLayer,
    calib: &[Tensor],
    ridge: f64,
) -> Result<Reconstruction> {
    if calib.is_empty() {
        return Err(Error::Input("reconstruction needs calibration inputs".into()));
    }
    let staged = current.with_convs_replaced(vec![pruned_upper.clone(), pruned_lower.clone()])?;
    let problem = build_problem(original, &staged, pruned_lower, calib)?;

    let weights_before = weight_matrix(pruned_lower);
    let error_before = relative_error(&problem, &weights_before)?;

    let solution = match ridge_least_squares(&problem.design, &problem.targets, ridge) {
        Err(Error::Singular { .. }) if ridge == 0.0 => {
            ridge_least_squares(&problem.design, &problem.targets, FALLBACK_RIDGE)?
        }
        other => other?,
    };
    let refit = conv_from_solution(pruned_lower, &solution)?;
    let error_after = relative_error(&problem, &weight_matrix(&refit))?;

    Ok(if error_after <= error_before {
        Reconstruction {
            lower: refit,
            error_before,
            error_after,
            refit_applied: true,
        }
    } else {
        Reconstruction {
            lower: pruned_lower.clone(),
            error_before,
            error_after: error_before,
            refit_applied: false,
        }
    })
}

fn build_problem(
    original: &ModelGraph,
    staged: &ModelGraph,
    lower: &ConvLayer,
    calib: &[Tensor],
) -> Result<LeastSquaresProblem> {
    let lower_idx = staged.layer_index(&lower.name)?;
    let (kh, kw) = lower.kernel();
    let cols = lower.c_in() * kh * kw + 1;
    let c_out = lower.c_out();

    let mut design = Vec::new();
    let mut targets = Vec::new();
    let mut rows = 0;
    for image in calib {
        let (_, captured) = forward(original, image, &[lower.name.as_str()])?;
        let target = &captured[&lower.name];
        let input = forward_until(staged, image, lower_idx)?;
        let patches = im2col(&input, kh, kw, lower.stride, lower.padding)?;
        let positions = patches.rows();
        if target.numel() != positions * c_out {
            return Err(Error::Shape(format!(
                "layer `{}` output {:?} does not match {positions} positions x {c_out} filters",
                lower.name,
                target.shape()
            )));
        }
        for p in 0..positions {
            design.extend_from_slice(patches.row(p));
            design.push(1.0);
            targets.extend((0..c_out).map(|o| target.data()[o * positions + p] as f64));
        }
        rows += positions;
    }
    let mut design = Matrix::new(rows, cols, design)?;
    let mut targets = Matrix::new(rows, c_out, targets)?;
    let scale = 1.0 / (rows as f64).sqrt();
    design.scale(scale);
    targets.scale(scale);
    Ok(LeastSquaresProblem { design, targets })
}

/// `[c_in·k_h·k_w + 1, c_out]`: filters as columns with the bias last.
fn weight_matrix(conv: &ConvLayer) -> Matrix {
    let c_out = conv.c_out();
    let k = conv.weights.stride0();
    let bias = conv.bias_or_zero();
    let mut m = Matrix::zeros(k + 1, c_out);
    for o in 0..c_out {
        for i in 0..k {
            m[(i, o)] = conv.weights.data()[o * k + i] as f64;
        }
        m[(k, o)] = bias[o] as f64;
    }
    m
}

fn conv_from_solution(template: &ConvLayer, solution: &Matrix) -> Result<ConvLayer> {
    let c_out = template.c_out();
    let k = template.weights.stride0();
    let mut weights = Vec::with_capacity(c_out * k);
    for o in 0..c_out {
        weights.extend((0..k).map(|i| solution[(i, o)] as f32));
    }
    let bias = (0..c_out).map(|o| solution[(k, o)] as f32).collect();
    ConvLayer::new(
        template.name.clone(),
        Tensor::new(template.weights.shape().to_vec(), weights)?,
        Some(Tensor::new(vec![c_out], bias)?),
        template.stride,
        template.padding,
    )
}

fn relative_error(problem: &LeastSquaresProblem, weights: &Matrix) -> Result<f64> {
    let pred = matmul(&problem.design, weights)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (p, t) in pred.data().iter().zip(problem.targets.data()) {
        num += (p - t) * (p - t);
        den += t * t;
    }
    Ok(if den > 0.0 { (num / den).sqrt() } else { num.sqrt() })
}
