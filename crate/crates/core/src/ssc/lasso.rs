use crate::error::{Error, Result};
use crate::linalg::{soft_threshold, sym_eigen, Matrix};

/// Sparse self-expressive code `C` of a data matrix: `X ≈ X·C`, `diag(C) = 0`.
#[derive(Clone, Debug)]
pub struct SelfExpressiveness {
    /// `c × c`; column `j` expresses channel `j` through the others.
    pub coeffs: Matrix,
    /// Data-fidelity weight actually used.
    pub lambda: f64,
    pub iterations_run: usize,
    pub final_objective: f64,
    /// Summed objective after each iteration, non-increasing.
    pub objective_trace: Vec<f64>,
}

impl SelfExpressiveness {
    /// All-zero code for when no solve is needed.
    pub(crate) fn empty(c: usize) -> Self {
        Self {
            coeffs: Matrix::zeros(c, c),
            lambda: 0.0,
            iterations_run: 0,
            final_objective: 0.0,
            objective_trace: Vec::new(),
        }
    }
}

/// Solves `min ‖C‖₁ + (λ/2)‖X − X·C‖²_F` subject to `diag(C) = 0`.
///
/// `λ = alpha / μ` where `μ` is the smallest, over channels with any
/// correlation at all, of the largest absolute inner product with another
/// channel. Each column is an independent LASSO problem solved by
/// accelerated proximal gradient with a fixed `1/L` step and momentum
/// restarts, which keeps the objective non-increasing.
pub fn solve_self_expressive(
    x: &Matrix,
    alpha: f64,
    max_iter: usize,
    tol: f64,
) -> Result<SelfExpressiveness> {
    let n = x.cols();
    if n < 2 {
        return Err(Error::Parameter(format!(
            "self-expression needs at least 2 columns, got {n}"
        )));
    }
    if alpha.is_nan() || alpha <= 1.0 {
        return Err(Error::Parameter(format!("alpha must exceed 1, got {alpha}")));
    }
    let gram = x.gram();

    let mu = (0..n)
        .filter_map(|j| {
            let m = (0..n)
                .filter(|&i| i != j)
                .map(|i| gram[(i, j)].abs())
                .fold(0.0, f64::max);
            (m > 0.0).then_some(m)
        })
        .reduce(f64::min)
        .ok_or_else(|| Error::DegenerateData("all columns are mutually orthogonal".into()))?;
    let lambda = alpha / mu;
    let top = *sym_eigen(&gram)?
        .eigenvalues
        .last()
        .expect("n >= 2");
    let lipschitz = lambda * top;

    let mut coeffs = Matrix::zeros(n, n);
    let mut traces = Vec::with_capacity(n);
    for j in 0..n {
        let (col, trace) = solve_column(&gram, j, lambda, lipschitz, max_iter, tol);
        for (i, v) in col.into_iter().enumerate() {
            coeffs[(i, j)] = v;
        }
        traces.push(trace);
    }

    let iterations_run = traces.iter().map(|t| t.len() - 1).max().unwrap_or(0);
    let objective_trace: Vec<f64> = (0..=iterations_run)
        .map(|it| traces.iter().map(|t| t[it.min(t.len() - 1)]).sum())
        .collect();
    let final_objective = *objective_trace.last().expect("contains the start value");
    Ok(SelfExpressiveness {
        coeffs,
        lambda,
        iterations_run,
        final_objective,
        objective_trace,
    })
}

/// Objective of column `j` for code `c`, evaluated through the Gram matrix.
fn column_objective(gram: &Matrix, j: usize, lambda: f64, c: &[f64], gc: &[f64]) -> f64 {
    let quad: f64 = c.iter().zip(gc).map(|(a, b)| a * b).sum();
    let lin: f64 = c.iter().enumerate().map(|(i, v)| v * gram[(i, j)]).sum();
    let fit = (gram[(j, j)] - 2.0 * lin + quad).max(0.0);
    0.5 * lambda * fit + c.iter().map(|v| v.abs()).sum::<f64>()
}

fn gram_times(gram: &Matrix, c: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = gram.row(i).iter().zip(c).map(|(a, b)| a * b).sum();
    }
}

/// Returns the code for column `j` and the objective after each iteration
/// (index 0 is the all-zero start).
fn solve_column(
    gram: &Matrix,
    j: usize,
    lambda: f64,
    lipschitz: f64,
    max_iter: usize,
    tol: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = gram.rows();
    let mut x = vec![0.0; n];
    let mut gx = vec![0.0; n];
    let mut f_x = column_objective(gram, j, lambda, &x, &gx);
    let mut trace = vec![f_x];
    if lipschitz <= 0.0 || gram[(j, j)] == 0.0 {
        return (x, trace);
    }

    let step = 1.0 / lipschitz;
    let mut y = x.clone();
    let mut gy = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut gz = vec![0.0; n];
    let mut t = 1.0f64;
    let mut momentum = false;

    for _ in 0..max_iter {
        gram_times(gram, &y, &mut gy);
        for i in 0..n {
            let grad = lambda * (gy[i] - gram[(i, j)]);
            z[i] = soft_threshold(y[i] - step * grad, step);
        }
        z[j] = 0.0;
        gram_times(gram, &z, &mut gz);
        let f_z = column_objective(gram, j, lambda, &z, &gz);

        if f_z > f_x {
            if momentum {
                // overshoot: drop momentum and take a plain step from x
                y.copy_from_slice(&x);
                t = 1.0;
                momentum = false;
                trace.push(f_x);
                continue;
            }
            // a plain step can only fail to descend through rounding
            break;
        }

        let rel = (f_x - f_z) / f_x.abs().max(f64::MIN_POSITIVE);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        for i in 0..n {
            y[i] = z[i] + beta * (z[i] - x[i]);
        }
        std::mem::swap(&mut x, &mut z);
        std::mem::swap(&mut gx, &mut gz);
        f_x = f_z;
        t = t_next;
        momentum = true;
        trace.push(f_x);
        if rel < tol {
            break;
        }
    }
    (x, trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ssc::data::normalize_columns;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn from_columns(cols: &[Vec<f64>]) -> Matrix {
        let rows = cols[0].len();
        let mut m = Matrix::zeros(rows, cols.len());
        for (j, c) in cols.iter().enumerate() {
            for (i, v) in c.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        m
    }

    #[test]
    fn duplicated_column_links_only_its_twin() {
        let x = vec![1.0, 0.0, 0.0, 0.0];
        let y = vec![0.0, 1.0, 0.0, 0.0];
        let m = from_columns(&[x.clone(), x, y]);
        let se = solve_self_expressive(&m, 20.0, 500, 1e-10).unwrap();
        let c = &se.coeffs;
        for i in 0..3 {
            assert_eq!(c[(i, i)], 0.0);
        }
        assert!(c[(0, 1)].abs() > 0.5 && c[(1, 0)].abs() > 0.5);
        for (i, j) in [(0, 2), (1, 2), (2, 0), (2, 1)] {
            assert!(c[(i, j)].abs() <= 1e-6, "C[{i},{j}] = {}", c[(i, j)]);
        }
        // closed form of min |c| + (λ/2)(1 - c)², λ = 20: c = 1 - 1/λ
        assert!((c[(0, 1)] - 0.95).abs() < 1e-6);
    }

    #[test]
    fn orthogonal_lines_give_block_diagonal_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = [1.0, 1.0, 0.0, 0.0];
        let v = [0.0, 0.0, 1.0, -1.0];
        let mut cols = Vec::new();
        for base in [u, v] {
            for _ in 0..3 {
                let s: f64 = rng.gen_range(0.5..2.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                cols.push(base.iter().map(|b| b * s).collect::<Vec<_>>());
            }
        }
        let mut m = from_columns(&cols);
        normalize_columns(&mut m);
        let se = solve_self_expressive(&m, 20.0, 500, 1e-10).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let same = (i < 3) == (j < 3);
                if !same {
                    assert_eq!(se.coeffs[(i, j)], 0.0);
                }
            }
            // every point is explained by its own line
            let support: usize = (0..6).filter(|&r| se.coeffs[(r, i)] != 0.0).count();
            assert!(support >= 1);
        }
    }

    #[test]
    fn objective_trace_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let data: Vec<f64> = (0..30 * 10).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut m = Matrix::new(30, 10, data).unwrap();
        normalize_columns(&mut m);
        let se = solve_self_expressive(&m, 20.0, 300, 1e-12).unwrap();
        assert!(se.objective_trace.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(se.objective_trace.len(), se.iterations_run + 1);
        assert_eq!(se.final_objective, *se.objective_trace.last().unwrap());
        for i in 0..10 {
            assert_eq!(se.coeffs[(i, i)], 0.0);
        }
    }

    #[test]
    fn degenerate_and_bad_parameters() {
        let m = Matrix::identity(3);
        assert!(matches!(
            solve_self_expressive(&m, 20.0, 10, 1e-6),
            Err(Error::DegenerateData(_))
        ));
        let one = Matrix::zeros(3, 1);
        assert!(matches!(solve_self_expressive(&one, 20.0, 10, 1e-6), Err(Error::Parameter(_))));
        let two = Matrix::from_rows(&[[1.0, 1.0]]).unwrap();
        assert!(matches!(solve_self_expressive(&two, 1.0, 10, 1e-6), Err(Error::Parameter(_))));
    }
}
