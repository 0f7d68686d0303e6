use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::Tensor;

/// Stacks each `[c, H, W]` map as an `[H·W, c]` block, subsamples rows down
/// to `max_rows` and scales every column to unit norm.
pub fn build_data_matrix(maps: &[Tensor], max_rows: usize, seed: u64) -> Result<Matrix> {
    let mut x = stack_rows(maps, max_rows, seed)?;
    normalize_columns(&mut x);
    Ok(x)
}

fn stack_rows(maps: &[Tensor], max_rows: usize, seed: u64) -> Result<Matrix> {
    let first = maps
        .first()
        .ok_or_else(|| Error::Input("no feature maps to cluster".into()))?;
    if max_rows == 0 {
        return Err(Error::Parameter("max_rows must be positive".into()));
    }
    let shape = first.shape();
    if shape.is_empty() {
        return Err(Error::Shape("feature maps must have a channel axis".into()));
    }
    if let Some((i, t)) = maps.iter().enumerate().find(|(_, t)| t.shape() != shape) {
        return Err(Error::Shape(format!(
            "feature map {i} has shape {:?}, expected {shape:?}",
            t.shape()
        )));
    }
    let c = shape[0];
    let per_image = first.stride0();
    let total = per_image * maps.len();

    let rows: Vec<usize> = if total > max_rows {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = index::sample(&mut rng, total, max_rows).into_vec();
        picked.sort_unstable();
        picked
    } else {
        (0..total).collect()
    };

    let mut data = Vec::with_capacity(rows.len() * c);
    for &r in &rows {
        let map = maps[r / per_image].data();
        let pos = r % per_image;
        data.extend((0..c).map(|ch| map[ch * per_image + pos] as f64));
    }
    Matrix::new(rows.len(), c, data)
}

/// Scales columns to unit Euclidean norm; zero columns stay zero.
pub(crate) fn normalize_columns(x: &mut Matrix) {
    let (rows, cols) = x.shape();
    let mut norms = vec![0.0f64; cols];
    for i in 0..rows {
        for (n, v) in norms.iter_mut().zip(x.row(i)) {
            *n += v * v;
        }
    }
    let inv: Vec<f64> = norms
        .iter()
        .map(|n| if *n > 0.0 { 1.0 / n.sqrt() } else { 0.0 })
        .collect();
    for i in 0..rows {
        for (v, s) in x.row_mut(i).iter_mut().zip(&inv) {
            *v *= s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testutil::random_tensor;

    #[test]
    fn single_row_normalizes_to_ones() {
        let t = Tensor::new(vec![2, 1, 1], vec![3.0, 4.0]).unwrap();
        let x = build_data_matrix(&[t], 4096, 0).unwrap();
        assert_eq!(x.shape(), (1, 2));
        assert_eq!(x.data(), &[1.0, 1.0]);
    }

    #[test]
    fn duplicate_images_stack_duplicate_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = random_tensor(&mut rng, vec![3, 2, 2]);
        let x = build_data_matrix(&[t.clone(), t], 4096, 0).unwrap();
        assert_eq!(x.shape(), (8, 3));
        for r in 0..4 {
            assert_eq!(x.row(r), x.row(r + 4));
        }
    }

    #[test]
    fn zero_column_stays_zero() {
        let t = Tensor::new(vec![2, 1, 2], vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let x = build_data_matrix(&[t], 10, 0).unwrap();
        assert_eq!(x.column(0), vec![0.0, 0.0]);
    }

    #[test]
    fn subsampled_rows_come_from_full_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let maps: Vec<Tensor> = (0..3).map(|_| random_tensor(&mut rng, vec![4, 5, 5])).collect();
        let full = stack_rows(&maps, usize::MAX, 0).unwrap();
        assert_eq!(full.shape(), (75, 4));
        let sub = stack_rows(&maps, 20, 7).unwrap();
        assert_eq!(sub.shape(), (20, 4));
        for r in 0..20 {
            assert!((0..75).any(|f| full.row(f) == sub.row(r)));
        }
        let mut normalized = sub.clone();
        normalize_columns(&mut normalized);
        assert_eq!(build_data_matrix(&maps, 20, 7).unwrap(), normalized);
    }

    #[test]
    fn empty_input_and_mixed_shapes_rejected() {
        assert!(matches!(build_data_matrix(&[], 10, 0), Err(Error::Input(_))));
        let a = Tensor::zeros(vec![2, 2, 2]);
        let b = Tensor::zeros(vec![2, 3, 2]);
        assert!(matches!(build_data_matrix(&[a, b], 10, 0), Err(Error::Shape(_))));
    }
}
