use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use sscprune::baselines::{compare_selectors, ComparisonTable, HeldOut, Selector};
use sscprune::linalg::Matrix;
use sscprune::ssc::{affinity, solve_self_expressive, spectral_cluster};
use sscprune::{zoo, Error, Result, RunConfig};

const MAX_SUBSPACES: usize = 6;
const MAX_POINTS: usize = 120;

/// Points drawn from a union of random linear subspaces.
#[derive(Clone, Copy, Debug)]
pub struct SubspaceParams {
    pub subspaces: usize,
    pub dim: usize,
    pub ambient: usize,
    pub points_per_subspace: usize,
    pub noise: f64,
    pub alpha: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ClusterResult {
    pub n: usize,
    pub truth: Vec<usize>,
    pub labels: Vec<usize>,
    /// Fraction of points labelled correctly under the best matching of
    /// found clusters to true subspaces.
    pub accuracy: f64,
    /// Row-major `n × n` affinity scaled to a maximum of 1.
    pub affinity: Vec<f64>,
    /// Share of total affinity that links points of different subspaces.
    pub cross_affinity: f64,
    pub lambda: f64,
    pub iterations: usize,
}

impl SubspaceParams {
    fn validate(&self) -> Result<()> {
        let n = self.subspaces * self.points_per_subspace;
        if self.subspaces == 0 || self.subspaces > MAX_SUBSPACES {
            return Err(Error::Parameter(format!("subspaces must be in 1..={MAX_SUBSPACES}")));
        }
        if self.dim == 0 || self.dim >= self.ambient {
            return Err(Error::Parameter("subspace dimension must be in 1..ambient".into()));
        }
        if self.points_per_subspace <= self.dim || n > MAX_POINTS {
            return Err(Error::Parameter(format!(
                "need more than {} points per subspace and at most {MAX_POINTS} in total",
                self.dim
            )));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::Parameter("noise must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Unit-norm columns, grouped by subspace, and their true labels.
pub fn union_of_subspaces(p: &SubspaceParams) -> (Matrix, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let n = p.subspaces * p.points_per_subspace;
    let mut x = Matrix::zeros(p.ambient, n);
    let mut truth = Vec::with_capacity(n);
    for s in 0..p.subspaces {
        let basis: Vec<f64> = (0..p.ambient * p.dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for _ in 0..p.points_per_subspace {
            let j = truth.len();
            let coeffs: Vec<f64> = (0..p.dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            for i in 0..p.ambient {
                let clean: f64 = (0..p.dim).map(|d| basis[i * p.dim + d] * coeffs[d]).sum();
                x[(i, j)] = clean + p.noise * rng.gen_range(-1.0..1.0);
            }
            truth.push(s);
        }
    }
    for j in 0..n {
        let norm = (0..p.ambient).map(|i| x[(i, j)] * x[(i, j)]).sum::<f64>().sqrt();
        if norm > 0.0 {
            (0..p.ambient).for_each(|i| x[(i, j)] /= norm);
        }
    }
    (x, truth)
}

/// Best accuracy over all matchings of found labels to true labels.
pub fn matched_accuracy(truth: &[usize], labels: &[usize], k: usize) -> f64 {
    let mut counts = vec![vec![0usize; k]; k];
    for (&t, &l) in truth.iter().zip(labels) {
        counts[l][t] += 1;
    }
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = 0;
    permute(&mut perm, 0, &mut |p| {
        best = best.max((0..k).map(|l| counts[l][p[l]]).sum());
    });
    best as f64 / truth.len() as f64
}

fn permute(p: &mut [usize], i: usize, visit: &mut impl FnMut(&[usize])) {
    if i == p.len() {
        visit(p);
        return;
    }
    for j in i..p.len() {
        p.swap(i, j);
        permute(p, i + 1, visit);
        p.swap(i, j);
    }
}

pub fn cluster_demo(p: &SubspaceParams) -> Result<ClusterResult> {
    p.validate()?;
    let cfg = RunConfig {
        alpha: p.alpha,
        seed: p.seed,
        ..RunConfig::default()
    };
    cfg.validate()?;
    let (x, truth) = union_of_subspaces(p);
    let se = solve_self_expressive(&x, cfg.alpha, cfg.ssc_max_iter, cfg.ssc_tol)?;
    let assignment = spectral_cluster(&se.coeffs, p.subspaces, cfg.seed, cfg.kmeans_restarts)?;
    let w = affinity(&se.coeffs)?;
    let n = truth.len();
    let (mut total, mut cross) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            total += w[(i, j)];
            if truth[i] != truth[j] {
                cross += w[(i, j)];
            }
        }
    }
    let peak = w.data().iter().cloned().fold(0.0, f64::max);
    let scale = if peak > 0.0 { 1.0 / peak } else { 0.0 };
    Ok(ClusterResult {
        n,
        accuracy: matched_accuracy(&truth, assignment.labels(), p.subspaces),
        labels: assignment.labels().to_vec(),
        truth,
        affinity: w.data().iter().map(|v| v * scale).collect(),
        cross_affinity: if total > 0.0 { cross / total } else { 0.0 },
        lambda: se.lambda,
        iterations: se.iterations_run,
    })
}

/// Every selector at every ratio on the planted-redundancy net, pruning
/// the input channels of `conv3`.
pub fn selector_sweep(seed: u64, perturbation: f32, ratios: &[f64]) -> Result<ComparisonTable> {
    if ratios.is_empty() {
        return Err(Error::Parameter("no ratios to sweep".into()));
    }
    if !(perturbation.is_finite() && perturbation >= 0.0) {
        return Err(Error::Parameter("perturbation must be finite and non-negative".into()));
    }
    let cfg = RunConfig {
        seed,
        ..RunConfig::default()
    };
    let model = zoo::planted_redundancy(seed, perturbation);
    let (calib, _) = zoo::synthetic_images(model.input_shape(), 4, 16, seed);
    let (held, _) = zoo::synthetic_images(model.input_shape(), 4, 32, seed.wrapping_add(1));
    let labels = zoo::teacher_labels(&model, &held)?;
    let selectors = ["ssc", "kmeans", "firstk", "maxresponse", "random"]
        .iter()
        .map(|s| Selector::parse(s, seed))
        .collect::<Result<Vec<_>>>()?;
    let held_out = HeldOut {
        inputs: &held,
        labels: Some(&labels),
    };
    compare_selectors(&model, "conv2", "conv3", ratios, &calib, held_out, &selectors, &cfg)
}
