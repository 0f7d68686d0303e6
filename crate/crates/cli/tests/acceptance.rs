//! End-to-end acceptance suite. Every test writes one `criterion N: PASS|FAIL`
//! line straight to stderr so the verdicts show up even when output is
//! captured.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sscprune::baselines::ComparisonTable;
use sscprune::io::{load_model, load_tensor_dir, ReportFile};
use sscprune::linalg::{matmul, sym_eigen, Matrix};
use sscprune::nn::{forward, ConvLayer, Layer, ModelGraph, Tensor};
use sscprune::pruner::{cluster_lower_channels, cluster_upper_filters, prune_model, PruneReport, PruneStrategy};
use sscprune::ssc::{solve_self_expressive, spectral_cluster, ClusterAssignment};
use sscprune::zoo;
use sscprune::{Error, RunConfig};

fn verdict(n: u32, title: &str, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "criterion {n}: {status} {title} ({detail})");
    assert!(pass, "criterion {n} failed: {detail}");
}

fn sscprune(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sscprune"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = sscprune(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn max_abs_output_diff(a: &ModelGraph, b: &ModelGraph, inputs: &[Tensor]) -> f32 {
    inputs
        .iter()
        .map(|x| forward(a, x, &[]).unwrap().0.max_abs_diff(&forward(b, x, &[]).unwrap().0))
        .fold(0.0, f32::max)
}

fn relative_output_error(model: &ModelGraph, pruned: &ModelGraph, inputs: &[Tensor]) -> f64 {
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for x in inputs {
        let want = forward(model, x, &[]).unwrap().0;
        let got = forward(pruned, x, &[]).unwrap().0;
        for (g, w) in got.data().iter().zip(want.data()) {
            num += ((g - w) as f64).powi(2);
            den += (*w as f64).powi(2);
        }
    }
    (num / den).sqrt()
}

fn random_inputs(shape: &[usize], n: usize, seed: u64) -> Vec<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let numel = shape.iter().product();
    (0..n)
        .map(|_| Tensor::new(shape.to_vec(), (0..numel).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap())
        .collect()
}

#[test]
fn criterion_1_vgg16_cost_accounting() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("vgg16.scpm");
    ok(&["synth", "--arch", "vgg16", "--out", p(&model)]);
    let start = Instant::now();
    let text = ok(&["inspect", "--model", p(&model)]);
    let elapsed = start.elapsed();
    let total = |key: &str| -> f64 {
        text.lines()
            .find_map(|l| l.strip_prefix(key))
            .and_then(|rest| rest.split_whitespace().next())
            .unwrap()
            .parse()
            .unwrap()
    };
    let params = total("total params ");
    let flops = total("total flops ");
    let pass = (params / 138.34e6 - 1.0).abs() <= 0.01
        && (flops / 30.94e9 - 1.0).abs() <= 0.05
        && elapsed < Duration::from_secs(5);
    verdict(
        1,
        "VGG-16 cost accounting",
        pass,
        &format!("params {params:.0}, FLOPs {flops:.0}, inspect {elapsed:.2?}"),
    );
}

/// Columns from `groups` random `dim`-dimensional subspaces, unit norm,
/// shuffled.
fn union_of_subspaces(seed: u64, ambient: usize, groups: usize, dim: usize, per: usize) -> (Matrix, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = groups * per;
    let mut cols: Vec<(Vec<f64>, usize)> = Vec::with_capacity(n);
    for g in 0..groups {
        let basis: Vec<Vec<f64>> = (0..dim)
            .map(|_| (0..ambient).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        for _ in 0..per {
            let coef: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..ambient).map(|r| (0..dim).map(|d| coef[d] * basis[d][r]).sum()).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            cols.push((v.iter().map(|x| x / norm).collect(), g));
        }
    }
    for i in (1..n).rev() {
        cols.swap(i, rng.gen_range(0..=i));
    }
    let mut x = Matrix::zeros(ambient, n);
    for (j, (v, _)) in cols.iter().enumerate() {
        for r in 0..ambient {
            x[(r, j)] = v[r];
        }
    }
    (x, cols.into_iter().map(|(_, g)| g).collect())
}

fn best_permutation_accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    perms
        .iter()
        .map(|perm| pred.iter().zip(truth).filter(|(p, t)| perm[**p] == **t).count())
        .max()
        .unwrap() as f64
        / pred.len() as f64
}

#[test]
fn criterion_2_subspace_recovery() {
    let cfg = RunConfig::default();
    let start = Instant::now();
    let mut worst: f64 = 1.0;
    for seed in 0..20 {
        let (x, truth) = union_of_subspaces(seed, 8, 3, 2, 8);
        let se = solve_self_expressive(&x, cfg.alpha, cfg.ssc_max_iter, cfg.ssc_tol).unwrap();
        let a = spectral_cluster(&se.coeffs, 3, cfg.seed, cfg.kmeans_restarts).unwrap();
        worst = worst.min(best_permutation_accuracy(a.labels(), &truth));
    }
    let elapsed = start.elapsed();
    verdict(
        2,
        "subspace recovery",
        worst == 1.0 && elapsed < Duration::from_secs(10),
        &format!("worst accuracy over 20 seeds {:.1}%, {elapsed:.2?}", worst * 100.0),
    );
}

#[test]
fn criterion_3_identity_pruning() {
    let cfg = RunConfig::default();
    let cases = [
        ("toy-vgg", zoo::toy_vgg(11), PruneStrategy::uniform(&["conv2", "conv3", "conv4"], 1.0)),
        ("planted", zoo::planted_redundancy(11, 1e-3), PruneStrategy::uniform(&["conv2", "conv3"], 1.0)),
        ("toy-resnet", zoo::toy_resnet(11), PruneStrategy::blocks(&["res1", "res2"], 1.0)),
    ];
    let mut worst = 0.0f32;
    let mut details = Vec::new();
    for (name, model, strategy) in cases {
        let calib = zoo::synthetic_images(model.input_shape(), 4, 16, 1).0;
        let (pruned, _) = prune_model(&model, &strategy, &calib, &cfg).unwrap();
        let diff = max_abs_output_diff(&model, &pruned, &random_inputs(model.input_shape(), 16, 5));
        worst = worst.max(diff);
        details.push(format!("{name} {diff:.2e}"));
    }
    verdict(3, "identity pruning", worst <= 1e-3, &format!("max-abs diff: {}", details.join(", ")));
}

#[test]
fn criterion_4_planted_redundancy() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let start = Instant::now();
    let model_path = d.join("planted.scpm");
    ok(&[
        "synth", "--arch", "planted", "--seed", "1", "--out", p(&model_path),
        "--data", p(&d.join("calib")), "--count", "32", "--data-seed", "1",
    ]);
    // held-out split: same model and classes, different draws
    ok(&[
        "synth", "--arch", "planted", "--seed", "1", "--out", p(&d.join("copy.scpm")),
        "--data", p(&d.join("test")), "--count", "200", "--data-seed", "2",
    ]);
    std::fs::write(d.join("s.json"), r#"{"layers":[{"layer":"conv3","ratio":2.0}]}"#).unwrap();
    let (out, report) = (d.join("pruned.scpm"), d.join("report.json"));
    ok(&[
        "prune", "--model", p(&model_path), "--calib", p(&d.join("calib")), "--strategy", p(&d.join("s.json")),
        "--out", p(&out), "--report", p(&report),
        "--eval-data", p(&d.join("test")), "--labels", p(&d.join("test/labels.json")),
    ]);
    let elapsed = start.elapsed();

    let doc = ReportFile::<PruneReport>::load(&report).unwrap();
    let eval = doc.body.evaluation.clone().unwrap();
    let model = load_model(&model_path).unwrap();
    let pruned = load_model(&out).unwrap();
    let held: Vec<Tensor> = load_tensor_dir(d.join("test")).unwrap().into_iter().map(|(_, t)| t).collect();
    let out_err = relative_output_error(&model, &pruned, &held);
    let recon = doc.body.records[0].recon_error_after;
    let drop_pp = eval.accuracy_drop * 100.0;
    verdict(
        4,
        "planted redundancy at 2x",
        recon <= 0.01 && out_err <= 0.01 && drop_pp <= 1.0 && elapsed < Duration::from_secs(60),
        &format!(
            "layer error {recon:.2e}, output error {out_err:.2e}, accuracy drop {drop_pp:.2} pp, {elapsed:.2?}"
        ),
    );
}

fn compare_table(d: &Path, model: &Path, selectors: &str, seed: u64) -> ComparisonTable {
    let report = d.join(format!("cmp-{selectors}-{seed}.json"));
    ok(&[
        "compare", "--model", p(model), "--calib", p(&d.join("calib")), "--layer", "conv3",
        "--ratios", "2,4", "--selectors", selectors, "--report", p(&report), "--seed", &seed.to_string(),
    ]);
    ReportFile::<ComparisonTable>::load(&report).unwrap().body
}

#[test]
fn criterion_5_selector_dominance() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let model = d.join("planted.scpm");
    ok(&[
        "synth", "--arch", "planted", "--seed", "1", "--out", p(&model),
        "--data", p(&d.join("calib")), "--count", "32",
    ]);
    let main = compare_table(d, &model, "ssc,firstk,maxresponse,kmeans", 42);
    let randoms: Vec<ComparisonTable> = (42..47).map(|s| compare_table(d, &model, "random", s)).collect();

    let mut pass = true;
    let mut details = Vec::new();
    for ratio in [2.0, 4.0] {
        let at = |t: &ComparisonTable, sel: &str| {
            t.rows.iter().find(|r| r.selector == sel && r.ratio == ratio).unwrap().recon_error_after
        };
        let ssc = at(&main, "ssc");
        let mut others = vec![
            ("firstk", at(&main, "firstk")),
            ("maxresponse", at(&main, "maxresponse")),
            ("kmeans", at(&main, "kmeans")),
        ];
        others.push(("random", randoms.iter().map(|t| at(t, "random")).sum::<f64>() / randoms.len() as f64));
        let beaten_by: Vec<&str> = others.iter().filter(|(_, e)| ssc > *e).map(|(n, _)| *n).collect();
        pass &= beaten_by.is_empty();
        let listing: Vec<String> = others.iter().map(|(n, e)| format!("{n} {e:.4}")).collect();
        details.push(format!("{ratio}x: ssc {ssc:.4} vs {}", listing.join(", ")));
    }
    verdict(5, "selector dominance", pass, &details.join("; "));
}

/// Random conv/ReLU(/pool) chains with 2–3 convs.
fn random_instance(seed: u64) -> (ModelGraph, PruneStrategy) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let convs = rng.gen_range(2..=3);
    let mut c_in = rng.gen_range(1..=3);
    let mut layers = Vec::new();
    let mut names = Vec::new();
    for i in 0..convs {
        let c_out = rng.gen_range(3..=10);
        let k = [1, 3][rng.gen_range(0..2)];
        let name = format!("conv{i}");
        layers.push(Layer::Conv(zoo::random_conv(&mut rng, &name, c_in, c_out, k, k / 2)));
        layers.push(Layer::Relu { name: format!("relu{i}") });
        if i == 0 && rng.gen_bool(0.5) {
            layers.push(Layer::MaxPool { name: "pool".into(), kernel: 2, stride: 2 });
        }
        names.push(name);
        c_in = c_out;
    }
    let ratio = [1.5, 2.0, 3.0, 4.0][rng.gen_range(0..4)];
    let model = ModelGraph::new(vec![layers_input(&layers), 8, 8], layers).unwrap();
    (model, PruneStrategy::uniform(&names[1..], ratio))
}

fn layers_input(layers: &[Layer]) -> usize {
    layers.iter().find_map(Layer::as_conv).map(ConvLayer::c_in).unwrap()
}

#[test]
fn criterion_6_monotone_refit() {
    let cfg = RunConfig::default();
    let mut records = 0;
    let mut violations = Vec::new();
    let mut refused = Vec::new();
    let mut instances = 0;
    let mut seed = 0;
    // instances whose feature maps leave nothing to express (dead ReLU
    // channels) are refused by the solver and redrawn
    while instances < 50 {
        let (model, strategy) = random_instance(seed);
        let calib = random_inputs(model.input_shape(), 4, seed + 1000);
        match prune_model(&model, &strategy, &calib, &cfg) {
            Ok((_, report)) => {
                instances += 1;
                for r in &report.records {
                    records += 1;
                    if r.recon_error_after > r.recon_error_before {
                        violations.push(format!(
                            "seed {seed} {}: {} > {}",
                            r.lower_layer, r.recon_error_after, r.recon_error_before
                        ));
                    }
                }
            }
            Err(Error::DegenerateData(_)) => refused.push(seed),
            Err(e) => panic!("seed {seed}: {e}"),
        }
        seed += 1;
    }
    verdict(
        6,
        "monotone refit",
        violations.is_empty() && refused.len() <= 5,
        &format!(
            "{instances} instances, {records} records, {} violations {violations:?}, degenerate seeds redrawn {refused:?}",
            violations.len()
        ),
    );
}

#[test]
fn criterion_7_resnet_shape_contract() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let model_path = d.join("resnet.scpm");
    ok(&["synth", "--arch", "toy-resnet", "--out", p(&model_path), "--data", p(&d.join("calib")), "--count", "16"]);
    std::fs::write(
        d.join("s.json"),
        r#"{"blocks":[{"block":"res1","ratio":2.0},{"block":"res2","ratio":2.0}]}"#,
    )
    .unwrap();
    let out = d.join("pruned.scpm");
    ok(&[
        "prune", "--model", p(&model_path), "--calib", p(&d.join("calib")), "--strategy", p(&d.join("s.json")),
        "--out", p(&out), "--report", p(&d.join("r.json")),
    ]);
    let model = load_model(&model_path).unwrap();
    let pruned = load_model(&out).unwrap();
    let (before, after) = (model.shapes().unwrap(), pruned.shapes().unwrap());
    let mut ok_blocks = Vec::new();
    for block in model.blocks() {
        let last = block.conv_layer_names.last().unwrap();
        let i = model.layer_index(last).unwrap();
        // shapes[i + 1] is the block's output
        ok_blocks.push((block.block_id.clone(), before[i + 1] == after[i + 1], after[i + 1].clone()));
    }
    let inner: Vec<usize> = ["res1a", "res1b", "res2a", "res2b"]
        .iter()
        .map(|n| pruned.conv(n).unwrap().c_out())
        .collect();
    let runs = random_inputs(model.input_shape(), 4, 9)
        .iter()
        .all(|x| forward(&pruned, x, &[]).map(|(y, _)| y.shape() == [4]).unwrap_or(false));
    let pass = ok_blocks.iter().all(|(_, same, _)| *same) && inner == vec![4; 4] && runs;
    verdict(
        7,
        "residual block widths preserved",
        pass,
        &format!("block outputs {ok_blocks:?}, inner widths {inner:?}, end-to-end {runs}"),
    );
}

#[test]
fn criterion_8_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let model = d.join("toy.scpm");
    ok(&["synth", "--arch", "toy-vgg", "--out", p(&model), "--data", p(&d.join("calib")), "--count", "24"]);
    std::fs::write(
        d.join("s.json"),
        r#"{"layers":[{"layer":"conv2","ratio":2},{"layer":"conv3","ratio":2},{"layer":"conv4","channels":5}]}"#,
    )
    .unwrap();
    let run = |tag: &str| -> (Vec<u8>, Vec<u8>) {
        let (out, rep): (PathBuf, PathBuf) = (d.join(format!("{tag}.scpm")), d.join(format!("{tag}.json")));
        ok(&[
            "prune", "--model", p(&model), "--calib", p(&d.join("calib")), "--strategy", p(&d.join("s.json")),
            "--out", p(&out), "--report", p(&rep), "--seed", "7", "--limit", "16",
        ]);
        (std::fs::read(out).unwrap(), std::fs::read(rep).unwrap())
    };
    let (m1, r1) = run("a");
    let (m2, r2) = run("b");
    verdict(
        8,
        "determinism",
        m1 == m2 && r1 == r2,
        &format!("model {} bytes identical {}, report {} bytes identical {}", m1.len(), m1 == m2, r1.len(), r1 == r2),
    );
}

fn nested_loop_conv(x: &Tensor, conv: &ConvLayer) -> Vec<f32> {
    let (c_in, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (kh, kw) = conv.kernel();
    let (s, pad) = (conv.stride, conv.padding);
    let ho = (h + 2 * pad - kh) / s + 1;
    let wo = (w + 2 * pad - kw) / s + 1;
    let bias = conv.bias_or_zero();
    let wt = conv.weights.data();
    let mut out = vec![0.0; conv.c_out() * ho * wo];
    for o in 0..conv.c_out() {
        for i in 0..ho {
            for j in 0..wo {
                let mut acc = bias[o] as f64;
                for c in 0..c_in {
                    for a in 0..kh {
                        for b in 0..kw {
                            let (r, q) = ((i * s + a) as isize - pad as isize, (j * s + b) as isize - pad as isize);
                            if r < 0 || q < 0 || r >= h as isize || q >= w as isize {
                                continue;
                            }
                            acc += wt[((o * c_in + c) * kh + a) * kw + b] as f64
                                * x.data()[(c * h + r as usize) * w + q as usize] as f64;
                        }
                    }
                }
                out[(o * ho + i) * wo + j] = acc as f32;
            }
        }
    }
    out
}

#[test]
fn criterion_9_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);

    let mut conv_err = 0.0f32;
    for t in 0..100 {
        let c_in = rng.gen_range(1..=4);
        let c_out = rng.gen_range(1..=5);
        let k = rng.gen_range(1..=4);
        let stride = rng.gen_range(1..=2);
        let pad = rng.gen_range(0..=k / 2);
        let h = rng.gen_range(k..=k + 6);
        let w = rng.gen_range(k..=k + 6);
        let mut conv = zoo::random_conv(&mut rng, "c", c_in, c_out, k, pad);
        conv.stride = stride;
        let x = random_inputs(&[c_in, h, w], 1, t).remove(0);
        let model = ModelGraph::new(vec![c_in, h, w], vec![Layer::Conv(conv.clone())]).unwrap();
        let (y, _) = forward(&model, &x, &[]).unwrap();
        let want = nested_loop_conv(&x, &conv);
        for (a, b) in y.data().iter().zip(&want) {
            conv_err = conv_err.max((a - b).abs());
        }
    }

    let mut eig_err = 0.0f64;
    for _ in 0..20 {
        let n = rng.gen_range(2..=12);
        let mut a = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = rng.gen_range(-1.0..1.0);
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        let e = sym_eigen(&a).unwrap();
        let mut lambda = Matrix::zeros(n, n);
        for (i, v) in e.eigenvalues.iter().enumerate() {
            lambda[(i, i)] = *v;
        }
        let back = matmul(&matmul(&e.eigenvectors, &lambda).unwrap(), &e.eigenvectors.transpose()).unwrap();
        eig_err = eig_err.max(back.max_abs_diff(&a));
    }

    let mut merge_exact = true;
    for _ in 0..50 {
        let c = rng.gen_range(2..=10);
        let k = rng.gen_range(1..=c);
        let labels: Vec<usize> = (0..c).map(|i| if i < k { i } else { rng.gen_range(0..k) }).collect();
        let a = ClusterAssignment::from_labels(&labels).unwrap();
        let members = a.members();
        let per = 2 * 3 * 3;
        let wu = random_inputs(&[c, 2, 3, 3], 1, rng.gen()).remove(0);
        let wl = random_inputs(&[3, c, 3, 3], 1, rng.gen()).remove(0);
        let (mu, _) = cluster_upper_filters(&wu, None, &a).unwrap();
        let ml = cluster_lower_channels(&wl, &a).unwrap();
        for (j, g) in members.iter().enumerate() {
            for t in 0..per {
                let mean = g.iter().map(|&p| wu.data()[p * per + t] as f64).sum::<f64>() / g.len() as f64;
                merge_exact &= mu.data()[j * per + t] == mean as f32;
            }
            for m in 0..3 {
                for t in 0..9 {
                    let mean = g.iter().map(|&p| wl.data()[(m * c + p) * 9 + t] as f64).sum::<f64>() / g.len() as f64;
                    merge_exact &= ml.data()[(m * a.k() + j) * 9 + t] == mean as f32;
                }
            }
        }
    }

    verdict(
        9,
        "oracle equivalence",
        conv_err <= 1e-4 && eig_err <= 1e-8 && merge_exact,
        &format!("conv max diff {conv_err:.2e} over 100 shapes, eigen reconstruction {eig_err:.2e}, merges exact {merge_exact}"),
    );
}
