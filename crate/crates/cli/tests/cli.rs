//! Command-line behaviour beyond the acceptance criteria: shipped strategy
//! files, evaluation, inspection and exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sscprune::baselines::ComparisonTable;
use sscprune::io::{save_model, ReportFile};
use sscprune::nn::{ConvLayer, Layer, ModelGraph, Tensor};
use sscprune::pruner::{PruneReport, PruneStrategy};
use sscprune::zoo;

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

fn strategy_file(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../strategies").join(name)
}

fn read_strategy(name: &str) -> PruneStrategy {
    PruneStrategy::from_json(&std::fs::read_to_string(strategy_file(name)).unwrap()).unwrap()
}

#[test]
fn shipped_strategies_parse() {
    for name in ["toy_vgg_2x.json", "planted_2x.json", "toy_resnet_2x.json", "vgg16_2x_keep_conv5.json"] {
        read_strategy(name);
    }
    assert_eq!(read_strategy("vgg16_2x_keep_conv5.json"), zoo::vgg16_strategy(2.0));
}

#[test]
fn documented_reports_still_parse() {
    let docs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs");
    let prune: ReportFile<PruneReport> = ReportFile::load(docs.join("example_prune_report.json")).unwrap();
    let r = &prune.body.records[0];
    assert_eq!((r.c, r.c_prime, r.speed_up_ratio), (16, 8, 2.0));
    assert!(r.recon_error_after <= r.recon_error_before);
    let table: ReportFile<ComparisonTable> = ReportFile::load(docs.join("example_compare_report.json")).unwrap();
    assert_eq!(table.body.rows.len(), 10);
}

#[test]
fn toy_vgg_prune_and_eval_agree() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let model = d.join("toy.scpm");
    ok(&["synth", "--arch", "toy-vgg", "--out", p(&model), "--data", p(&d.join("calib")), "--count", "24"]);
    ok(&["synth", "--arch", "toy-vgg", "--out", p(&model), "--data", p(&d.join("eval")), "--count", "40", "--data-seed", "7"]);
    let (eval, labels) = (d.join("eval"), d.join("eval/labels.json"));
    let (out, report) = (d.join("pruned.scpm"), d.join("report.json"));
    let summary = ok(&[
        "prune", "--model", p(&model), "--calib", p(&d.join("calib")),
        "--strategy", p(&strategy_file("toy_vgg_2x.json")), "--out", p(&out), "--report", p(&report),
        "--eval-data", p(&eval), "--labels", p(&labels),
    ]);
    assert!(summary.starts_with("pruned 3 pair(s)"), "{summary}");

    let doc: ReportFile<PruneReport> = ReportFile::load(&report).unwrap();
    let check = doc.body.evaluation.clone().expect("evaluation recorded");
    assert_eq!(check.samples, 40);
    // labels come from the unpruned model itself
    assert_eq!(check.accuracy_before, 1.0);
    assert!(doc.body.flops_reduction() >= 1.8);

    let before = ok(&["eval", "--model", p(&model), "--data", p(&eval), "--labels", p(&labels)]);
    let after = ok(&["eval", "--model", p(&out), "--data", p(&eval), "--labels", p(&labels)]);
    assert_eq!(before.trim(), "1.0000");
    assert_eq!(after.trim(), format!("{:.4}", check.accuracy_after));
    assert!((check.accuracy_drop - (check.accuracy_before - check.accuracy_after)).abs() < 1e-12);

    // every class is within the top 4 of a 4-class model
    let all = ok(&["eval", "--model", p(&out), "--data", p(&eval), "--labels", p(&labels), "--topk", "4"]);
    assert_eq!(all.trim(), "1.0000");
}

#[test]
fn empty_strategy_keeps_the_model() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let model = d.join("toy.scpm");
    ok(&["synth", "--arch", "toy-vgg", "--out", p(&model), "--data", p(&d.join("calib")), "--count", "4"]);
    std::fs::write(d.join("s.json"), "{}").unwrap();
    let out = d.join("same.scpm");
    ok(&[
        "prune", "--model", p(&model), "--calib", p(&d.join("calib")), "--strategy", p(&d.join("s.json")),
        "--out", p(&out), "--report", p(&d.join("r.json")),
    ]);
    let doc: ReportFile<PruneReport> = ReportFile::load(d.join("r.json")).unwrap();
    assert!(doc.body.records.is_empty());
    assert_eq!(std::fs::read(&model).unwrap(), std::fs::read(&out).unwrap());
}

#[test]
fn inspect_counts_by_hand() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("one.scpm");
    let w = Tensor::new(vec![3, 2, 3, 3], vec![0.5; 54]).unwrap();
    let conv = ConvLayer::new("c", w, Some(Tensor::zeros(vec![3])), 1, 1).unwrap();
    let model = ModelGraph::new(vec![2, 5, 5], vec![Layer::Conv(conv), Layer::Relu { name: "r".into() }]).unwrap();
    save_model(&model, &path).unwrap();
    let text = ok(&["inspect", "--model", p(&path)]);
    // 3·2·3·3 weights + 3 biases; 54 multiply-adds at each of 25 positions
    assert!(text.contains("input 2x5x5"), "{text}");
    assert!(text.contains("total params 57 (57)"), "{text}");
    assert!(text.contains("total flops 2700 (2.70 K)"), "{text}");

    let empty = dir.path().join("empty.scpm");
    save_model(&ModelGraph::new(vec![1, 2, 2], vec![]).unwrap(), &empty).unwrap();
    let text = ok(&["inspect", "--model", p(&empty)]);
    assert!(text.contains("total params 0 (0)") && text.contains("total flops 0 (0)"), "{text}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let bogus = d.join("bogus.scpm");
    std::fs::write(&bogus, b"not a model").unwrap();
    let out = sscprune(&["inspect", "--model", p(&bogus)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));

    // a dead upper layer gives all-zero feature maps: a numerical failure
    let dead = ConvLayer::new("conv1", Tensor::zeros(vec![4, 1, 1, 1]), Some(Tensor::zeros(vec![4])), 1, 0).unwrap();
    let lower = ConvLayer::new("conv2", Tensor::new(vec![1, 4, 1, 1], vec![1.0; 4]).unwrap(), None, 1, 0).unwrap();
    let model = ModelGraph::new(
        vec![1, 3, 3],
        vec![Layer::Conv(dead), Layer::Relu { name: "relu".into() }, Layer::Conv(lower)],
    )
    .unwrap();
    let path = d.join("dead.scpm");
    save_model(&model, &path).unwrap();
    std::fs::create_dir(d.join("calib")).unwrap();
    sscprune::io::save_tensor(&Tensor::new(vec![1, 3, 3], vec![1.0; 9]).unwrap(), d.join("calib/a.sctn")).unwrap();
    std::fs::write(d.join("s.json"), r#"{"layers":[{"layer":"conv2","ratio":2.0}]}"#).unwrap();
    let (pruned, report) = (d.join("p.scpm"), d.join("r.json"));
    let out = sscprune(&[
        "prune", "--model", p(&path), "--calib", p(&d.join("calib")), "--strategy", p(&d.join("s.json")),
        "--out", p(&pruned), "--report", p(&report),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!pruned.exists() && !report.exists());

    let out = sscprune(&["eval", "--model", p(&path), "--data", p(&d.join("calib")), "--labels", p(&d.join("none.json"))]);
    assert_eq!(out.status.code(), Some(2));
}
