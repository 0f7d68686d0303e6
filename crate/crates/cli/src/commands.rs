use std::collections::BTreeMap;
use std::fs;
use std::io::{ErrorKind, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};

use sscprune::baselines::{compare_selectors, HeldOut, Selector};
use sscprune::io::{
    encode_model, evaluate_topk, labels_for, load_calibration, load_labels, load_model, load_tensor_dir,
    save_model, save_tensor, ReportFile,
};
use sscprune::nn::{count_costs, Tensor};
use sscprune::pruner::{prune_model, upper_of, AccuracyCheck, PruneStrategy};
use sscprune::zoo;

use crate::{Arch, CompareArgs, EvalArgs, InspectArgs, PruneArgs, SynthArgs};

fn load_labelled(data: &Path, labels: &Path) -> Result<(Vec<Tensor>, Vec<usize>)> {
    let named = load_tensor_dir(data)?;
    let labels = load_labels(labels)?;
    let names: Vec<String> = named.iter().map(|(n, _)| n.clone()).collect();
    let classes = labels_for(&names, &labels)?;
    Ok((named.into_iter().map(|(_, t)| t).collect(), classes))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

/// Prints to stdout; a closed pipe downstream is not an error.
fn emit(text: &str) -> Result<()> {
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != ErrorKind::BrokenPipe => Err(e).context("cannot write to stdout"),
        _ => Ok(()),
    }
}

fn check_topk(k: usize) -> Result<()> {
    if k == 0 {
        bail!(sscprune::Error::Parameter("--topk must be at least 1".into()));
    }
    Ok(())
}

pub fn prune(a: &PruneArgs) -> Result<()> {
    let cfg = a.run.resolve()?;
    check_topk(a.topk)?;
    let model = load_model(&a.model)?;
    let text = fs::read_to_string(&a.strategy)
        .with_context(|| format!("cannot read strategy {}", a.strategy.display()))?;
    let strategy = PruneStrategy::from_json(&text)
        .with_context(|| format!("invalid strategy {}", a.strategy.display()))?;
    let calib = load_calibration(&a.calib, a.run.limit, cfg.seed)?;
    let eval_set = match (&a.eval_data, &a.labels) {
        (Some(d), Some(l)) => Some(load_labelled(d, l)?),
        _ => None,
    };

    let (pruned, mut report) = prune_model(&model, &strategy, &calib, &cfg)?;
    if let Some((inputs, labels)) = &eval_set {
        let before = evaluate_topk(&model, inputs, labels, a.topk)?;
        let after = evaluate_topk(&pruned, inputs, labels, a.topk)?;
        report.evaluation = Some(AccuracyCheck {
            topk: a.topk,
            samples: inputs.len(),
            accuracy_before: before,
            accuracy_after: after,
            accuracy_drop: before - after,
        });
    }

    // serialize everything before touching the output paths
    let model_bytes = encode_model(&pruned)?;
    let summary = format!(
        "pruned {} pair(s): params {} -> {}, FLOPs {} -> {} ({:.2}x)",
        report.records.len(),
        report.params_before,
        report.params_after,
        report.flops_before,
        report.flops_after,
        report.flops_reduction()
    );
    let doc = ReportFile::new(cfg, report).to_json()?;
    write(&a.out, model_bytes)?;
    write(&a.report, doc)?;
    emit(&summary)
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    check_topk(a.topk)?;
    let model = load_model(&a.model)?;
    let (inputs, labels) = load_labelled(&a.data, &a.labels)?;
    let acc = evaluate_topk(&model, &inputs, &labels, a.topk)?;
    emit(&format!("{acc:.4}"))
}

fn shape_text(shape: &[usize]) -> String {
    shape.iter().map(usize::to_string).collect::<Vec<_>>().join("x")
}

fn scaled(n: u64) -> String {
    let n = n as f64;
    if n >= 1e9 {
        format!("{:.2} G", n / 1e9)
    } else if n >= 1e6 {
        format!("{:.2} M", n / 1e6)
    } else if n >= 1e3 {
        format!("{:.2} K", n / 1e3)
    } else {
        format!("{n}")
    }
}

pub fn inspect(a: &InspectArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let costs = count_costs(&model);
    let mut lines = vec![
        format!("input {}", shape_text(model.input_shape())),
        format!("{:<16} {:<10} {:>16} {:>12} {:>14}", "layer", "kind", "output", "params", "flops"),
    ];
    for l in &costs.layers {
        lines.push(format!(
            "{:<16} {:<10} {:>16} {:>12} {:>14}",
            l.name,
            l.kind,
            shape_text(&l.output_shape),
            l.params,
            l.flops
        ));
    }
    lines.push(format!("total params {} ({})", costs.params, scaled(costs.params)));
    lines.push(format!("total flops {} ({})", costs.flops, scaled(costs.flops)));
    emit(&lines.join("\n"))
}

pub fn compare(a: &CompareArgs) -> Result<()> {
    let cfg = a.run.resolve()?;
    let selectors = a
        .selectors
        .iter()
        .map(|s| Selector::parse(s, cfg.seed))
        .collect::<sscprune::Result<Vec<_>>>()?;
    let model = load_model(&a.model)?;
    let upper = upper_of(&model, &a.layer)?;
    let calib = load_calibration(&a.calib, a.run.limit, cfg.seed)?;
    let eval_set = match (&a.eval_data, &a.labels) {
        (Some(d), Some(l)) => Some(load_labelled(d, l)?),
        _ => None,
    };
    let held_out = match &eval_set {
        Some((inputs, labels)) => HeldOut {
            inputs,
            labels: Some(labels),
        },
        None => HeldOut::default(),
    };

    let table = compare_selectors(&model, &upper, &a.layer, &a.ratios, &calib, held_out, &selectors, &cfg)?;
    let mut lines = vec![format!(
        "{:<12} {:>6} {:>4} {:>12} {:>12}",
        "selector", "ratio", "c'", "err_before", "err_after"
    )];
    for r in &table.rows {
        lines.push(format!(
            "{:<12} {:>6} {:>4} {:>12.6} {:>12.6}",
            r.selector, r.ratio, r.c_prime, r.recon_error_before, r.recon_error_after
        ));
    }
    let doc = ReportFile::new(cfg, table).to_json()?;
    write(&a.report, doc)?;
    emit(&lines.join("\n"))
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let model = match a.arch {
        Arch::Vgg16 => {
            if a.data.is_some() {
                bail!(sscprune::Error::Input("vgg16 has zero weights; it cannot label data".into()));
            }
            zoo::vgg16()
        }
        Arch::ToyVgg => zoo::toy_vgg(a.seed),
        Arch::Planted => zoo::planted_redundancy(a.seed, a.perturbation),
        Arch::ToyResnet => zoo::toy_resnet(a.seed),
    };
    let data = match &a.data {
        Some(dir) => {
            let (inputs, _) = zoo::synthetic_images(model.input_shape(), 4, a.count, a.data_seed);
            let labels = zoo::teacher_labels(&model, &inputs)?;
            Some((dir, inputs, labels))
        }
        None => None,
    };
    save_model(&model, &a.out)?;
    if let Some((dir, inputs, labels)) = data {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        let mut map = BTreeMap::new();
        for (i, (x, y)) in inputs.iter().zip(labels).enumerate() {
            let name = format!("img_{i:04}.sctn");
            save_tensor(x, dir.join(&name))?;
            map.insert(name, y);
        }
        write(&dir.join("labels.json"), serde_json::to_string_pretty(&map)? + "\n")?;
    }
    Ok(())
}
