//! Reference architectures and synthetic data for experiments and tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::nn::{forward, BlockSpec, ConvLayer, FcLayer, Layer, ModelGraph, Tensor};
use crate::pruner::{LayerEntry, PruneStrategy, Target};

fn uniform(rng: &mut ChaCha8Rng, n: usize, bound: f32) -> Vec<f32> {
    (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
}

/// Conv with fan-in scaled uniform weights and small biases.
pub fn random_conv(
    rng: &mut ChaCha8Rng,
    name: &str,
    c_in: usize,
    c_out: usize,
    k: usize,
    padding: usize,
) -> ConvLayer {
    let bound = (6.0 / (c_in * k * k) as f32).sqrt();
    let w = Tensor::new(vec![c_out, c_in, k, k], uniform(rng, c_out * c_in * k * k, bound))
        .expect("sized above");
    let b = Tensor::new(vec![c_out], uniform(rng, c_out, 0.1)).expect("sized above");
    ConvLayer::new(name, w, Some(b), 1, padding).expect("valid conv")
}

pub fn random_fc(rng: &mut ChaCha8Rng, name: &str, in_f: usize, out_f: usize) -> FcLayer {
    let bound = (6.0 / in_f as f32).sqrt();
    FcLayer {
        name: name.into(),
        weights: Tensor::new(vec![out_f, in_f], uniform(rng, out_f * in_f, bound)).expect("sized"),
        bias: Some(Tensor::new(vec![out_f], uniform(rng, out_f, 0.1)).expect("sized")),
    }
}

fn relu(name: &str) -> Layer {
    Layer::Relu { name: name.into() }
}

fn pool(name: &str) -> Layer {
    Layer::MaxPool {
        name: name.into(),
        kernel: 2,
        stride: 2,
    }
}

/// Conv layer names of VGG-16 in order.
pub const VGG16_CONVS: [&str; 13] = [
    "conv1_1", "conv1_2", "conv2_1", "conv2_2", "conv3_1", "conv3_2", "conv3_3", "conv4_1",
    "conv4_2", "conv4_3", "conv5_1", "conv5_2", "conv5_3",
];

/// VGG-16 for 224×224 RGB input and 1000 classes, with all-zero weights.
/// Only useful for shape and cost work.
pub fn vgg16() -> ModelGraph {
    let widths = [64, 64, 128, 128, 256, 256, 256, 512, 512, 512, 512, 512, 512];
    let pool_after = ["conv1_2", "conv2_2", "conv3_3", "conv4_3", "conv5_3"];
    let mut layers = Vec::new();
    let mut c_in = 3;
    for (name, &c_out) in VGG16_CONVS.iter().zip(&widths) {
        let conv = ConvLayer::new(
            *name,
            Tensor::zeros(vec![c_out, c_in, 3, 3]),
            Some(Tensor::zeros(vec![c_out])),
            1,
            1,
        )
        .expect("valid conv");
        layers.push(Layer::Conv(conv));
        layers.push(relu(&format!("relu{}", &name[4..])));
        if let Some(i) = pool_after.iter().position(|p| p == name) {
            layers.push(pool(&format!("pool{}", i + 1)));
        }
        c_in = c_out;
    }
    for (name, in_f, out_f) in [("fc6", 512 * 7 * 7, 4096), ("fc7", 4096, 4096), ("fc8", 4096, 1000)] {
        layers.push(Layer::Fc(FcLayer {
            name: name.into(),
            weights: Tensor::zeros(vec![out_f, in_f]),
            bias: Some(Tensor::zeros(vec![out_f])),
        }));
        if name != "fc8" {
            layers.push(relu(&format!("relu_{name}")));
        }
    }
    ModelGraph::new(vec![3, 224, 224], layers).expect("VGG-16 is well formed")
}

/// Whole-model VGG-16 plan that leaves the conv5 filters untouched.
pub fn vgg16_strategy(ratio: f64) -> PruneStrategy {
    // each entry names the consumer; conv5_1 consumes conv4_3, the last pruned producer
    PruneStrategy {
        layers: VGG16_CONVS[1..=10]
            .iter()
            .map(|l| LayerEntry::new(*l, Target::Ratio(ratio)))
            .collect(),
        blocks: Vec::new(),
    }
}

/// Four-conv VGG-style classifier: `[3, 16, 16]` in, 4 logits out.
pub fn toy_vgg(seed: u64) -> ModelGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = vec![
        Layer::Conv(random_conv(&mut rng, "conv1", 3, 8, 3, 1)),
        relu("relu1"),
        Layer::Conv(random_conv(&mut rng, "conv2", 8, 16, 3, 1)),
        relu("relu2"),
        pool("pool1"),
        Layer::Conv(random_conv(&mut rng, "conv3", 16, 16, 3, 1)),
        relu("relu3"),
        Layer::Conv(random_conv(&mut rng, "conv4", 16, 16, 3, 1)),
        relu("relu4"),
        pool("pool2"),
        Layer::Fc(random_fc(&mut rng, "fc", 16 * 4 * 4, 4)),
    ];
    ModelGraph::new(vec![3, 16, 16], layers).expect("toy VGG is well formed")
}

/// Three-conv classifier whose middle layer has 16 filters made of 8
/// distinct ones, each present twice with independent perturbations of
/// size `perturbation`. The copies sit at shuffled positions.
pub fn planted_redundancy(seed: u64, perturbation: f32) -> ModelGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let conv1 = random_conv(&mut rng, "conv1", 3, 8, 3, 1);
    let base = random_conv(&mut rng, "base", 8, 8, 3, 1);
    let per = base.weights.stride0();

    let mut slots: Vec<usize> = (0..16).map(|i| i / 2).collect();
    for i in (1..16).rev() {
        slots.swap(i, rng.gen_range(0..=i));
    }
    let mut w = Vec::with_capacity(16 * per);
    let mut b = Vec::with_capacity(16);
    for &src in &slots {
        let filter = &base.weights.data()[src * per..(src + 1) * per];
        w.extend(filter.iter().map(|v| v + rng.gen_range(-perturbation..=perturbation)));
        b.push(base.bias_or_zero()[src] + rng.gen_range(-perturbation..=perturbation));
    }
    let conv2 = ConvLayer::new(
        "conv2",
        Tensor::new(vec![16, 8, 3, 3], w).expect("sized"),
        Some(Tensor::new(vec![16], b).expect("sized")),
        1,
        1,
    )
    .expect("valid conv");
    let conv3 = random_conv(&mut rng, "conv3", 16, 8, 3, 1);
    let fc = random_fc(&mut rng, "fc", 8 * 6 * 6, 4);
    let layers = vec![
        Layer::Conv(conv1),
        relu("relu1"),
        Layer::Conv(conv2),
        relu("relu2"),
        Layer::Conv(conv3),
        relu("relu3"),
        pool("pool"),
        Layer::Fc(fc),
    ];
    ModelGraph::new(vec![3, 12, 12], layers).expect("planted net is well formed")
}

/// Stem conv followed by two bottleneck residual blocks (1×1, 3×3, 1×1)
/// with identity shortcuts, `[3, 8, 8]` in, 4 logits out.
pub fn toy_resnet(seed: u64) -> ModelGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = 16;
    let mut layers = vec![
        Layer::Conv(random_conv(&mut rng, "stem", 3, width, 3, 1)),
        relu("stem_relu"),
    ];
    for b in ["res1", "res2"] {
        let names = [format!("{b}a"), format!("{b}b"), format!("{b}c")];
        layers.push(Layer::Block(BlockSpec {
            block_id: b.into(),
            conv_layer_names: names.to_vec(),
            prunable_prefix: 2,
        }));
        layers.push(Layer::Conv(random_conv(&mut rng, &names[0], width, 8, 1, 0)));
        layers.push(relu(&format!("{b}a_relu")));
        layers.push(Layer::Conv(random_conv(&mut rng, &names[1], 8, 8, 3, 1)));
        layers.push(relu(&format!("{b}b_relu")));
        layers.push(Layer::Conv(random_conv(&mut rng, &names[2], 8, width, 1, 0)));
        layers.push(relu(&format!("{b}_out")));
    }
    layers.push(pool("pool"));
    layers.push(Layer::Fc(random_fc(&mut rng, "fc", width * 4 * 4, 4)));
    ModelGraph::new(vec![3, 8, 8], layers).expect("toy ResNet is well formed")
}

/// Images drawn around `classes` fixed random prototypes with unit-scale
/// noise. Returns the images and the prototype each came from.
pub fn synthetic_images(
    shape: &[usize],
    classes: usize,
    count: usize,
    seed: u64,
) -> (Vec<Tensor>, Vec<usize>) {
    let numel: usize = shape.iter().product();
    // prototypes depend only on the shape so that splits share them
    let mut proto_rng = ChaCha8Rng::seed_from_u64(0x5eed ^ numel as u64);
    let prototypes: Vec<Vec<f32>> = (0..classes).map(|_| uniform(&mut proto_rng, numel, 1.0)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::with_capacity(count);
    let mut classes_out = Vec::with_capacity(count);
    for i in 0..count {
        let class = i % classes;
        let data = prototypes[class]
            .iter()
            .map(|p| p + 0.5 * rng.gen_range(-1.0f32..1.0))
            .collect();
        images.push(Tensor::new(shape.to_vec(), data).expect("sized"));
        classes_out.push(class);
    }
    (images, classes_out)
}

/// Index of the largest entry, ties to the lower index.
pub fn argmax(t: &Tensor) -> usize {
    let mut best = 0;
    for (i, v) in t.data().iter().enumerate() {
        if *v > t.data()[best] {
            best = i;
        }
    }
    best
}

/// Labels each input with the model's own top-1 prediction.
pub fn teacher_labels(model: &ModelGraph, inputs: &[Tensor]) -> Result<Vec<usize>> {
    inputs
        .iter()
        .map(|x| forward(model, x, &[]).map(|(y, _)| argmax(&y)))
        .collect()
}
