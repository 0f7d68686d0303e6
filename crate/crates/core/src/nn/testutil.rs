//! Test helpers: random layers and an independent nested-loop convolution.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{ConvLayer, Tensor};

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect()).unwrap()
}

pub fn random_conv(
    rng: &mut ChaCha8Rng,
    name: &str,
    c_in: usize,
    c_out: usize,
    k: usize,
    stride: usize,
    padding: usize,
) -> ConvLayer {
    let w = random_tensor(rng, vec![c_out, c_in, k, k]);
    let b = random_tensor(rng, vec![c_out]);
    ConvLayer::new(name, w, Some(b), stride, padding).unwrap()
}

pub fn naive_conv(conv: &ConvLayer, x: &Tensor) -> Tensor {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (kh, kw) = conv.kernel();
    let (s, p) = (conv.stride as isize, conv.padding as isize);
    let ho = (h as isize + 2 * p - kh as isize) / s + 1;
    let wo = (w as isize + 2 * p - kw as isize) / s + 1;
    let mut out = Vec::new();
    for o in 0..conv.c_out() {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut acc = conv.bias.as_ref().map_or(0.0, |b| b.data()[o] as f64);
                for ci in 0..c {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = oy * s + ky as isize - p;
                            let ix = ox * s + kx as isize - p;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            let wv = conv.weights.data()[((o * c + ci) * kh + ky) * kw + kx];
                            let xv = x.data()[(ci * h + iy as usize) * w + ix as usize];
                            acc += wv as f64 * xv as f64;
                        }
                    }
                }
                out.push(acc as f32);
            }
        }
    }
    Tensor::new(vec![conv.c_out(), ho as usize, wo as usize], out).unwrap()
}
