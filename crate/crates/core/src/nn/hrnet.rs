//! Two-branch high-resolution segmentation network.
//!
//! A full-resolution branch (16 channels) and a half-resolution branch (32
//! channels) run in parallel from a shared stem, exchange information once
//! (upsampled low→high and strided high→low, both added), and the fused low
//! branch is projected, upsampled and concatenated with the high branch
//! before a 1×1 classifier. Every conv except the classifier is followed by
//! a ReLU (applied after the sum at the fusion points).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::conv::{conv2d, conv2d_backward};
use super::resize::{bilinear_resize, bilinear_resize_backward, Scale};
use super::tensor::{add, concat_channels, relu, relu_backward, split_channels, Tensor};
use crate::error::{Error, Result};
use crate::labelgen::FunctionClass;

pub const IN_CHANNELS: usize = 7;
pub const HIGH_CHANNELS: usize = 16;
pub const NUM_CLASSES: usize = FunctionClass::NUM_CLASSES;

/// Name and shape of one learnable tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: &'static str,
    pub shape: [usize; 4],
}

const fn w(name: &'static str, cout: usize, cin: usize, k: usize) -> ParamSpec {
    ParamSpec {
        name,
        shape: [cout, cin, k, k],
    }
}

const fn b(name: &'static str, cout: usize) -> ParamSpec {
    ParamSpec {
        name,
        shape: [1, 1, 1, cout],
    }
}

pub const ARCHITECTURE: [ParamSpec; 18] = [
    w("stem.weight", 16, 7, 3),
    b("stem.bias", 16),
    w("high1.weight", 16, 16, 3),
    b("high1.bias", 16),
    w("high2.weight", 16, 16, 3),
    b("high2.bias", 16),
    w("low0.weight", 32, 16, 3),
    b("low0.bias", 32),
    w("low1.weight", 32, 32, 3),
    b("low1.bias", 32),
    w("low2.weight", 32, 32, 3),
    b("low2.bias", 32),
    w("fuse_up.weight", 16, 32, 1),
    b("fuse_up.bias", 16),
    w("fuse_down.weight", 32, 16, 3),
    b("fuse_down.bias", 32),
    w("head.weight", 8, 32, 1),
    b("head.bias", 8),
];

const STEM: usize = 0;
const HIGH1: usize = 2;
const HIGH2: usize = 4;
const LOW0: usize = 6;
const LOW1: usize = 8;
const LOW2: usize = 10;
const FUSE_UP: usize = 12;
const FUSE_DOWN: usize = 14;
const HEAD: usize = 16;

/// Stable digest of the architecture table, stored in checkpoints.
pub fn architecture_hash() -> String {
    let mut h = Sha256::new();
    h.update(b"hrnet-mini/v1;");
    for p in ARCHITECTURE {
        h.update(format!("{}:{:?};", p.name, p.shape).as_bytes());
    }
    hex::encode(h.finalize())
}

/// Learnable tensors in [`ARCHITECTURE`] order. Also used to hold gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub tensors: Vec<Tensor>,
}

impl ModelParams {
    pub fn zeros() -> Self {
        Self {
            tensors: ARCHITECTURE.iter().map(|p| Tensor::zeros(p.shape)).collect(),
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros();
        for (spec, t) in ARCHITECTURE.iter().zip(p.tensors.iter_mut()) {
            if spec.name.ends_with(".bias") {
                continue;
            }
            let [cout, cin, k, _] = spec.shape;
            let limit = (6.0 / ((cin * k * k + cout * k * k) as f64)).sqrt();
            for v in &mut t.data {
                *v = rng.random_range(-limit..limit) as f32;
            }
        }
        p
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> {
        ARCHITECTURE.iter().map(|p| p.name)
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    fn conv(&self, idx: usize, x: &Tensor, stride: usize) -> Result<Tensor> {
        conv2d(x, &self.tensors[idx], &self.tensors[idx + 1].data, stride)
    }
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub input: Tensor,
    pub stem: Tensor,
    pub high1: Tensor,
    pub high: Tensor,
    pub low0: Tensor,
    pub low1: Tensor,
    pub low: Tensor,
    pub high_fused: Tensor,
    pub low_fused: Tensor,
    pub low_up: Tensor,
    pub concat: Tensor,
}

impl ForwardCache {
    /// Which ReLU units are active, across every rectified activation.
    pub fn activation_pattern(&self) -> Vec<bool> {
        [
            &self.stem,
            &self.high1,
            &self.high,
            &self.low0,
            &self.low1,
            &self.low,
            &self.high_fused,
            &self.low_fused,
            &self.low_up,
        ]
        .iter()
        .flat_map(|t| t.data.iter().map(|&v| v > 0.0))
        .collect()
    }
}

pub fn hrnet_forward(p: &ModelParams, x: &Tensor) -> Result<Tensor> {
    hrnet_forward_cached(p, x).map(|(logits, _)| logits)
}

pub fn hrnet_forward_cached(p: &ModelParams, x: &Tensor) -> Result<(Tensor, ForwardCache)> {
    if x.c() != IN_CHANNELS {
        return Err(Error::Shape(format!("network expects {IN_CHANNELS} input bands, got {}", x.c())));
    }
    if !x.h().is_multiple_of(2) || !x.w().is_multiple_of(2) || x.h() == 0 || x.w() == 0 {
        return Err(Error::Shape(format!("input size {}x{} must be even", x.h(), x.w())));
    }
    let stem = relu(&p.conv(STEM, x, 1)?);
    let high1 = relu(&p.conv(HIGH1, &stem, 1)?);
    let high = relu(&p.conv(HIGH2, &high1, 1)?);
    let low0 = relu(&p.conv(LOW0, &stem, 2)?);
    let low1 = relu(&p.conv(LOW1, &low0, 1)?);
    let low = relu(&p.conv(LOW2, &low1, 1)?);

    let to_high = bilinear_resize(&p.conv(FUSE_UP, &low, 1)?, Scale::Double)?;
    let to_low = p.conv(FUSE_DOWN, &high, 2)?;
    let high_fused = relu(&add(&high, &to_high)?);
    let low_fused = relu(&add(&low, &to_low)?);

    // the up projection is shared between the fusion and the head
    let low_up = relu(&bilinear_resize(&p.conv(FUSE_UP, &low_fused, 1)?, Scale::Double)?);
    let concat = concat_channels(&high_fused, &low_up)?;
    let logits = p.conv(HEAD, &concat, 1)?;
    let cache = ForwardCache {
        input: x.clone(),
        stem,
        high1,
        high,
        low0,
        low1,
        low,
        high_fused,
        low_fused,
        low_up,
        concat,
    };
    Ok((logits, cache))
}

/// Gradients of every parameter and of the input.
#[derive(Debug, Clone)]
pub struct Backward {
    pub params: ModelParams,
    pub input: Vec<f32>,
}

fn accumulate(dst: &mut [f32], src: &[f32]) {
    dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
}

pub fn hrnet_backward(p: &ModelParams, cache: &ForwardCache, dlogits: &[f32]) -> Result<Backward> {
    let mut grads = ModelParams::zeros();
    let mut conv_back = |idx: usize, x: &Tensor, stride: usize, dy: &[f32]| -> Result<Vec<f32>> {
        let g = conv2d_backward(x, &p.tensors[idx], stride, dy)?;
        accumulate(&mut grads.tensors[idx].data, &g.dweight);
        accumulate(&mut grads.tensors[idx + 1].data, &g.dbias);
        Ok(g.dx)
    };

    let dconcat = conv_back(HEAD, &cache.concat, 1, dlogits)?;
    let (dhigh_fused, dlow_up) = split_channels(&dconcat, cache.concat.shape, HIGH_CHANNELS);

    let dlow_up = relu_backward(&cache.low_up, &dlow_up);
    let low_half = [cache.low.n(), HIGH_CHANNELS, cache.low.h(), cache.low.w()];
    let dproj = bilinear_resize_backward(low_half, Scale::Double, &dlow_up)?;
    let dlow_fused = relu_backward(&cache.low_fused, &conv_back(FUSE_UP, &cache.low_fused, 1, &dproj)?);
    let dhigh_sum = relu_backward(&cache.high_fused, &dhigh_fused);

    // high_fused = relu(high + up(fuse_up(low))), low_fused = relu(low + fuse_down(high))
    let dup = bilinear_resize_backward(low_half, Scale::Double, &dhigh_sum)?;
    let mut dlow = dlow_fused.clone();
    accumulate(&mut dlow, &conv_back(FUSE_UP, &cache.low, 1, &dup)?);
    let mut dhigh = dhigh_sum;
    accumulate(&mut dhigh, &conv_back(FUSE_DOWN, &cache.high, 2, &dlow_fused)?);

    let d = relu_backward(&cache.low, &dlow);
    let d = relu_backward(&cache.low1, &conv_back(LOW2, &cache.low1, 1, &d)?);
    let d = relu_backward(&cache.low0, &conv_back(LOW1, &cache.low0, 1, &d)?);
    let mut dstem = conv_back(LOW0, &cache.stem, 2, &d)?;

    let d = relu_backward(&cache.high, &dhigh);
    let d = relu_backward(&cache.high1, &conv_back(HIGH2, &cache.high1, 1, &d)?);
    accumulate(&mut dstem, &conv_back(HIGH1, &cache.stem, 1, &d)?);

    let d = relu_backward(&cache.stem, &dstem);
    let dinput = conv_back(STEM, &cache.input, 1, &d)?;
    Ok(Backward {
        params: grads,
        input: dinput,
    })
}
