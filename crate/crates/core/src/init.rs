// SPDX-License-Identifier: Apache-2.0

//! Seeded parameter initialisation for demos and tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::{BnParams, ConvParams, Scalar, Tensor};

/// Deterministic RNG used throughout the crate.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform in `[-0.5, 0.5]` scaled by `1 / sqrt(fan_in)`.
pub fn conv<T: Scalar, R: Rng>(
    rng: &mut R,
    out_ch: usize,
    in_ch: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    groups: usize,
    bias: bool,
) -> ConvParams<T> {
    let icg = in_ch / groups;
    let scale = 1.0 / ((icg * kernel * kernel) as f64).sqrt();
    let weight = Tensor::from_fn([out_ch, icg, kernel, kernel], |_, _, _, _| {
        T::of(rng.gen_range(-0.5..=0.5) * scale)
    });
    let bias = (0..out_ch)
        .map(|_| {
            if bias {
                T::of(rng.gen_range(-0.5..=0.5) * scale)
            } else {
                T::zero()
            }
        })
        .collect();
    ConvParams {
        weight,
        bias,
        stride,
        padding,
        groups,
    }
}

/// Batch norm with randomised affine parameters and running statistics,
/// so that folding it into a convolution is a non-trivial transform.
pub fn batchnorm<T: Scalar, R: Rng>(rng: &mut R, c: usize) -> BnParams<T> {
    let mut draw = |lo: f64, hi: f64| -> Vec<T> { (0..c).map(|_| T::of(rng.gen_range(lo..hi))).collect() };
    BnParams {
        gamma: draw(0.5, 1.5),
        beta: draw(-0.5, 0.5),
        running_mean: draw(-0.5, 0.5),
        running_var: draw(0.5, 1.5),
        eps: T::of(1e-5),
    }
}

/// Tensor with i.i.d. entries uniform in `[lo, hi)`.
pub fn uniform<T: Scalar, R: Rng>(rng: &mut R, shape: [usize; 4], lo: f64, hi: f64) -> Tensor<T> {
    Tensor::from_fn(shape, |_, _, _, _| T::of(rng.gen_range(lo..hi)))
}
