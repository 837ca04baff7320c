// SPDX-License-Identifier: Apache-2.0

use super::MaskGrid;
use crate::error::{Error, Result};
use crate::repvit::Exec;
use crate::tensor::{ConvParams, Scalar, Tensor};

/// One learned fill value per channel for masked positions.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskEmbedding<T> {
    pub values: Vec<T>,
}

impl<T: Scalar> MaskEmbedding<T> {
    pub fn zeros(c: usize) -> Self {
        Self { values: vec![T::zero(); c] }
    }

    pub fn channels(&self) -> usize {
        self.values.len()
    }
}

fn check_mask<T: Scalar>(op: &'static str, x: &Tensor<T>, mask: &MaskGrid) -> Result<Vec<bool>> {
    mask.at_resolution(x.height(), x.width())
        .map_err(|e| Error::invalid(op, e.to_string()))
}

/// Zeroes every masked position of `x`.
pub fn apply_mask<T: Scalar>(x: Tensor<T>, mask: &MaskGrid) -> Result<Tensor<T>> {
    let keep = check_mask("apply_mask", &x, mask)?;
    let mut x = x;
    let [n, c, _, _] = x.shape();
    for ni in 0..n {
        for ci in 0..c {
            for (v, &k) in x.plane_mut(ni, ci).iter_mut().zip(&keep) {
                if !k {
                    *v = T::zero();
                }
            }
        }
    }
    Ok(x)
}

/// Convolution evaluated only at kept output positions; masked inputs read
/// as zero and masked outputs stay zero.
pub fn sparse_conv2d<T: Scalar>(input: &Tensor<T>, p: &ConvParams<T>, mask: &MaskGrid) -> Result<Tensor<T>> {
    if !matches!(p.stride, 1 | 2) {
        return Err(Error::invalid("sparse_conv2d", format!("stride {} not in {{1, 2}}", p.stride)));
    }
    let shape = p.output_shape(input)?;
    let in_keep = check_mask("sparse_conv2d", input, mask)?;
    let [n, oc, oh, ow] = shape;
    let out_keep = mask
        .at_resolution(oh, ow)
        .map_err(|e| Error::invalid("sparse_conv2d", e.to_string()))?;
    let w = input.width();
    let read = |ni, c, y, x| {
        if in_keep[y * w + x] {
            input.at(ni, c, y, x)
        } else {
            T::zero()
        }
    };
    let mut out = Tensor::zeros(shape);
    for ni in 0..n {
        for c in 0..oc {
            let plane = out.plane_mut(ni, c);
            for (pos, v) in plane.iter_mut().enumerate() {
                if out_keep[pos] {
                    *v = p.dot_at(input, ni, c, pos / ow, pos % ow, &read);
                }
            }
        }
    }
    Ok(out)
}

/// Replaces masked positions with the per-channel embedding.
pub fn densify<T: Scalar>(features: &Tensor<T>, mask: &MaskGrid, emb: &MaskEmbedding<T>) -> Result<Tensor<T>> {
    if emb.channels() != features.channels() {
        return Err(Error::shape("densify", "embedding length", features.channels(), emb.channels()));
    }
    let keep = check_mask("densify", features, mask)?;
    let mut out = features.clone();
    let [n, c, _, _] = out.shape();
    for ni in 0..n {
        for ci in 0..c {
            for (v, &k) in out.plane_mut(ni, ci).iter_mut().zip(&keep) {
                if !k {
                    *v = emb.values[ci];
                }
            }
        }
    }
    Ok(out)
}

/// Executor for masked forwards: sparse convolutions, masked positions
/// forced to zero after every layer, pooling over kept positions only.
#[derive(Debug, Clone, Copy)]
pub struct Sparse<'a> {
    pub mask: &'a MaskGrid,
}

impl<'a> Sparse<'a> {
    pub fn new(mask: &'a MaskGrid) -> Self {
        Self { mask }
    }
}

impl<T: Scalar> Exec<T> for Sparse<'_> {
    fn conv(&self, x: &Tensor<T>, p: &ConvParams<T>) -> Result<Tensor<T>> {
        sparse_conv2d(x, p, self.mask)
    }

    fn remask(&self, x: Tensor<T>) -> Result<Tensor<T>> {
        apply_mask(x, self.mask)
    }

    fn pool(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let keep = check_mask("sparse pool", x, self.mask)?;
        let kept = keep.iter().filter(|k| **k).count();
        let [n, c, _, _] = x.shape();
        Ok(Tensor::from_fn([n, c, 1, 1], |ni, ci, _, _| {
            if kept == 0 {
                return T::zero();
            }
            let s: T = x.plane(ni, ci).iter().zip(&keep).filter(|(_, k)| **k).map(|(v, _)| *v).sum();
            s / T::of(kept as f64)
        }))
    }
}
