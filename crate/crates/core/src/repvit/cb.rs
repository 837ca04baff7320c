// SPDX-License-Identifier: Apache-2.0

//! Composite-connection routing: a 1x1 projection split into channel groups
//! (`cb_linear`), and resize-then-sum merging of pyramid levels (`cb_fuse`).

use crate::error::{Error, Result};
use crate::tensor::{conv2d, resize_nearest, split_channels, ConvParams, Resize, Scalar, Tensor};

pub fn cb_linear<T: Scalar>(feature: &Tensor<T>, proj: &ConvParams<T>, split_sizes: &[usize]) -> Result<Vec<Tensor<T>>> {
    if proj.kernel() != (1, 1) || proj.stride != 1 || proj.padding != 0 {
        return Err(Error::invalid("cb_linear", "projection must be a stride-1 1x1 convolution"));
    }
    let total: usize = split_sizes.iter().sum();
    if total != proj.out_channels() {
        return Err(Error::shape("cb_linear", "sum of split sizes", proj.out_channels(), total));
    }
    split_channels(&conv2d(feature, proj)?, split_sizes)
}

/// Resizes every feature to the spatial size of `features[target_index]`
/// with nearest-neighbour sampling, then sums them.
pub fn cb_fuse<T: Scalar>(features: &[Tensor<T>], target_index: usize) -> Result<Tensor<T>> {
    let target = features
        .get(target_index)
        .ok_or_else(|| Error::invalid("cb_fuse", format!("target index {target_index} out of range")))?;
    let [n, c, th, tw] = target.shape();
    let mut out = Tensor::zeros([n, c, th, tw]);
    for f in features {
        if f.channels() != c {
            return Err(Error::shape("cb_fuse", "channels", c, f.channels()));
        }
        let resized = resize_to(f, th, tw)?;
        out.add_assign(&resized)?;
    }
    Ok(out)
}

fn resize_to<T: Scalar>(f: &Tensor<T>, th: usize, tw: usize) -> Result<Tensor<T>> {
    let (h, w) = (f.height(), f.width());
    let ratio = |a: usize, b: usize| -> Option<Resize> {
        if a == b {
            Some(Resize::Up(1))
        } else if a > b && a.is_multiple_of(b) && (a / b).is_power_of_two() {
            Some(Resize::Down(a / b))
        } else if b > a && b.is_multiple_of(a) && (b / a).is_power_of_two() {
            Some(Resize::Up(b / a))
        } else {
            None
        }
    };
    match (ratio(h, th), ratio(w, tw)) {
        (Some(ry), Some(rx)) if ry == rx => resize_nearest(f, ry),
        _ => Err(Error::invalid(
            "cb_fuse",
            format!("cannot resize {h}x{w} to {th}x{tw} by a power-of-two factor"),
        )),
    }
}
