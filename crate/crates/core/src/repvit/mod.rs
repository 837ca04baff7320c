// SPDX-License-Identifier: Apache-2.0

//! Reparameterizable depthwise backbone and multi-level fusion primitives.

mod backbone;
mod cb;
mod fuse;
pub(crate) mod params;
mod se;

pub use backbone::{
    backbone_forward, conv_bn_unit, reparam_backbone, repvit_block_forward, Backbone,
    BackboneConfig, ConvUnit, Downsample, FeaturePyramid, Form, RepVitBlock, Stage, Stem,
    TokenMixer,
};
pub use cb::{cb_fuse, cb_linear};
pub use fuse::{fuse_conv_bn, fuse_rep_branches, ConvBn, RepBranchSet};
pub use se::{se_forward, SeParams};

use crate::error::Result;
use crate::tensor::{conv2d, global_avg_pool, ConvParams, Scalar, Tensor};

/// How convolutions are executed during a forward pass.
///
/// The dense executor runs every position. The sparse executor in
/// [`crate::spark`] only produces unmasked positions and keeps masked ones
/// at zero after every layer.
pub trait Exec<T: Scalar> {
    fn conv(&self, x: &Tensor<T>, p: &ConvParams<T>) -> Result<Tensor<T>>;

    /// Re-applies the executor's mask (no-op when dense).
    fn remask(&self, x: Tensor<T>) -> Result<Tensor<T>>;

    /// Spatial average used by the SE gate.
    fn pool(&self, x: &Tensor<T>) -> Result<Tensor<T>>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Dense;

impl<T: Scalar> Exec<T> for Dense {
    fn conv(&self, x: &Tensor<T>, p: &ConvParams<T>) -> Result<Tensor<T>> {
        conv2d(x, p)
    }

    fn remask(&self, x: Tensor<T>) -> Result<Tensor<T>> {
        Ok(x)
    }

    fn pool(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        global_avg_pool(x)
    }
}
