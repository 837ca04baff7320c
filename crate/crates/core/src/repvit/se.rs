// SPDX-License-Identifier: Apache-2.0

use rand::Rng;

use crate::error::{Error, Result};
use crate::init;
use crate::tensor::{activation, conv2d, global_avg_pool, scale_channels, Activation, ConvParams, Scalar, Tensor};

/// Squeeze-and-excitation gate: `c -> c / r -> c` through 1x1 convolutions.
#[derive(Debug, Clone, PartialEq)]
pub struct SeParams<T> {
    pub reduce: ConvParams<T>,
    pub expand: ConvParams<T>,
}

impl<T: Scalar> SeParams<T> {
    pub const DEFAULT_REDUCTION: usize = 4;

    pub fn random<R: Rng>(rng: &mut R, c: usize, reduction: usize) -> Result<Self> {
        if reduction == 0 || !c.is_multiple_of(reduction) {
            return Err(Error::invalid(
                "se",
                format!("{c} channels not divisible by reduction ratio {reduction}"),
            ));
        }
        let mid = c / reduction;
        Ok(Self {
            reduce: init::conv(rng, mid, c, 1, 1, 0, 1, true),
            expand: init::conv(rng, c, mid, 1, 1, 0, 1, true),
        })
    }

    pub fn channels(&self) -> usize {
        self.reduce.in_channels()
    }

    pub fn reduction_ratio(&self) -> usize {
        self.channels() / self.reduce.out_channels().max(1)
    }

    pub fn param_count(&self) -> usize {
        self.reduce.param_count() + self.expand.param_count()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.channels();
        if self.expand.out_channels() != c {
            return Err(Error::shape("se", "expand output channels", c, self.expand.out_channels()));
        }
        if self.expand.in_channels() != self.reduce.out_channels() {
            return Err(Error::shape(
                "se",
                "expand input channels",
                self.reduce.out_channels(),
                self.expand.in_channels(),
            ));
        }
        Ok(())
    }

    /// Per-channel gate values in (0, 1), computed from pooled features.
    pub fn gate(&self, pooled: &Tensor<T>) -> Result<Tensor<T>> {
        self.validate()?;
        let hidden = activation(&conv2d(pooled, &self.reduce)?, Activation::Relu);
        Ok(activation(&conv2d(&hidden, &self.expand)?, Activation::Sigmoid))
    }
}

/// `x * sigmoid(expand(relu(reduce(gap(x)))))`, broadcast over space.
pub fn se_forward<T: Scalar>(input: &Tensor<T>, se: &SeParams<T>) -> Result<Tensor<T>> {
    if input.channels() != se.channels() {
        return Err(Error::shape("se_forward", "input channels", se.channels(), input.channels()));
    }
    let gate = se.gate(&global_avg_pool(input)?)?;
    scale_channels(input, &gate)
}
