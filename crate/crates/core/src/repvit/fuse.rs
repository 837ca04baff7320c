// SPDX-License-Identifier: Apache-2.0

//! Conv + batch-norm folding and multi-branch depthwise fusion.

use crate::error::{Error, Result};
use crate::tensor::{BnParams, ConvParams, Scalar, Tensor};

/// A convolution followed by an inference-mode batch norm.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBn<T> {
    pub conv: ConvParams<T>,
    pub bn: BnParams<T>,
}

impl<T: Scalar> ConvBn<T> {
    pub fn param_count(&self) -> usize {
        self.conv.param_count() + self.bn.param_count()
    }

    pub fn fuse(&self) -> Result<ConvParams<T>> {
        fuse_conv_bn(&self.conv, &self.bn)
    }
}

/// Folds `bn(conv(x))` into a single convolution:
/// `W' = W * gamma / sqrt(var + eps)` per output channel and
/// `b' = beta + (b - mean) * gamma / sqrt(var + eps)`.
pub fn fuse_conv_bn<T: Scalar>(conv: &ConvParams<T>, bn: &BnParams<T>) -> Result<ConvParams<T>> {
    conv.validate()?;
    bn.validate()?;
    let out = conv.out_channels();
    if bn.channels() != out {
        return Err(Error::shape("fuse_conv_bn", "bn channels", out, bn.channels()));
    }
    let [_, icg, kh, kw] = conv.weight.shape();
    let per_out = icg * kh * kw;
    let mut weight = conv.weight.clone();
    let mut bias = Vec::with_capacity(out);
    for oc in 0..out {
        let s = bn.gamma[oc] / (bn.running_var[oc] + bn.eps).sqrt();
        for w in &mut weight.data_mut()[oc * per_out..(oc + 1) * per_out] {
            *w = *w * s;
        }
        bias.push(bn.beta[oc] + (conv.bias[oc] - bn.running_mean[oc]) * s);
    }
    ConvParams::new(weight, bias, conv.stride, conv.padding, conv.groups)
}

/// Train-time parallel branches of a depthwise token mixer.
#[derive(Debug, Clone, PartialEq)]
pub struct RepBranchSet<T> {
    pub dw3x3: ConvBn<T>,
    pub dw1x1: ConvBn<T>,
    /// Present only for stride-1 mixers.
    pub identity_bn: Option<BnParams<T>>,
}

impl<T: Scalar> RepBranchSet<T> {
    pub fn channels(&self) -> usize {
        self.dw3x3.conv.out_channels()
    }

    pub fn stride(&self) -> usize {
        self.dw3x3.conv.stride
    }

    pub fn param_count(&self) -> usize {
        self.dw3x3.param_count()
            + self.dw1x1.param_count()
            + self.identity_bn.as_ref().map_or(0, |b| b.param_count())
    }

    pub fn validate(&self) -> Result<()> {
        const OP: &str = "fuse_rep_branches";
        let c = self.channels();
        let (d3, d1) = (&self.dw3x3.conv, &self.dw1x1.conv);
        if !d3.is_depthwise() || d3.kernel() != (3, 3) || d3.padding != 1 {
            return Err(Error::invalid(OP, "3x3 branch must be depthwise with padding 1"));
        }
        if !d1.is_depthwise() || d1.kernel() != (1, 1) || d1.padding != 0 {
            return Err(Error::invalid(OP, "1x1 branch must be depthwise with padding 0"));
        }
        if d1.out_channels() != c {
            return Err(Error::shape(OP, "1x1 branch channels", c, d1.out_channels()));
        }
        if d1.stride != d3.stride {
            return Err(Error::shape(OP, "1x1 branch stride", d3.stride, d1.stride));
        }
        match (&self.identity_bn, d3.stride) {
            (Some(bn), 1) if bn.channels() != c => {
                Err(Error::shape(OP, "identity branch channels", c, bn.channels()))
            }
            (Some(_), 1) | (None, 2..) => Ok(()),
            (Some(_), s) => Err(Error::invalid(OP, format!("identity branch with stride {s}"))),
            (None, _) => Err(Error::invalid(OP, "stride-1 branch set lacks identity branch")),
        }
    }
}

/// Collapses all branches into one 3x3 depthwise convolution.
pub fn fuse_rep_branches<T: Scalar>(branches: &RepBranchSet<T>) -> Result<ConvParams<T>> {
    branches.validate()?;
    let c = branches.channels();
    let mut fused = branches.dw3x3.fuse()?;

    let one = branches.dw1x1.fuse()?;
    for ch in 0..c {
        let center = fused.weight.at(ch, 0, 1, 1) + one.weight.at(ch, 0, 0, 0);
        fused.weight.set(ch, 0, 1, 1, center);
        fused.bias[ch] = fused.bias[ch] + one.bias[ch];
    }

    if let Some(bn) = &branches.identity_bn {
        let mut k = Tensor::zeros([c, 1, 3, 3]);
        for ch in 0..c {
            k.set(ch, 0, 1, 1, T::one());
        }
        let id = ConvParams::new(k, vec![T::zero(); c], 1, 1, c)?;
        let id = fuse_conv_bn(&id, bn)?;
        for ch in 0..c {
            let center = fused.weight.at(ch, 0, 1, 1) + id.weight.at(ch, 0, 1, 1);
            fused.weight.set(ch, 0, 1, 1, center);
            fused.bias[ch] = fused.bias[ch] + id.bias[ch];
        }
    }
    Ok(fused)
}
