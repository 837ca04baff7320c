// SPDX-License-Identifier: Apache-2.0

//! Toy-scale backbone: stem, four stages of alternating plain/SE blocks and
//! stride-2 downsample modules between stages.

use rand::Rng;

use super::fuse::{fuse_rep_branches, ConvBn, RepBranchSet};
use super::se::SeParams;
use super::{Dense, Exec};
use crate::error::{Error, Result};
use crate::init;
use crate::tensor::{activation, batchnorm_apply, scale_channels, Activation, BnParams, ConvParams, Scalar, Tensor};

/// Weight layout: multi-branch training form or fused deployment form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Form {
    Train,
    Deploy,
}

impl Form {
    pub fn as_str(self) -> &'static str {
        match self {
            Form::Train => "train",
            Form::Deploy => "deploy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackboneConfig {
    pub stage_channels: [usize; 4],
    pub stage_depths: [usize; 4],
    pub ffn_expansion: usize,
    pub input_channels: usize,
    pub se_reduction: usize,
    /// Blocks whose in-stage index has this parity carry an SE gate.
    pub se_phase: usize,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self {
            stage_channels: [16, 32, 64, 128],
            stage_depths: [2, 2, 4, 2],
            ffn_expansion: 2,
            input_channels: 3,
            se_reduction: SeParams::<f32>::DEFAULT_REDUCTION,
            se_phase: 0,
        }
    }
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<()> {
        const OP: &str = "backbone config";
        if self.stage_channels.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid(OP, "stage channels must be nondecreasing"));
        }
        if self.stage_depths.contains(&0) {
            return Err(Error::invalid(OP, "stage depths must be at least 1"));
        }
        if self.stage_channels[0] < 2 || self.input_channels == 0 || self.ffn_expansion == 0 {
            return Err(Error::invalid(OP, "channel counts must be positive"));
        }
        if self.se_reduction == 0 || self.stage_channels.iter().any(|c| c % self.se_reduction != 0) {
            return Err(Error::invalid(OP, "stage channels must be divisible by the SE reduction"));
        }
        Ok(())
    }

    pub fn stem_mid_channels(&self) -> usize {
        self.stage_channels[0] / 2
    }

    pub fn has_se(&self, block_index: usize) -> bool {
        block_index % 2 == self.se_phase % 2
    }
}

/// Convolution with a batch norm (train form) or its folded equivalent.
#[derive(Debug, Clone, PartialEq)]
pub enum ConvUnit<T> {
    Train(ConvBn<T>),
    Deploy(ConvParams<T>),
}

impl<T: Scalar> ConvUnit<T> {
    fn random<R: Rng>(rng: &mut R, out_ch: usize, in_ch: usize, k: usize, stride: usize, groups: usize) -> Self {
        ConvUnit::Train(ConvBn {
            conv: init::conv(rng, out_ch, in_ch, k, stride, k / 2, groups, false),
            bn: init::batchnorm(rng, out_ch),
        })
    }

    pub fn forward(&self, x: &Tensor<T>, exec: &dyn Exec<T>) -> Result<Tensor<T>> {
        let y = match self {
            ConvUnit::Train(cb) => batchnorm_apply(&exec.conv(x, &cb.conv)?, &cb.bn)?,
            ConvUnit::Deploy(c) => exec.conv(x, c)?,
        };
        exec.remask(y)
    }

    pub fn fused(&self) -> Result<Self> {
        Ok(match self {
            ConvUnit::Train(cb) => ConvUnit::Deploy(cb.fuse()?),
            ConvUnit::Deploy(_) => return Err(already_deployed()),
        })
    }

    pub fn conv(&self) -> &ConvParams<T> {
        match self {
            ConvUnit::Train(cb) => &cb.conv,
            ConvUnit::Deploy(c) => c,
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            ConvUnit::Train(cb) => cb.param_count(),
            ConvUnit::Deploy(c) => c.param_count(),
        }
    }

    fn form(&self) -> Form {
        match self {
            ConvUnit::Train(_) => Form::Train,
            ConvUnit::Deploy(_) => Form::Deploy,
        }
    }
}

/// Depthwise token mixer: parallel branches or the single fused 3x3 conv.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum TokenMixer<T> {
    Branches(RepBranchSet<T>),
    Fused(ConvParams<T>),
}

impl<T: Scalar> TokenMixer<T> {
    fn random<R: Rng>(rng: &mut R, c: usize, stride: usize) -> Self {
        TokenMixer::Branches(RepBranchSet {
            dw3x3: ConvBn {
                conv: init::conv(rng, c, c, 3, stride, 1, c, false),
                bn: init::batchnorm(rng, c),
            },
            dw1x1: ConvBn {
                conv: init::conv(rng, c, c, 1, stride, 0, c, false),
                bn: init::batchnorm(rng, c),
            },
            identity_bn: (stride == 1).then(|| init::batchnorm(rng, c)),
        })
    }

    pub fn forward(&self, x: &Tensor<T>, exec: &dyn Exec<T>) -> Result<Tensor<T>> {
        let y = match self {
            TokenMixer::Branches(b) => {
                b.validate()?;
                let mut y = batchnorm_apply(&exec.conv(x, &b.dw3x3.conv)?, &b.dw3x3.bn)?;
                y.add_assign(&batchnorm_apply(&exec.conv(x, &b.dw1x1.conv)?, &b.dw1x1.bn)?)?;
                if let Some(bn) = &b.identity_bn {
                    y.add_assign(&batchnorm_apply(x, bn)?)?;
                }
                y
            }
            TokenMixer::Fused(c) => exec.conv(x, c)?,
        };
        exec.remask(y)
    }

    pub fn fused(&self) -> Result<Self> {
        match self {
            TokenMixer::Branches(b) => Ok(TokenMixer::Fused(fuse_rep_branches(b)?)),
            TokenMixer::Fused(_) => Err(already_deployed()),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            TokenMixer::Branches(b) => b.param_count(),
            TokenMixer::Fused(c) => c.param_count(),
        }
    }

    fn form(&self) -> Form {
        match self {
            TokenMixer::Branches(_) => Form::Train,
            TokenMixer::Fused(_) => Form::Deploy,
        }
    }
}

/// Stride-1 block: token mixer, optional SE gate, residual FFN channel mixer.
#[derive(Debug, Clone, PartialEq)]
pub struct RepVitBlock<T> {
    pub token: TokenMixer<T>,
    pub se: Option<SeParams<T>>,
    pub ffn_expand: ConvUnit<T>,
    pub ffn_project: ConvUnit<T>,
}

impl<T: Scalar> RepVitBlock<T> {
    pub fn random<R: Rng>(rng: &mut R, c: usize, expansion: usize, se_reduction: Option<usize>) -> Result<Self> {
        let token = TokenMixer::random(rng, c, 1);
        let se = se_reduction.map(|r| SeParams::random(rng, c, r)).transpose()?;
        let hidden = c * expansion;
        Ok(Self {
            token,
            se,
            ffn_expand: ConvUnit::random(rng, hidden, c, 1, 1, 1),
            ffn_project: ConvUnit::random(rng, c, hidden, 1, 1, 1),
        })
    }

    pub fn form(&self) -> Form {
        self.token.form()
    }

    pub fn forward(&self, x: &Tensor<T>, exec: &dyn Exec<T>) -> Result<Tensor<T>> {
        let mut t = self.token.forward(x, exec)?;
        if let Some(se) = &self.se {
            let gate = se.gate(&exec.pool(&t)?)?;
            t = scale_channels(&t, &gate)?;
        }
        let hidden = activation(&self.ffn_expand.forward(&t, exec)?, Activation::Gelu);
        let mut out = self.ffn_project.forward(&hidden, exec)?;
        out.add_assign(&t)?;
        Ok(out)
    }

    pub fn reparameterized(&self) -> Result<Self> {
        Ok(Self {
            token: self.token.fused()?,
            se: self.se.clone(),
            ffn_expand: self.ffn_expand.fused()?,
            ffn_project: self.ffn_project.fused()?,
        })
    }

    pub fn param_count(&self) -> usize {
        self.token.param_count()
            + self.se.as_ref().map_or(0, |s| s.param_count())
            + self.ffn_expand.param_count()
            + self.ffn_project.param_count()
    }
}

/// Forward pass of a single block, checking that the stored weights match
/// the requested form.
pub fn repvit_block_forward<T: Scalar>(input: &Tensor<T>, block: &RepVitBlock<T>, mode: Form) -> Result<Tensor<T>> {
    check_form(block.form(), mode)?;
    block.forward(input, &Dense)
}

/// Stride-2 depthwise mixer followed by a 1x1 pointwise channel change.
#[derive(Debug, Clone, PartialEq)]
pub struct Downsample<T> {
    pub token: TokenMixer<T>,
    pub pointwise: ConvUnit<T>,
}

impl<T: Scalar> Downsample<T> {
    fn random<R: Rng>(rng: &mut R, in_ch: usize, out_ch: usize) -> Self {
        Self {
            token: TokenMixer::random(rng, in_ch, 2),
            pointwise: ConvUnit::random(rng, out_ch, in_ch, 1, 1, 1),
        }
    }

    pub fn forward(&self, x: &Tensor<T>, exec: &dyn Exec<T>) -> Result<Tensor<T>> {
        let t = self.token.forward(x, exec)?;
        self.pointwise.forward(&t, exec)
    }

    fn reparameterized(&self) -> Result<Self> {
        Ok(Self {
            token: self.token.fused()?,
            pointwise: self.pointwise.fused()?,
        })
    }

    pub fn param_count(&self) -> usize {
        self.token.param_count() + self.pointwise.param_count()
    }
}

/// Two stride-2 3x3 convolutions with a GELU in between.
#[derive(Debug, Clone, PartialEq)]
pub struct Stem<T> {
    pub conv1: ConvUnit<T>,
    pub conv2: ConvUnit<T>,
}

impl<T: Scalar> Stem<T> {
    pub fn forward(&self, x: &Tensor<T>, exec: &dyn Exec<T>) -> Result<Tensor<T>> {
        let h = activation(&self.conv1.forward(x, exec)?, Activation::Gelu);
        self.conv2.forward(&h, exec)
    }

    pub fn param_count(&self) -> usize {
        self.conv1.param_count() + self.conv2.param_count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage<T> {
    pub downsample: Option<Downsample<T>>,
    pub blocks: Vec<RepVitBlock<T>>,
}

/// Outputs of the four stages, at strides 4, 8, 16 and 32.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePyramid<T> {
    pub levels: Vec<Tensor<T>>,
}

impl<T: Scalar> FeaturePyramid<T> {
    pub const STRIDES: [usize; 4] = [4, 8, 16, 32];

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        if self.levels.len() != other.levels.len() {
            return Err(Error::shape("pyramid", "levels", self.levels.len(), other.levels.len()));
        }
        let mut worst: f64 = 0.0;
        for (a, b) in self.levels.iter().zip(&other.levels) {
            worst = worst.max(a.max_abs_diff(b)?);
        }
        Ok(worst)
    }
}

/// Complete weight container of the backbone, in either form.
#[derive(Debug, Clone, PartialEq)]
pub struct Backbone<T> {
    pub config: BackboneConfig,
    pub stem: Stem<T>,
    pub stages: Vec<Stage<T>>,
}

impl<T: Scalar> Backbone<T> {
    /// Seeded train-form weights; batch norms get random statistics.
    pub fn random(config: &BackboneConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = init::rng(seed);
        let c0 = config.stage_channels[0];
        let mid = config.stem_mid_channels();
        let stem = Stem {
            conv1: ConvUnit::random(&mut rng, mid, config.input_channels, 3, 2, 1),
            conv2: ConvUnit::random(&mut rng, c0, mid, 3, 2, 1),
        };
        let mut stages = Vec::with_capacity(4);
        for s in 0..4 {
            let c = config.stage_channels[s];
            let downsample = (s > 0).then(|| Downsample::random(&mut rng, config.stage_channels[s - 1], c));
            let blocks = (0..config.stage_depths[s])
                .map(|j| {
                    let se = config.has_se(j).then_some(config.se_reduction);
                    RepVitBlock::random(&mut rng, c, config.ffn_expansion, se)
                })
                .collect::<Result<Vec<_>>>()?;
            stages.push(Stage { downsample, blocks });
        }
        Ok(Self {
            config: config.clone(),
            stem,
            stages,
        })
    }

    pub fn form(&self) -> Form {
        self.stem.conv1.form()
    }

    pub fn param_count(&self) -> usize {
        self.stem.param_count()
            + self
                .stages
                .iter()
                .map(|s| {
                    s.downsample.as_ref().map_or(0, |d| d.param_count())
                        + s.blocks.iter().map(|b| b.param_count()).sum::<usize>()
                })
                .sum::<usize>()
    }

    /// Runs the network with an arbitrary executor (dense or sparse).
    pub fn forward_with(&self, input: &Tensor<T>, exec: &dyn Exec<T>) -> Result<FeaturePyramid<T>> {
        let (h, w) = (input.height(), input.width());
        if h % 32 != 0 || w % 32 != 0 || h == 0 || w == 0 {
            return Err(Error::invalid(
                "backbone_forward",
                format!("input {h}x{w} is not divisible by 32"),
            ));
        }
        if input.channels() != self.config.input_channels {
            return Err(Error::shape(
                "backbone_forward",
                "input channels",
                self.config.input_channels,
                input.channels(),
            ));
        }
        let mut x = self.stem.forward(&exec.remask(input.clone())?, exec)?;
        let mut levels = Vec::with_capacity(4);
        for stage in &self.stages {
            if let Some(ds) = &stage.downsample {
                x = ds.forward(&x, exec)?;
            }
            for block in &stage.blocks {
                x = block.forward(&x, exec)?;
            }
            levels.push(x.clone());
        }
        Ok(FeaturePyramid { levels })
    }
}

pub fn backbone_forward<T: Scalar>(input: &Tensor<T>, weights: &Backbone<T>, mode: Form) -> Result<FeaturePyramid<T>> {
    check_form(weights.form(), mode)?;
    weights.forward_with(input, &Dense)
}

/// Replaces every branch set and conv/BN pair with its fused convolution.
pub fn reparam_backbone<T: Scalar>(train: &Backbone<T>) -> Result<Backbone<T>> {
    if train.form() == Form::Deploy {
        return Err(already_deployed());
    }
    let stem = Stem {
        conv1: train.stem.conv1.fused()?,
        conv2: train.stem.conv2.fused()?,
    };
    let stages = train
        .stages
        .iter()
        .map(|s| {
            Ok(Stage {
                downsample: s.downsample.as_ref().map(|d| d.reparameterized()).transpose()?,
                blocks: s.blocks.iter().map(|b| b.reparameterized()).collect::<Result<_>>()?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Backbone {
        config: train.config.clone(),
        stem,
        stages,
    })
}

fn check_form(have: Form, want: Form) -> Result<()> {
    match (have, want) {
        (a, b) if a == b => Ok(()),
        (Form::Train, Form::Deploy) => Err(Error::Missing {
            op: "deploy-form forward",
            what: "fused weights",
        }),
        _ => Err(Error::Missing {
            op: "train-form forward",
            what: "branch weights",
        }),
    }
}

fn already_deployed() -> Error {
    Error::invalid("reparameterize", "weights are already in deploy form")
}

/// Builds a unit with an explicit batch norm, for hand-constructed tests.
pub fn conv_bn_unit<T: Scalar>(conv: ConvParams<T>, bn: BnParams<T>) -> ConvUnit<T> {
    ConvUnit::Train(ConvBn { conv, bn })
}
