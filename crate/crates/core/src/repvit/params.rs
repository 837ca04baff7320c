// SPDX-License-Identifier: Apache-2.0

//! Mapping between [`Backbone`] weights and the named-tensor container.
//!
//! Layer geometry (stride, padding, groups) is structural and is not
//! stored; the architecture is recovered from the tensor names and shapes.

use std::cell::RefCell;
use std::collections::{BTreeSet, HashMap};

use super::backbone::{Backbone, BackboneConfig, ConvUnit, Downsample, RepVitBlock, Stage, Stem, TokenMixer};
use super::fuse::{ConvBn, RepBranchSet};
use super::se::SeParams;
use super::Form;
use crate::error::{Error, Result};
use crate::io::{NamedTensor, WeightContainer};
use crate::tensor::{BnParams, ConvParams, Scalar, Tensor};

pub(crate) struct Writer {
    pub(crate) container: WeightContainer,
}

impl Writer {
    pub(crate) fn new(form: Form) -> Self {
        Self {
            container: WeightContainer::new(form),
        }
    }

    pub(crate) fn push<T: Scalar>(&mut self, name: String, shape: Vec<usize>, data: &[T]) {
        self.container.tensors.push(NamedTensor {
            name,
            shape,
            dtype: T::DTYPE,
            data: data.iter().map(|v| v.as_f64()).collect(),
        });
    }

    pub(crate) fn conv<T: Scalar>(&mut self, prefix: &str, c: &ConvParams<T>) {
        self.push(format!("{prefix}.weight"), c.weight.shape().to_vec(), c.weight.data());
        self.push(format!("{prefix}.bias"), vec![c.bias.len()], &c.bias);
    }

    fn bn<T: Scalar>(&mut self, prefix: &str, bn: &BnParams<T>) {
        let c = bn.channels();
        self.push(format!("{prefix}.gamma"), vec![c], &bn.gamma);
        self.push(format!("{prefix}.beta"), vec![c], &bn.beta);
        self.push(format!("{prefix}.running_mean"), vec![c], &bn.running_mean);
        self.push(format!("{prefix}.running_var"), vec![c], &bn.running_var);
        self.push(format!("{prefix}.eps"), vec![1], &[bn.eps]);
    }

    fn conv_bn<T: Scalar>(&mut self, prefix: &str, cb: &ConvBn<T>) {
        self.conv(&format!("{prefix}.conv"), &cb.conv);
        self.bn(&format!("{prefix}.bn"), &cb.bn);
    }

    fn unit<T: Scalar>(&mut self, prefix: &str, u: &ConvUnit<T>) {
        match u {
            ConvUnit::Train(cb) => self.conv_bn(prefix, cb),
            ConvUnit::Deploy(c) => self.conv(prefix, c),
        }
    }

    fn token<T: Scalar>(&mut self, prefix: &str, t: &TokenMixer<T>) {
        match t {
            TokenMixer::Branches(b) => {
                self.conv_bn(&format!("{prefix}.dw3x3"), &b.dw3x3);
                self.conv_bn(&format!("{prefix}.dw1x1"), &b.dw1x1);
                if let Some(bn) = &b.identity_bn {
                    self.bn(&format!("{prefix}.identity_bn"), bn);
                }
            }
            TokenMixer::Fused(c) => self.conv(&format!("{prefix}.fused"), c),
        }
    }
}

/// Name-indexed view of a container that remembers which tensors were used.
pub(crate) struct Reader<'a> {
    by_name: HashMap<&'a str, &'a NamedTensor>,
    used: RefCell<BTreeSet<&'a str>>,
}

fn incomplete(msg: impl Into<String>) -> Error {
    Error::Container(msg.into())
}

impl<'a> Reader<'a> {
    pub(crate) fn new(c: &'a WeightContainer) -> Result<Self> {
        c.validate()?;
        Ok(Self {
            by_name: c.tensors.iter().map(|t| (t.name.as_str(), t)).collect(),
            used: RefCell::new(BTreeSet::new()),
        })
    }

    pub(crate) fn has(&self, name: &str) -> bool {
        self.by_name.contains_key(name)
    }

    fn take(&self, name: &str) -> Result<&'a NamedTensor> {
        let (k, t) = self
            .by_name
            .get_key_value(name)
            .ok_or_else(|| incomplete(format!("missing tensor {name:?}")))?;
        self.used.borrow_mut().insert(k);
        Ok(t)
    }

    pub(crate) fn vector<T: Scalar>(&self, name: &str, len: usize) -> Result<Vec<T>> {
        let t = self.take(name)?;
        if t.shape != [len] {
            return Err(incomplete(format!("tensor {name:?} has shape {:?}, expected [{len}]", t.shape)));
        }
        Ok(t.data.iter().map(|&v| T::of(v)).collect())
    }

    pub(crate) fn shape4(&self, name: &str) -> Result<[usize; 4]> {
        let t = self
            .by_name
            .get(name)
            .ok_or_else(|| incomplete(format!("missing tensor {name:?}")))?;
        <[usize; 4]>::try_from(t.shape.as_slice())
            .map_err(|_| incomplete(format!("tensor {name:?} is not rank 4")))
    }

    /// `groups == 0` means depthwise (one group per output channel).
    pub(crate) fn conv<T: Scalar>(&self, prefix: &str, stride: usize, groups: usize) -> Result<ConvParams<T>> {
        let wname = format!("{prefix}.weight");
        let shape = self.shape4(&wname)?;
        let t = self.take(&wname)?;
        let weight = Tensor::new(shape, t.data.iter().map(|&v| T::of(v)).collect())?;
        let bias = self.vector(&format!("{prefix}.bias"), shape[0])?;
        let groups = if groups == 0 { shape[0] } else { groups };
        ConvParams::new(weight, bias, stride, shape[2] / 2, groups)
    }

    fn bn<T: Scalar>(&self, prefix: &str, c: usize) -> Result<BnParams<T>> {
        let bn = BnParams {
            gamma: self.vector(&format!("{prefix}.gamma"), c)?,
            beta: self.vector(&format!("{prefix}.beta"), c)?,
            running_mean: self.vector(&format!("{prefix}.running_mean"), c)?,
            running_var: self.vector(&format!("{prefix}.running_var"), c)?,
            eps: self.vector(&format!("{prefix}.eps"), 1)?[0],
        };
        bn.validate()?;
        Ok(bn)
    }

    fn conv_bn<T: Scalar>(&self, prefix: &str, stride: usize, groups: usize) -> Result<ConvBn<T>> {
        let conv = self.conv(&format!("{prefix}.conv"), stride, groups)?;
        let bn = self.bn(&format!("{prefix}.bn"), conv.out_channels())?;
        Ok(ConvBn { conv, bn })
    }

    fn unit<T: Scalar>(&self, prefix: &str, stride: usize, groups: usize) -> Result<ConvUnit<T>> {
        if self.has(&format!("{prefix}.conv.weight")) {
            Ok(ConvUnit::Train(self.conv_bn(prefix, stride, groups)?))
        } else {
            Ok(ConvUnit::Deploy(self.conv(prefix, stride, groups)?))
        }
    }

    fn token<T: Scalar>(&self, prefix: &str, stride: usize) -> Result<TokenMixer<T>> {
        let fused = format!("{prefix}.fused");
        if self.has(&format!("{fused}.weight")) {
            return Ok(TokenMixer::Fused(self.conv(&fused, stride, 0)?));
        }
        let dw3x3 = self.conv_bn(&format!("{prefix}.dw3x3"), stride, 0)?;
        let c = dw3x3.conv.out_channels();
        let set = RepBranchSet {
            dw3x3,
            dw1x1: self.conv_bn(&format!("{prefix}.dw1x1"), stride, 0)?,
            identity_bn: if stride == 1 {
                Some(self.bn(&format!("{prefix}.identity_bn"), c)?)
            } else {
                None
            },
        };
        set.validate()?;
        Ok(TokenMixer::Branches(set))
    }

    pub(crate) fn finish(&self) -> Result<()> {
        let used = self.used.borrow();
        let mut extra: Vec<&str> = self.by_name.keys().filter(|k| !used.contains(*k)).copied().collect();
        extra.sort_unstable();
        match extra.first() {
            None => Ok(()),
            Some(name) => Err(incomplete(format!(
                "{} unexpected tensor(s), first {name:?}",
                extra.len()
            ))),
        }
    }
}

impl<T: Scalar> Backbone<T> {
    pub fn to_container(&self) -> WeightContainer {
        let mut w = Writer::new(self.form());
        self.write_into(&mut w, "");
        w.container
    }

    pub(crate) fn write_into(&self, w: &mut Writer, root: &str) {
        w.unit(&format!("{root}stem.conv1"), &self.stem.conv1);
        w.unit(&format!("{root}stem.conv2"), &self.stem.conv2);
        for (s, stage) in self.stages.iter().enumerate() {
            if let Some(ds) = &stage.downsample {
                w.token(&format!("{root}stages.{s}.downsample.token"), &ds.token);
                w.unit(&format!("{root}stages.{s}.downsample.pointwise"), &ds.pointwise);
            }
            for (j, b) in stage.blocks.iter().enumerate() {
                let p = format!("{root}stages.{s}.blocks.{j}");
                w.token(&format!("{p}.token"), &b.token);
                if let Some(se) = &b.se {
                    w.conv(&format!("{p}.se.reduce"), &se.reduce);
                    w.conv(&format!("{p}.se.expand"), &se.expand);
                }
                w.unit(&format!("{p}.ffn_expand"), &b.ffn_expand);
                w.unit(&format!("{p}.ffn_project"), &b.ffn_project);
            }
        }
    }

    /// Rebuilds a backbone; every tensor in the container must be consumed.
    pub fn from_container(c: &WeightContainer) -> Result<Self> {
        let r = Reader::new(c)?;
        let bb = Self::read_from(&r, "", c.form)?;
        r.finish()?;
        Ok(bb)
    }

    pub(crate) fn read_from(r: &Reader<'_>, root: &str, form: Form) -> Result<Self> {
        let stem = Stem {
            conv1: r.unit(&format!("{root}stem.conv1"), 2, 1)?,
            conv2: r.unit(&format!("{root}stem.conv2"), 2, 1)?,
        };
        let mut stages = Vec::with_capacity(4);
        let mut stage_channels = [0; 4];
        let mut stage_depths = [0; 4];
        let mut ffn_expansion = 0;
        let mut se_reduction = 0;
        let mut se_phase = None;
        for s in 0..4 {
            let downsample = if s > 0 {
                let p = format!("{root}stages.{s}.downsample");
                Some(Downsample {
                    token: r.token(&format!("{p}.token"), 2)?,
                    pointwise: r.unit(&format!("{p}.pointwise"), 1, 1)?,
                })
            } else {
                None
            };
            let mut blocks = Vec::new();
            loop {
                let p = format!("{root}stages.{s}.blocks.{}", blocks.len());
                let probe_expand = format!("{p}.ffn_expand");
                if !r.has(&format!("{probe_expand}.conv.weight")) && !r.has(&format!("{probe_expand}.weight")) {
                    break;
                }
                let token = r.token(&format!("{p}.token"), 1)?;
                let se = if r.has(&format!("{p}.se.reduce.weight")) {
                    let se = SeParams {
                        reduce: r.conv(&format!("{p}.se.reduce"), 1, 1)?,
                        expand: r.conv(&format!("{p}.se.expand"), 1, 1)?,
                    };
                    se.validate()?;
                    se_reduction = se.reduction_ratio();
                    se_phase.get_or_insert(blocks.len() % 2);
                    Some(se)
                } else {
                    se_phase.get_or_insert((blocks.len() + 1) % 2);
                    None
                };
                let ffn_expand = r.unit(&probe_expand, 1, 1)?;
                let ffn_project = r.unit(&format!("{p}.ffn_project"), 1, 1)?;
                let c = ffn_project.conv().out_channels();
                ffn_expansion = ffn_expand.conv().out_channels() / c.max(1);
                stage_channels[s] = c;
                blocks.push(RepVitBlock {
                    token,
                    se,
                    ffn_expand,
                    ffn_project,
                });
            }
            if blocks.is_empty() {
                return Err(incomplete(format!("stage {s} has no blocks")));
            }
            stage_depths[s] = blocks.len();
            stages.push(Stage { downsample, blocks });
        }
        let input_channels = stem.conv1.conv().in_channels();
        let config = BackboneConfig {
            stage_channels,
            stage_depths,
            ffn_expansion,
            input_channels,
            se_reduction: if se_reduction == 0 { 4 } else { se_reduction },
            se_phase: se_phase.unwrap_or(0),
        };
        config.validate()?;
        let bb = Backbone { config, stem, stages };
        if bb.form() != form {
            return Err(incomplete(format!(
                "container declares form {:?} but holds {:?} weights",
                form.as_str(),
                bb.form().as_str()
            )));
        }
        Ok(bb)
    }
}
