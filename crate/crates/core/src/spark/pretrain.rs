// SPDX-License-Identifier: Apache-2.0

use rand::Rng;

use super::{generate_mask, masked_recon_loss, MaskGrid, SparkModel};
use crate::error::{Error, Result};
use crate::init;
use crate::repvit::BackboneConfig;
use crate::tensor::Tensor;

/// Upper bound on model size for the gradient-free demo.
pub const PRETRAIN_PARAM_BUDGET: usize = 2048;

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainConfig {
    pub backbone: BackboneConfig,
    pub patch_size: usize,
    pub mask_ratio: f64,
    pub per_patch_norm: bool,
    /// Step size at step `t` is `step_size * step_decay^t`.
    pub step_size: f64,
    pub step_decay: f64,
    pub perturbation: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            backbone: BackboneConfig {
                stage_channels: [2, 4, 4, 8],
                stage_depths: [1, 1, 1, 1],
                ffn_expansion: 1,
                input_channels: 1,
                se_reduction: 2,
                se_phase: 0,
            },
            patch_size: 8,
            mask_ratio: 0.6,
            per_patch_norm: false,
            step_size: 0.05,
            step_decay: 0.999,
            perturbation: 0.01,
        }
    }
}

/// Result of a pretraining run. `trace[t]` is the mean loss over the image
/// set before update `t`, so `trace[0]` is the initial loss.
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainRun {
    pub trace: Vec<f64>,
    /// Loss after the last update.
    pub final_loss: f64,
    pub model: SparkModel<f64>,
}

impl PretrainRun {
    pub fn ratio(&self) -> f64 {
        self.final_loss / self.trace[0]
    }
}

/// Four 32x32 single-channel images: a ramp, stripes, a disc and a checker.
pub fn synthetic_images() -> Vec<Tensor<f64>> {
    let s = 32;
    let f = |g: &dyn Fn(f64, f64) -> f64| Tensor::from_fn([1, 1, s, s], |_, _, y, x| g(y as f64, x as f64));
    vec![
        f(&|y, x| (x + y) / 62.0),
        f(&|_, x| if (x as usize / 4).is_multiple_of(2) { 0.8 } else { 0.2 }),
        f(&|y, x| if (y - 15.5).powi(2) + (x - 15.5).powi(2) < 100.0 { 1.0 } else { 0.1 }),
        f(&|y, x| if ((y as usize / 8) + (x as usize / 8)).is_multiple_of(2) { 0.9 } else { 0.3 }),
    ]
}

/// Seeded mask with at least one kept and one masked patch.
fn demo_mask(h: usize, w: usize, cfg: &PretrainConfig, seed: u64) -> Result<MaskGrid> {
    for k in 0..1000u64 {
        let m = generate_mask(h, w, cfg.patch_size, cfg.mask_ratio, seed.wrapping_add(k))?;
        if m.kept_count() > 0 && m.masked_count() > 0 {
            return Ok(m);
        }
    }
    Err(Error::invalid("spark_pretrain_toy", "could not draw a mixed mask"))
}

fn is_learnable(name: &str) -> bool {
    !(name.ends_with(".running_mean") || name.ends_with(".running_var") || name.ends_with(".eps"))
}

/// Simultaneous-perturbation descent on the masked reconstruction loss.
///
/// Each step draws a Rademacher direction, evaluates the loss at
/// `theta +- c * delta` and moves against the estimated gradient. BN
/// running statistics are frozen. Masks are fixed per image.
pub fn spark_pretrain_toy(images: &[Tensor<f64>], steps: usize, seed: u64) -> Result<PretrainRun> {
    spark_pretrain_with(images, steps, seed, &PretrainConfig::default())
}

pub fn spark_pretrain_with(images: &[Tensor<f64>], steps: usize, seed: u64, cfg: &PretrainConfig) -> Result<PretrainRun> {
    const OP: &str = "spark_pretrain_toy";
    if steps == 0 {
        return Err(Error::invalid(OP, "steps must be at least 1"));
    }
    if images.is_empty() {
        return Err(Error::invalid(OP, "empty image set"));
    }
    let model = SparkModel::<f64>::random(&cfg.backbone, seed)?;
    if model.param_count() > PRETRAIN_PARAM_BUDGET {
        return Err(Error::invalid(
            OP,
            format!("{} parameters exceed the budget of {PRETRAIN_PARAM_BUDGET}", model.param_count()),
        ));
    }
    let masks = images
        .iter()
        .enumerate()
        .map(|(i, img)| demo_mask(img.height(), img.width(), cfg, seed.wrapping_add(1000 * (i as u64 + 1))))
        .collect::<Result<Vec<_>>>()?;

    let mut container = model.to_container();
    let slots: Vec<(usize, usize)> = container
        .tensors
        .iter()
        .enumerate()
        .filter(|(_, t)| is_learnable(&t.name))
        .flat_map(|(ti, t)| (0..t.data.len()).map(move |k| (ti, k)))
        .collect();
    let mut theta: Vec<f64> = slots.iter().map(|&(ti, k)| container.tensors[ti].data[k]).collect();

    let mut loss_at = |theta: &[f64]| -> Result<f64> {
        for (&(ti, k), &v) in slots.iter().zip(theta) {
            container.tensors[ti].data[k] = v;
        }
        let m = SparkModel::from_container(&container)?;
        let mut total = 0.0;
        for (img, mask) in images.iter().zip(&masks) {
            total += masked_recon_loss(&m.forward(img, mask)?, img, mask, cfg.per_patch_norm)?;
        }
        Ok(total / images.len() as f64)
    };

    let mut rng = init::rng(seed.wrapping_add(0x5eed));
    let mut trace = Vec::with_capacity(steps);
    let c = cfg.perturbation;
    for t in 0..steps {
        trace.push(loss_at(&theta)?);
        let delta: Vec<f64> = (0..theta.len()).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
        let plus: Vec<f64> = theta.iter().zip(&delta).map(|(v, d)| v + c * d).collect();
        let minus: Vec<f64> = theta.iter().zip(&delta).map(|(v, d)| v - c * d).collect();
        let diff = (loss_at(&plus)? - loss_at(&minus)?) / (2.0 * c);
        let a = cfg.step_size * cfg.step_decay.powi(t as i32);
        for (v, d) in theta.iter_mut().zip(&delta) {
            *v -= a * diff * d;
        }
    }
    let final_loss = loss_at(&theta)?;
    let model = SparkModel::from_container(&container)?;
    Ok(PretrainRun {
        trace,
        final_loss,
        model,
    })
}
