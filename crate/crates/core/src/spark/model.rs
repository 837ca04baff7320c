// SPDX-License-Identifier: Apache-2.0

use rand::Rng;

use super::{densify, MaskEmbedding, MaskGrid, Sparse};
use crate::error::{Error, Result};
use crate::init;
use crate::io::WeightContainer;
use crate::repvit::{Backbone, BackboneConfig, Form};
use crate::repvit::params::{Reader, Writer};
use crate::tensor::{activation, conv2d, resize_nearest, Activation, ConvParams, Resize, Scalar, Tensor};

/// Coarse-to-fine decoder: each step upsamples by 2, applies a 3x3 conv
/// and GELU, and adds the densified encoder level at that resolution. The
/// head upsamples by 4 back to the input and maps to image channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoder<T> {
    /// `steps[i]` maps level `3 - i` channels to level `2 - i` channels.
    pub steps: Vec<ConvParams<T>>,
    pub head: ConvParams<T>,
}

impl<T: Scalar> Decoder<T> {
    pub fn random<R: Rng>(rng: &mut R, channels: [usize; 4], out_ch: usize) -> Self {
        Self {
            steps: (0..3)
                .map(|i| init::conv(rng, channels[2 - i], channels[3 - i], 3, 1, 1, 1, true))
                .collect(),
            head: init::conv(rng, out_ch, channels[0], 3, 1, 1, 1, true),
        }
    }

    pub fn zeros(channels: [usize; 4], out_ch: usize) -> Self {
        Self {
            steps: (0..3)
                .map(|i| ConvParams::zeros(channels[2 - i], channels[3 - i], 3, 1, 1, 1))
                .collect(),
            head: ConvParams::zeros(out_ch, channels[0], 3, 1, 1, 1),
        }
    }

    pub fn param_count(&self) -> usize {
        self.steps.iter().map(|s| s.param_count()).sum::<usize>() + self.head.param_count()
    }
}

/// Masked-modeling network: sparse encoder, one mask embedding per level
/// and a dense decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct SparkModel<T> {
    pub encoder: Backbone<T>,
    pub embeddings: Vec<MaskEmbedding<T>>,
    pub decoder: Decoder<T>,
}

impl<T: Scalar> SparkModel<T> {
    /// Train-form encoder from `seed`; decoder and embeddings from `seed + 1`.
    pub fn random(config: &BackboneConfig, seed: u64) -> Result<Self> {
        let encoder = Backbone::random(config, seed)?;
        let mut rng = init::rng(seed.wrapping_add(1));
        let decoder = Decoder::random(&mut rng, config.stage_channels, config.input_channels);
        let embeddings = config
            .stage_channels
            .iter()
            .map(|&c| MaskEmbedding {
                values: (0..c).map(|_| T::of(rng.gen_range(-0.1..0.1))).collect(),
            })
            .collect();
        Ok(Self {
            encoder,
            embeddings,
            decoder,
        })
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count()
            + self.decoder.param_count()
            + self.embeddings.iter().map(MaskEmbedding::channels).sum::<usize>()
    }

    pub fn forward(&self, image: &Tensor<T>, mask: &MaskGrid) -> Result<Tensor<T>> {
        spark_encode_decode(image, mask, &self.encoder, &self.decoder, &self.embeddings)
    }

    /// Train-form container: `encoder.*`, `decoder.steps.{i}`,
    /// `decoder.head` and `embeddings.{level}`.
    pub fn to_container(&self) -> WeightContainer {
        let mut w = Writer::new(Form::Train);
        self.encoder.write_into(&mut w, "encoder.");
        for (i, s) in self.decoder.steps.iter().enumerate() {
            w.conv(&format!("decoder.steps.{i}"), s);
        }
        w.conv("decoder.head", &self.decoder.head);
        for (l, e) in self.embeddings.iter().enumerate() {
            w.push(format!("embeddings.{l}"), vec![e.channels()], &e.values);
        }
        w.container
    }

    pub fn from_container(c: &WeightContainer) -> Result<Self> {
        if c.form != Form::Train {
            return Err(Error::Missing {
                op: "spark model",
                what: "train-form encoder weights",
            });
        }
        let r = Reader::new(c)?;
        let encoder = Backbone::read_from(&r, "encoder.", Form::Train)?;
        let steps = (0..3)
            .map(|i| r.conv(&format!("decoder.steps.{i}"), 1, 1))
            .collect::<Result<Vec<_>>>()?;
        let head = r.conv("decoder.head", 1, 1)?;
        let embeddings = encoder
            .config
            .stage_channels
            .iter()
            .enumerate()
            .map(|(l, &ch)| {
                Ok(MaskEmbedding {
                    values: r.vector(&format!("embeddings.{l}"), ch)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        r.finish()?;
        Ok(Self {
            encoder,
            embeddings,
            decoder: Decoder { steps, head },
        })
    }
}

/// Sparse encode, densify every level, decode to the input resolution.
pub fn spark_encode_decode<T: Scalar>(
    image: &Tensor<T>,
    mask: &MaskGrid,
    encoder: &Backbone<T>,
    decoder: &Decoder<T>,
    embeddings: &[MaskEmbedding<T>],
) -> Result<Tensor<T>> {
    if embeddings.len() != 4 {
        return Err(Error::shape("spark_encode_decode", "embedding levels", 4, embeddings.len()));
    }
    if decoder.steps.len() != 3 {
        return Err(Error::shape("spark_encode_decode", "decoder steps", 3, decoder.steps.len()));
    }
    let pyramid = encoder.forward_with(image, &Sparse::new(mask))?;
    let dense = pyramid
        .levels
        .iter()
        .zip(embeddings)
        .map(|(f, e)| densify(f, mask, e))
        .collect::<Result<Vec<_>>>()?;
    let mut x = dense[3].clone();
    for (i, step) in decoder.steps.iter().enumerate() {
        let up = conv2d(&resize_nearest(&x, Resize::Up(2))?, step)?;
        x = activation(&up, Activation::Gelu);
        x.add_assign(&dense[2 - i])?;
    }
    conv2d(&resize_nearest(&x, Resize::Up(4))?, &decoder.head)
}

/// Mean squared error over masked positions. With `per_patch_norm`, each
/// target patch is standardized per channel (eps 1e-6) first. Zero when no
/// patch is masked.
pub fn masked_recon_loss<T: Scalar>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    mask: &MaskGrid,
    per_patch_norm: bool,
) -> Result<f64> {
    const OP: &str = "masked_recon_loss";
    if pred.shape() != target.shape() {
        return Err(Error::invalid(
            OP,
            format!("pred shape {:?} != target shape {:?}", pred.shape(), target.shape()),
        ));
    }
    let (h, w) = mask.image_hw();
    if (target.height(), target.width()) != (h, w) {
        return Err(Error::invalid(
            OP,
            format!("target {}x{} does not match mask image {h}x{w}", target.height(), target.width()),
        ));
    }
    let p = mask.patch_size;
    let [n, c, _, _] = target.shape();
    let mut sum = 0.0;
    let mut count = 0usize;
    for r in 0..mask.rows() {
        for q in 0..mask.cols() {
            if mask.kept(r, q) {
                continue;
            }
            for ni in 0..n {
                for ci in 0..c {
                    let cells = || (0..p * p).map(|i| (r * p + i / p, q * p + i % p));
                    let (mean, inv_std) = if per_patch_norm {
                        let vals: Vec<f64> = cells().map(|(y, x)| target.at(ni, ci, y, x).as_f64()).collect();
                        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
                        (mean, 1.0 / (var + 1e-6).sqrt())
                    } else {
                        (0.0, 1.0)
                    };
                    for (y, x) in cells() {
                        let t = (target.at(ni, ci, y, x).as_f64() - mean) * inv_std;
                        sum += (pred.at(ni, ci, y, x).as_f64() - t).powi(2);
                        count += 1;
                    }
                }
            }
        }
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}
