// SPDX-License-Identifier: Apache-2.0

//! Sparse masked image modeling: patch masks, convolutions restricted to
//! kept positions, densification, reconstruction loss and a gradient-free
//! pretraining demo.

mod mask;
mod model;
mod pretrain;
mod sparse;

pub use mask::{generate_mask, mask_downsample, MaskGrid};
pub use model::{masked_recon_loss, spark_encode_decode, Decoder, SparkModel};
pub use pretrain::{
    spark_pretrain_toy, spark_pretrain_with, synthetic_images, PretrainConfig, PretrainRun, PRETRAIN_PARAM_BUDGET,
};
pub use sparse::{apply_mask, densify, sparse_conv2d, MaskEmbedding, Sparse};
