// SPDX-License-Identifier: Apache-2.0
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use repdet_core::loss::{BBox, LossConfig, LossVariant};

pub fn rng(seed: u64) -> ChaCha8Rng {
    repdet_core::init::rng(seed)
}

/// Positive-area box inside roughly [0, 150]^2.
pub fn random_box<R: Rng>(rng: &mut R) -> BBox {
    let x = rng.gen_range(0.0..100.0);
    let y = rng.gen_range(0.0..100.0);
    let w = rng.gen_range(1.0..50.0);
    let h = rng.gen_range(1.0..50.0);
    BBox::from_xywh(x, y, w, h).unwrap()
}

/// Pairs that overlap about half the time.
pub fn random_pair<R: Rng>(rng: &mut R) -> (BBox, BBox) {
    let a = random_box(rng);
    let b = if rng.gen_bool(0.5) {
        random_box(rng)
    } else {
        let j = |rng: &mut R, s: f64| rng.gen_range(-0.3..0.3) * s;
        let (w, h) = (a.width(), a.height());
        let x1 = a.x1 + j(rng, w);
        let y1 = a.y1 + j(rng, h);
        let x2 = (a.x2 + j(rng, w)).max(x1 + 0.5);
        let y2 = (a.y2 + j(rng, h)).max(y1 + 0.5);
        BBox::new(x1, y1, x2, y2).unwrap()
    };
    (a, b)
}

pub fn cfg(v: LossVariant) -> LossConfig {
    LossConfig {
        image_w: Some(640.0),
        image_h: Some(480.0),
        ..LossConfig::with_variant(v)
    }
}

pub fn rel(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}
