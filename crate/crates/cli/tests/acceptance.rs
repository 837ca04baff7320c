// SPDX-License-Identifier: Apache-2.0

//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Tolerances, sample counts and time limits are fixed here.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use repdet_core::eval::{average_precision, evaluate, threshold_key, Detection, EvalConfig, GroundTruth, Interpolation};
use repdet_core::init;
use repdet_core::io::{
    load_annotations, load_config, load_detections, load_weights, read_weights_file, save_weights,
    write_annotation_file, write_detection_file, Category, CocoFile, ImageInfo, NamedTensor, Record,
    WeightContainer,
};
use repdet_core::loss::{
    focaler_map, loss_grad_analytic, loss_grad_fd, loss_value, relative_error, BBox, LossConfig, LossVariant,
    WiouState,
};
use repdet_core::oracle;
use repdet_core::repvit::{
    backbone_forward, fuse_conv_bn, reparam_backbone, repvit_block_forward, Backbone, BackboneConfig, Form,
    RepVitBlock,
};
use repdet_core::spark::{generate_mask, spark_pretrain_toy, sparse_conv2d, synthetic_images, Sparse};
use repdet_core::tensor::{batchnorm_apply, conv2d, Scalar};
use repdet_core::DType;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Option<Duration>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

fn random_box<R: Rng>(r: &mut R) -> BBox {
    BBox::from_xywh(r.gen_range(0.0..100.0), r.gen_range(0.0..100.0), r.gen_range(1.0..50.0), r.gen_range(1.0..50.0))
        .unwrap()
}

/// Half independent boxes, half overlapping jittered copies.
fn random_pair<R: Rng>(r: &mut R) -> (BBox, BBox) {
    let a = random_box(r);
    let b = if r.gen_bool(0.5) {
        random_box(r)
    } else {
        let (w, h) = (a.width(), a.height());
        let x1 = a.x1 + r.gen_range(-0.3..0.3) * w;
        let y1 = a.y1 + r.gen_range(-0.3..0.3) * h;
        let x2 = (a.x2 + r.gen_range(-0.3..0.3) * w).max(x1 + 0.5);
        let y2 = (a.y2 + r.gen_range(-0.3..0.3) * h).max(y1 + 0.5);
        BBox::new(x1, y1, x2, y2).unwrap()
    };
    (a, b)
}

fn loss_cfg(v: LossVariant) -> LossConfig {
    LossConfig {
        image_w: Some(640.0),
        image_h: Some(480.0),
        ..LossConfig::with_variant(v)
    }
}

// ---------------------------------------------------------------------------

fn block_deviation<T: Scalar>(seed: u64) -> f64 {
    let mut r = init::rng(seed);
    let c = [4, 8, 16][r.gen_range(0..3)];
    let se = r.gen_bool(0.5).then_some(4);
    let block = RepVitBlock::<T>::random(&mut r, c, 2, se).unwrap();
    let hw = r.gen_range(4..12);
    let x = init::uniform::<T, _>(&mut r, [1, c, hw, hw], -1.0, 1.0);
    let deploy = block.reparameterized().unwrap();
    let a = repvit_block_forward(&x, &block, Form::Train).unwrap();
    let b = repvit_block_forward(&x, &deploy, Form::Deploy).unwrap();
    a.max_abs_diff(&b).unwrap()
}

fn reparameterization() -> Outcome {
    let w32 = (0..100).map(block_deviation::<f32>).fold(0.0, f64::max);
    let w64 = (0..100).map(block_deviation::<f64>).fold(0.0, f64::max);
    ensure(w32 <= 1e-5, || format!("f32 block deviation {w32:.3e} > 1e-5"))?;
    ensure(w64 <= 1e-10, || format!("f64 block deviation {w64:.3e} > 1e-10"))?;

    let train = Backbone::<f32>::random(&BackboneConfig::default(), 3).map_err(|e| e.to_string())?;
    let deploy = reparam_backbone(&train).map_err(|e| e.to_string())?;
    let only_3x3_token_mixers = deploy.to_container().tensors.iter().all(|t| !t.name.contains("branch"));
    ensure(only_3x3_token_mixers, || "deploy container still holds branch tensors".into())?;
    let x = init::uniform::<f32, _>(&mut init::rng(4), [1, 3, 64, 64], -1.0, 1.0);
    let a = backbone_forward(&x, &train, Form::Train).unwrap();
    let b = backbone_forward(&x, &deploy, Form::Deploy).unwrap();
    let bb = a.max_abs_diff(&b).unwrap();
    ensure(bb <= 1e-4, || format!("toy backbone deviation {bb:.3e} > 1e-4"))?;
    Ok(format!("blocks f32 {w32:.2e}, f64 {w64:.2e}; backbone f32 {bb:.2e}"))
}

fn conv_bn_fusion() -> Outcome {
    let mut r = init::rng(77);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (cin, cout) = (r.gen_range(1..5), r.gen_range(1..5));
        let k = [1, 3][r.gen_range(0..2)];
        let stride = r.gen_range(1..3);
        let bias = r.gen_bool(0.5);
        let conv = init::conv::<f64, _>(&mut r, cout, cin, k, stride, k / 2, 1, bias);
        let bn = init::batchnorm::<f64, _>(&mut r, cout);
        let x = init::uniform::<f64, _>(&mut r, [1, cin, 6, 6], -1.0, 1.0);
        let a = batchnorm_apply(&conv2d(&x, &conv).unwrap(), &bn).unwrap();
        let b = conv2d(&x, &fuse_conv_bn(&conv, &bn).unwrap()).unwrap();
        let scale = a.data().iter().chain(b.data()).fold(0.0f64, |m, v| m.max(v.abs()));
        worst = worst.max(a.max_abs_diff(&b).unwrap() / scale.max(f64::MIN_POSITIVE));
    }
    ensure(worst <= 1e-12, || format!("relative deviation {worst:.3e} > 1e-12"))?;
    Ok(format!("1000 draws, worst rel {worst:.2e}"))
}

const SYMMETRIC: [LossVariant; 10] = [
    LossVariant::Iou,
    LossVariant::Giou,
    LossVariant::Diou,
    LossVariant::Ciou,
    LossVariant::Nwd,
    LossVariant::AlphaIou,
    LossVariant::Eiou,
    LossVariant::Siou,
    LossVariant::MpdIou,
    LossVariant::FocalerIou,
];

fn loss_zoo() -> Outcome {
    let st = WiouState::default().update(0.35).unwrap();
    let value = |p: &BBox, g: &BBox, c: &LossConfig| loss_value(p, g, c, Some(&st)).unwrap();
    let cfgs: Vec<LossConfig> = LossVariant::ALL.iter().map(|&v| loss_cfg(v)).collect();
    let mut r = init::rng(9000);
    let (mut trans, mut scale, mut sym) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..10_000 {
        let (p, g) = random_pair(&mut r);
        let (tx, ty) = (r.gen_range(-100.0..100.0), r.gen_range(-100.0..100.0));
        let s = r.gen_range(0.1..10.0);
        for c in &cfgs {
            ensure(value(&p, &p, c) == 0.0, || format!("{} nonzero at perfect overlap", c.variant))?;
            let base = value(&p, &g, c);
            trans = trans.max(rel(base, value(&p.translate(tx, ty), &g.translate(tx, ty), c)));
            if c.variant != LossVariant::Nwd {
                let cs = LossConfig {
                    image_w: c.image_w.map(|w| w * s),
                    image_h: c.image_h.map(|h| h * s),
                    ..c.clone()
                };
                scale = scale.max(rel(base, value(&p.scale(s), &g.scale(s), &cs)));
            }
            if SYMMETRIC.contains(&c.variant) {
                sym = sym.max((base - value(&g, &p, c)).abs());
            }
        }
    }
    ensure(trans <= 1e-9, || format!("translation rel {trans:.3e} > 1e-9"))?;
    ensure(scale <= 1e-9, || format!("scale rel {scale:.3e} > 1e-9"))?;
    ensure(sym <= 1e-12, || format!("symmetric subset differs by {sym:.3e}"))?;

    let (p, g) = (BBox::new(0.0, 0.0, 10.0, 10.0).unwrap(), BBox::new(5.0, 5.0, 15.0, 15.0).unwrap());
    let nwd = loss_cfg(LossVariant::Nwd);
    let nwd_gap = rel(value(&p, &g, &nwd), value(&p.scale(4.0), &g.scale(4.0), &nwd));
    ensure(nwd_gap > 1e-3, || format!("NWD looks scale invariant (gap {nwd_gap:.3e})"))?;

    let (p, g) = (BBox::new(0.0, 0.0, 4.0, 10.0).unwrap(), BBox::new(1.0, 2.0, 13.0, 8.0).unwrap());
    let shape = LossConfig {
        shape_scale: 1.0,
        ..loss_cfg(LossVariant::ShapeIou)
    };
    let piou = loss_cfg(LossVariant::PowerfulIou);
    let shape_gap = (value(&p, &g, &shape) - value(&g, &p, &shape)).abs();
    let piou_gap = (value(&p, &g, &piou) - value(&g, &p, &piou)).abs();
    ensure(shape_gap > 1e-6 && piou_gap > 1e-6, || "missing asymmetry witness".into())?;
    Ok(format!(
        "10^4 pairs x 13 variants; trans {trans:.1e}, scale {scale:.1e}, sym {sym:.1e}; NWD gap {nwd_gap:.2}, asym {shape_gap:.3}/{piou_gap:.3}"
    ))
}

fn gradients() -> Outcome {
    let mut report = Vec::new();
    for (i, v) in [LossVariant::Iou, LossVariant::Giou, LossVariant::Ciou, LossVariant::FocalerIou].into_iter().enumerate() {
        let c = loss_cfg(v);
        let mut r = init::rng(200 + i as u64);
        let (mut checked, mut worst) = (0, 0.0f64);
        while checked < 100 {
            let (p, g) = random_pair(&mut r);
            let an = loss_grad_analytic(&p, &g, &c).map_err(|e| e.to_string())?;
            let fd = loss_grad_fd(&p, &g, &c, None, 1e-5).map_err(|e| e.to_string())?;
            if an.flagged || fd.flagged {
                continue;
            }
            worst = worst.max(relative_error(&an.grad, &fd.grad));
            checked += 1;
        }
        ensure(worst <= 1e-4, || format!("{v}: rel err {worst:.3e} > 1e-4"))?;
        report.push(format!("{v} {worst:.1e}"));
    }
    Ok(format!("100 pairs each; {}", report.join(", ")))
}

fn focaler() -> Outcome {
    let mut r = init::rng(107);
    let settings = [(0.0, 0.95), (0.0, 1.0), (0.2, 0.8), (0.5, 0.6), (0.05, 0.3)];
    for (d, u) in settings {
        for _ in 0..1000 {
            let iou: f64 = r.gen_range(0.0..=1.0);
            let m = focaler_map(iou, d, u);
            let want = if iou <= d {
                0.0
            } else if iou >= u {
                1.0
            } else {
                (iou - d) / (u - d)
            };
            ensure(m == want, || format!("d={d} u={u} iou={iou}: {m} != {want}"))?;
        }
    }
    Ok("5 settings x 1000 IoU values, exact".into())
}

fn sparse_conv() -> Outcome {
    let mut r = init::rng(500);
    let (mut cases, mut stride2, mut worst) = (0, 0, 0.0f64);
    while cases < 100 {
        let patch = [2, 4][r.gen_range(0..2)];
        let grid = r.gen_range(2..5);
        let hw = patch * grid;
        let stride = if cases % 2 == 0 { 2 } else { 1 };
        let k = [1, 3][r.gen_range(0..2)];
        let (cin, cout) = (r.gen_range(1..4), r.gen_range(1..4));
        if stride == 2 && (hw / 2) % grid != 0 && grid % (hw / 2) != 0 {
            continue;
        }
        let mask = generate_mask(hw, hw, patch, r.gen_range(0.0..1.0), r.gen()).unwrap();
        let x = init::uniform::<f32, _>(&mut r, [1, cin, hw, hw], -1.0, 1.0);
        let p = init::conv::<f32, _>(&mut r, cout, cin, k, stride, k / 2, 1, true);
        let fast = sparse_conv2d(&x, &p, &mask).map_err(|e| e.to_string())?;
        let slow = oracle::sparse_conv_reference(&x, &p, &mask);
        worst = worst.max(fast.max_abs_diff(&slow).unwrap());
        stride2 += usize::from(stride == 2);
        cases += 1;
    }
    ensure(worst <= 1e-6, || format!("sparse vs dense reference {worst:.3e} > 1e-6"))?;

    let cfg = BackboneConfig {
        stage_channels: [4, 8, 8, 8],
        stage_depths: [1, 1, 1, 1],
        ffn_expansion: 1,
        input_channels: 1,
        se_reduction: 2,
        se_phase: 0,
    };
    let bb = Backbone::<f64>::random(&cfg, 21).unwrap();
    for pair in 0..50 {
        let mask = generate_mask(64, 64, 8, 0.6, pair).unwrap();
        let a = init::uniform::<f64, _>(&mut r, [1, 1, 64, 64], -1.0, 1.0);
        let mut b = a.clone();
        for y in 0..64 {
            for x in 0..64 {
                if !mask.kept(y / 8, x / 8) {
                    let noise = r.gen_range(-10.0..10.0);
                    b.set(0, 0, y, x, noise);
                }
            }
        }
        let fa = bb.forward_with(&a, &Sparse::new(&mask)).unwrap();
        let fb = bb.forward_with(&b, &Sparse::new(&mask)).unwrap();
        ensure(fa == fb, || format!("pair {pair}: masked perturbation reached kept activations"))?;
    }
    Ok(format!("100 cases ({stride2} stride 2), worst {worst:.1e}; 50 pairs exact"))
}

fn mask_statistics() -> Outcome {
    let (n, p, seeds) = (49.0, 0.6, 10_000u64);
    let total: usize = (0..seeds).map(|s| generate_mask(224, 224, 32, p, s).unwrap().masked_count()).sum();
    let mean = total as f64 / seeds as f64;
    let sigma = (n * p * (1.0 - p) / seeds as f64).sqrt();
    ensure((mean - n * p).abs() <= 3.0 * sigma, || format!("mean {mean:.4} outside 29.4 +- {:.4}", 3.0 * sigma))?;
    Ok(format!("mean masked {mean:.4} vs 29.4 +- {:.4}", 3.0 * sigma))
}

fn jitter_box(r: &mut ChaCha8Rng, base: &BBox) -> BBox {
    let j = |r: &mut ChaCha8Rng| r.gen_range(-3.0..3.0f64).round();
    let x1 = base.x1 + j(r);
    let y1 = base.y1 + j(r);
    BBox::new(x1, y1, (base.x2 + j(r)).max(x1 + 1.0), (base.y2 + j(r)).max(y1 + 1.0)).unwrap()
}

fn grid_box(r: &mut ChaCha8Rng) -> BBox {
    let x = r.gen_range(0..8) as f64 * 4.0;
    let y = r.gen_range(0..8) as f64 * 4.0;
    BBox::from_xywh(x, y, r.gen_range(3..12) as f64, r.gen_range(3..12) as f64).unwrap()
}

/// Up to 3 images; per image at most 3 GTs and 5 detections over 2 classes.
fn scenario(seed: u64) -> (Vec<Detection>, Vec<GroundTruth>) {
    let mut r = init::rng(seed);
    let mut dets = Vec::new();
    let mut gts = Vec::new();
    for image_id in 0..r.gen_range(1..4u64) {
        let img_gts: Vec<GroundTruth> = (0..r.gen_range(0..4))
            .map(|_| GroundTruth {
                image_id,
                class_id: r.gen_range(0..2),
                bbox: grid_box(&mut r),
            })
            .collect();
        for _ in 0..r.gen_range(0..6) {
            let (class_id, bbox) = match img_gts.choose(&mut r) {
                Some(g) if r.gen_bool(0.7) => (g.class_id, jitter_box(&mut r, &g.bbox)),
                _ => (r.gen_range(0..2), grid_box(&mut r)),
            };
            let score = r.gen_range(1..=10) as f64 / 10.0;
            dets.push(Detection {
                image_id,
                class_id,
                bbox,
                score,
            });
        }
        gts.extend(img_gts);
    }
    (dets, gts)
}

fn map_machinery() -> Outcome {
    for seed in 0..200 {
        let (dets, gts) = scenario(seed);
        for interpolation in [Interpolation::Point101, Interpolation::Continuous] {
            let cfg = EvalConfig {
                interpolation,
                ..EvalConfig::default()
            };
            let got = evaluate(&dets, &gts, &cfg, &[0, 1]).map_err(|e| e.to_string())?;
            let want = oracle::evaluate(&dets, &gts, &cfg, &[0, 1]);
            let classes_agree = got.per_class_ap.keys().eq(want.per_class.keys());
            ensure(classes_agree, || format!("seed {seed}: class sets differ"))?;
            for (c, aps) in &want.per_class {
                for (t, ap) in cfg.iou_thresholds.iter().zip(aps) {
                    let g = got.per_class_ap[c][&threshold_key(*t)];
                    ensure((g - ap).abs() <= 1e-12, || format!("seed {seed} class {c} thr {t}: {g} vs {ap}"))?;
                }
            }
            ensure((got.map50_95 - want.map50_95).abs() <= 1e-12, || format!("seed {seed}: mAP50:95 differs"))?;
            ensure(got.counts == want.counts, || format!("seed {seed}: operating-point counts differ"))?;
        }
    }
    let p = Interpolation::Point101;
    let fixtures = [
        (average_precision(&[true], 1, p), 1.0),
        (average_precision(&[true, false], 1, p), 1.0),
        (average_precision(&[false, true], 1, p), 0.5),
    ];
    for (i, (got, want)) in fixtures.iter().enumerate() {
        ensure(*got == Some(*want), || format!("hand fixture {i}: {got:?} != {want}"))?;
    }
    Ok("200 scenarios x 2 interpolations match oracle; fixtures 1.0/1.0/0.5 exact".into())
}

fn pretraining() -> Outcome {
    let images = synthetic_images();
    let a = spark_pretrain_toy(&images, 200, 0).map_err(|e| e.to_string())?;
    let b = spark_pretrain_toy(&images, 200, 0).map_err(|e| e.to_string())?;
    ensure(a.trace.len() == 200, || format!("trace has {} entries", a.trace.len()))?;
    let same = a.trace.iter().zip(&b.trace).all(|(x, y)| x.to_bits() == y.to_bits());
    ensure(same && a.final_loss.to_bits() == b.final_loss.to_bits(), || "traces differ between runs".into())?;
    let ratio = a.ratio();
    ensure(ratio < 0.9, || format!("final/initial {ratio:.4} >= 0.9"))?;
    Ok(format!("200 steps, ratio {ratio:.4}, deterministic"))
}

fn random_container(r: &mut ChaCha8Rng) -> WeightContainer {
    let tensors = (0..r.gen_range(0..6))
        .map(|i| {
            let shape: Vec<usize> = (0..r.gen_range(1..4)).map(|_| r.gen_range(1..5)).collect();
            let n = shape.iter().product();
            let single = r.gen_bool(0.5);
            let data = (0..n)
                .map(|_| loop {
                    let v = if single {
                        f32::from_bits(r.gen::<u32>()) as f64
                    } else {
                        f64::from_bits(r.gen::<u64>())
                    };
                    if v.is_finite() {
                        break v;
                    }
                })
                .collect();
            NamedTensor {
                name: format!("t{i}.weight"),
                shape,
                dtype: if single { DType::F32 } else { DType::F64 },
                data,
            }
        })
        .collect();
    WeightContainer {
        form: if r.gen_bool(0.5) { Form::Train } else { Form::Deploy },
        tensors,
    }
}

fn random_records(r: &mut ChaCha8Rng, scored: bool) -> Vec<Record> {
    (0..r.gen_range(0..10))
        .map(|_| Record {
            image_id: r.gen_range(0..3),
            category_id: r.gen_range(0..2),
            bbox: [
                r.gen_range(-1e3..1e3),
                r.gen_range(-1e3..1e3),
                r.gen_range(0.0..1e3),
                r.gen_range(0.0..1e3),
            ],
            score: scored.then(|| r.gen_range(0.0..=1.0)),
        })
        .collect()
}

fn bits(c: &WeightContainer) -> Vec<(String, Vec<usize>, DType, Vec<u64>)> {
    c.tensors
        .iter()
        .map(|t| (t.name.clone(), t.shape.clone(), t.dtype, t.data.iter().map(|v| v.to_bits()).collect()))
        .collect()
}

fn malformed(path: &Path) -> Result<String, String> {
    let name = path.file_name().unwrap().to_string_lossy().into_owned();
    let result = catch_unwind(AssertUnwindSafe(|| {
        if name.starts_with("weights_") {
            read_weights_file(path).map(|_| ())
        } else if name.starts_with("ann_") {
            load_annotations(path).map(|_| ())
        } else if name.starts_with("det_") {
            load_detections(path).map(|_| ())
        } else {
            load_config(path).map(|_| ())
        }
    }));
    match result {
        Err(_) => Err(format!("{name}: loader panicked")),
        Ok(Ok(())) => Err(format!("{name}: accepted malformed input")),
        Ok(Err(e)) if e.to_string().is_empty() => Err(format!("{name}: empty diagnostic")),
        Ok(Err(e)) => Ok(e.to_string()),
    }
}

fn persistence() -> Outcome {
    let mut r = init::rng(4242);
    for i in 0..200 {
        let c = random_container(&mut r);
        let back = load_weights(&save_weights(&c).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        ensure(back.form == c.form && bits(&back) == bits(&c), || format!("container {i} not bit-exact"))?;
    }
    let cfg = BackboneConfig {
        stage_channels: [8, 8, 16, 16],
        stage_depths: [1, 1, 2, 1],
        ..BackboneConfig::default()
    };
    for seed in 0..3 {
        let train = Backbone::<f32>::random(&cfg, seed).unwrap();
        for c in [train.to_container(), reparam_backbone(&train).unwrap().to_container()] {
            let back = load_weights(&save_weights(&c).unwrap()).map_err(|e| e.to_string())?;
            ensure(bits(&back) == bits(&c), || format!("backbone seed {seed} not bit-exact"))?;
        }
    }

    let images: Vec<ImageInfo> = (0..3).map(|id| ImageInfo { id, width: 64, height: 48 }).collect();
    let categories = vec![Category { id: 0, name: "tumor".into() }, Category { id: 1, name: "edema".into() }];
    for i in 0..200 {
        let ann = CocoFile {
            images: images.clone(),
            annotations: Some(random_records(&mut r, false)),
            detections: None,
            categories: categories.clone(),
        };
        let det = CocoFile {
            images: images.clone(),
            annotations: None,
            detections: Some(random_records(&mut r, true)),
            categories: categories.clone(),
        };
        let ann_back: CocoFile = serde_json::from_str(&write_annotation_file(&ann).unwrap()).map_err(|e| e.to_string())?;
        let det_back: CocoFile = serde_json::from_str(&write_detection_file(&det).unwrap()).map_err(|e| e.to_string())?;
        let record_bits = |f: &CocoFile| {
            f.annotations
                .iter()
                .chain(&f.detections)
                .flatten()
                .flat_map(|r| r.bbox.iter().chain(&r.score).map(|v| v.to_bits()).collect::<Vec<_>>())
                .collect::<Vec<_>>()
        };
        ensure(ann_back == ann && record_bits(&ann_back) == record_bits(&ann), || format!("annotations {i} differ"))?;
        ensure(det_back == det && record_bits(&det_back) == record_bits(&det), || format!("detections {i} differ"))?;
    }

    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/malformed");
    let mut files: Vec<_> = std::fs::read_dir(&dir)
        .map_err(|e| format!("{}: {e}", dir.display()))?
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    ensure(files.len() >= 10, || format!("only {} malformed fixtures", files.len()))?;
    let hook = std::panic::take_hook();
    std::panic::set_hook(Box::new(|_| {}));
    let diagnostics: Result<Vec<String>, String> = files.iter().map(|p| malformed(p)).collect();
    std::panic::set_hook(hook);
    diagnostics?;
    Ok(format!("200 containers, 400 COCO files bit-exact; {} malformed fixtures diagnosed", files.len()))
}

fn cli_golden() -> Outcome {
    let failures: Vec<String> = common::GOLDEN_CASES
        .iter()
        .filter_map(|(name, args, code)| common::check_golden(name, args, *code, false).err())
        .collect();
    ensure(failures.is_empty(), || failures.join("; "))?;
    Ok(format!("{} golden files byte-stable", common::GOLDEN_CASES.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("reparameterization equivalence", reparameterization, Some(Duration::from_secs(30))),
        ("conv+BN fusion identity", conv_bn_fusion, None),
        ("loss zoo invariants", loss_zoo, Some(Duration::from_secs(10))),
        ("analytic gradients vs finite differences", gradients, None),
        ("Focaler piecewise-linear mapping", focaler, None),
        ("sparse conv equivalence", sparse_conv, None),
        ("mask statistics", mask_statistics, None),
        ("mAP machinery", map_machinery, None),
        ("toy masked pretraining", pretraining, Some(Duration::from_secs(60))),
        ("persistence", persistence, None),
        ("CLI golden files", cli_golden, None),
    ];
    let mut failed = 0;
    for (name, run, limit) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let outcome = match (outcome, limit) {
            (Ok(_), Some(l)) if elapsed > l => Err(format!("took {:.2} s, limit {} s", elapsed.as_secs_f64(), l.as_secs())),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} ({:.2} s)", elapsed.as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why} ({:.2} s)", elapsed.as_secs_f64());
            }
        }
    }
    println!("{} passed, {failed} failed", 11 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
