// SPDX-License-Identifier: Apache-2.0

//! Slow reference implementations used only by tests.
//!
//! Each function here is written from the defining formula and shares no
//! code with the production path it checks.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::eval::{Counts, Detection, EvalConfig, GroundTruth, Interpolation};
use crate::loss::{LossConfig, LossVariant};
use crate::spark::MaskGrid;
use crate::tensor::{conv2d, ConvParams, Scalar, Tensor};

fn g(x: f64) -> f64 {
    x.max(1e-9)
}

/// Box losses from raw corner coordinates.
pub fn loss(p: [f64; 4], t: [f64; 4], cfg: &LossConfig, wiou_mean: Option<f64>) -> f64 {
    loss_as(cfg.variant, p, t, cfg, wiou_mean)
}

fn loss_as(v: LossVariant, p: [f64; 4], t: [f64; 4], cfg: &LossConfig, wiou_mean: Option<f64>) -> f64 {
    let [px1, py1, px2, py2] = p;
    let [tx1, ty1, tx2, ty2] = t;
    let (wp, hp, wt, ht) = (px2 - px1, py2 - py1, tx2 - tx1, ty2 - ty1);
    let inter = (px2.min(tx2) - px1.max(tx1)).max(0.0) * (py2.min(ty2) - py1.max(ty1)).max(0.0);
    let union = wp * hp + wt * ht - inter;
    let iou = if union > 0.0 { inter / union } else { 0.0 };
    let cw = px2.max(tx2) - px1.min(tx1);
    let ch = py2.max(ty2) - py1.min(ty1);
    let c2 = cw * cw + ch * ch;
    let (cxp, cyp) = ((px1 + px2) / 2.0, (py1 + py2) / 2.0);
    let (cxt, cyt) = ((tx1 + tx2) / 2.0, (ty1 + ty2) / 2.0);
    let rho2 = (cxp - cxt).powi(2) + (cyp - cyt).powi(2);
    let diou = iou - rho2 / g(c2);
    match v {
        LossVariant::Iou => 1.0 - iou,
        LossVariant::Giou => {
            let area_c = cw * ch;
            let giou = if area_c > 0.0 { iou - (area_c - union) / area_c } else { iou };
            1.0 - giou
        }
        LossVariant::Diou => 1.0 - diou,
        LossVariant::Ciou => {
            let v = 4.0 / (PI * PI) * ((wt / g(ht)).atan() - (wp / g(hp)).atan()).powi(2);
            let a = if (1.0 - iou) + v > 0.0 { v / ((1.0 - iou) + v) } else { 0.0 };
            1.0 - (diou - a * v)
        }
        LossVariant::Nwd => {
            let w2 = rho2 + ((wp - wt) / 2.0).powi(2) + ((hp - ht) / 2.0).powi(2);
            1.0 - (-(w2.sqrt()) / cfg.nwd_c).exp()
        }
        LossVariant::AlphaIou => 1.0 - iou.powf(cfg.alpha_pow),
        LossVariant::Eiou => 1.0 - iou + rho2 / g(c2) + (wp - wt).powi(2) / g(cw * cw) + (hp - ht).powi(2) / g(ch * ch),
        LossVariant::Siou => {
            let dx = cxt - cxp;
            let dy = cyt - cyp;
            let sigma = rho2.sqrt();
            let lambda = if sigma == 0.0 {
                0.0
            } else {
                1.0 - 2.0 * ((dy.abs().min(sigma) / sigma).asin() - PI / 4.0).sin().powi(2)
            };
            let delta: f64 = [(dx / g(cw)).powi(2), (dy / g(ch)).powi(2)]
                .iter()
                .map(|r| 1.0 - (-(2.0 - lambda) * r).exp())
                .sum();
            let omega: f64 = [(wp - wt).abs() / g(wp.max(wt)), (hp - ht).abs() / g(hp.max(ht))]
                .iter()
                .map(|w| (1.0 - (-w).exp()).powf(cfg.siou_theta))
                .sum();
            1.0 - iou + (delta + omega) / 2.0
        }
        LossVariant::Wiou => {
            let liou = 1.0 - iou;
            let beta = match wiou_mean {
                Some(m) => liou / g(m),
                None => 1.0,
            };
            let r = beta / (cfg.wiou_delta * cfg.wiou_alpha.powf(beta - cfg.wiou_delta));
            r * (rho2 / g(cw * cw + ch * ch)).exp() * liou
        }
        LossVariant::MpdIou => {
            let norm = cfg.image_w.unwrap().powi(2) + cfg.image_h.unwrap().powi(2);
            let d1 = (px1 - tx1).powi(2) + (py1 - ty1).powi(2);
            let d2 = (px2 - tx2).powi(2) + (py2 - ty2).powi(2);
            1.0 - iou + d1 / norm + d2 / norm
        }
        LossVariant::ShapeIou => {
            let s = cfg.shape_scale;
            let (ww, hh) = if s == 0.0 {
                (1.0, 1.0)
            } else {
                let sum = wt.powf(s) + ht.powf(s);
                (2.0 * wt.powf(s) / g(sum), 2.0 * ht.powf(s) / g(sum))
            };
            let dist = hh * (cxt - cxp).powi(2) / g(c2) + ww * (cyt - cyp).powi(2) / g(c2);
            let om_w = hh * (wp - wt).abs() / g(wp.max(wt));
            let om_h = ww * (hp - ht).abs() / g(hp.max(ht));
            let shape = (1.0 - (-om_w).exp()).powi(4) + (1.0 - (-om_h).exp()).powi(4);
            1.0 - iou + dist + 0.5 * shape
        }
        LossVariant::PowerfulIou => {
            let pp = (((px1 - tx1).abs() + (px2 - tx2).abs()) / g(wt) + ((py1 - ty1).abs() + (py2 - ty2).abs()) / g(ht)) / 4.0;
            let l1 = (1.0 - iou) + (1.0 - (-pp * pp).exp());
            if cfg.piou_v2 {
                let q = (-pp).exp();
                let lq = cfg.piou_lambda * q;
                3.0 * lq * (-(lq * lq)).exp() * l1
            } else {
                l1
            }
        }
        LossVariant::FocalerIou => {
            let mapped = ((iou - cfg.focaler_d) / (cfg.focaler_u - cfg.focaler_d)).clamp(0.0, 1.0);
            loss_as(cfg.focaler_base, p, t, cfg, wiou_mean) + iou - mapped
        }
    }
}

fn iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let inter = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0) * (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

/// Greedy matching characterised as the lexicographically best valid
/// assignment: detections in score order (input order on ties), each
/// preferring higher IoU then lower ground-truth index, unmatched last.
/// Found by enumerating every partial injective assignment.
pub fn brute_match(dets: &[([f64; 4], f64)], gts: &[[f64; 4]], thr: f64) -> Vec<bool> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].1.partial_cmp(&dets[a].1).unwrap().then(a.cmp(&b)));
    // rank[d][gi]: position of gt gi in det d's preference list, None if ineligible
    let rank: Vec<Vec<Option<usize>>> = dets
        .iter()
        .map(|(b, _)| {
            let mut pref: Vec<usize> = (0..gts.len()).filter(|&j| iou(*b, gts[j]) >= thr).collect();
            pref.sort_by(|&x, &y| iou(*b, gts[y]).partial_cmp(&iou(*b, gts[x])).unwrap().then(x.cmp(&y)));
            (0..gts.len()).map(|j| pref.iter().position(|&q| q == j)).collect()
        })
        .collect();
    let mut best: Option<(Vec<usize>, Vec<Option<usize>>)> = None;
    let mut current = vec![None; dets.len()];
    let mut used = vec![false; gts.len()];
    fn rec(
        k: usize,
        order: &[usize],
        rank: &[Vec<Option<usize>>],
        current: &mut Vec<Option<usize>>,
        used: &mut Vec<bool>,
        best: &mut Option<(Vec<usize>, Vec<Option<usize>>)>,
        n_gt: usize,
    ) {
        if k == order.len() {
            let key: Vec<usize> = order
                .iter()
                .map(|&d| current[d].map_or(usize::MAX, |j| rank[d][j].unwrap()))
                .collect();
            if best.as_ref().is_none_or(|(bk, _)| key < *bk) {
                *best = Some((key, current.clone()));
            }
            return;
        }
        let d = order[k];
        rec(k + 1, order, rank, current, used, best, n_gt);
        for j in 0..n_gt {
            if !used[j] && rank[d][j].is_some() {
                used[j] = true;
                current[d] = Some(j);
                rec(k + 1, order, rank, current, used, best, n_gt);
                current[d] = None;
                used[j] = false;
            }
        }
    }
    rec(0, &order, &rank, &mut current, &mut used, &mut best, gts.len());
    best.map(|(_, a)| a.iter().map(Option::is_some).collect()).unwrap_or_default()
}

/// AP from its definition: interpolated precision at recall `r` is the
/// maximum precision over all ranks whose recall is at least `r`.
pub fn ap_definition(flags: &[bool], n_gt: usize, interp: Interpolation) -> Option<f64> {
    if n_gt == 0 {
        return if flags.is_empty() { None } else { Some(0.0) };
    }
    let pr: Vec<(f64, f64)> = flags
        .iter()
        .enumerate()
        .scan(0usize, |tp, (k, &f)| {
            *tp += f as usize;
            Some((*tp as f64 / n_gt as f64, *tp as f64 / (k + 1) as f64))
        })
        .collect();
    let p_at = |r: f64| pr.iter().filter(|(rec, _)| *rec >= r - 1e-12).map(|(_, p)| *p).fold(0.0, f64::max);
    Some(match interp {
        Interpolation::Point101 => (0..=100).map(|i| p_at(i as f64 / 100.0)).sum::<f64>() / 101.0,
        Interpolation::Continuous => {
            let mut prev = 0.0;
            let mut area = 0.0;
            for (k, (r, _)) in pr.iter().enumerate() {
                let best = pr[k..].iter().map(|(_, p)| *p).fold(0.0, f64::max);
                area += (r - prev) * best;
                prev = *r;
            }
            area
        }
    })
}

/// Reference metrics built on [`brute_match`] and [`ap_definition`].
#[derive(Debug, Clone, PartialEq)]
pub struct OracleMetrics {
    pub per_class: BTreeMap<u32, Vec<f64>>,
    pub map_per_threshold: Vec<f64>,
    pub map50_95: f64,
    pub counts: Counts,
}

pub fn evaluate(dets: &[Detection], gts: &[GroundTruth], cfg: &EvalConfig, classes: &[u32]) -> OracleMetrics {
    let flags_for = |c: u32, thr: f64, min_score: f64| -> (Vec<bool>, usize) {
        let mut images: Vec<u64> = dets.iter().map(|d| d.image_id).chain(gts.iter().map(|g| g.image_id)).collect();
        images.sort_unstable();
        images.dedup();
        let mut ranked: Vec<(f64, usize, bool)> = Vec::new();
        let mut n_gt = 0;
        for img in images {
            let idx: Vec<usize> = (0..dets.len())
                .filter(|&i| dets[i].image_id == img && dets[i].class_id == c && dets[i].score >= min_score)
                .collect();
            let g: Vec<[f64; 4]> = gts
                .iter()
                .filter(|t| t.image_id == img && t.class_id == c)
                .map(|t| t.bbox.to_array())
                .collect();
            n_gt += g.len();
            let d: Vec<([f64; 4], f64)> = idx.iter().map(|&i| (dets[i].bbox.to_array(), dets[i].score)).collect();
            for (k, tp) in brute_match(&d, &g, thr).into_iter().enumerate() {
                ranked.push((dets[idx[k]].score, idx[k], tp));
            }
        }
        ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        (ranked.into_iter().map(|r| r.2).collect(), n_gt)
    };
    let mut classes = classes.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut per_class = BTreeMap::new();
    for &c in &classes {
        let aps: Vec<f64> = cfg
            .iou_thresholds
            .iter()
            .filter_map(|&t| {
                let (f, n) = flags_for(c, t, f64::NEG_INFINITY);
                ap_definition(&f, n, cfg.interpolation)
            })
            .collect();
        if !aps.is_empty() {
            per_class.insert(c, aps);
        }
    }
    let map_per_threshold: Vec<f64> = (0..cfg.iou_thresholds.len())
        .map(|ti| {
            if per_class.is_empty() {
                0.0
            } else {
                per_class.values().map(|a| a[ti]).sum::<f64>() / per_class.len() as f64
            }
        })
        .collect();
    let map50_95 = map_per_threshold.iter().sum::<f64>() / map_per_threshold.len() as f64;
    let mut counts = Counts::default();
    for &c in &classes {
        let (f, n) = flags_for(c, cfg.operating_iou, cfg.score_threshold);
        let tp = f.iter().filter(|x| **x).count();
        counts.tp += tp;
        counts.fp += f.len() - tp;
        counts.fn_ += n - tp;
    }
    OracleMetrics {
        per_class,
        map_per_threshold,
        map50_95,
        counts,
    }
}

/// NMS by its fixed-point definition: a box survives iff no surviving box
/// ranked above it overlaps it by more than `thr`. Returns input indices in
/// rank order.
pub fn nms_reference(boxes: &[([f64; 4], f64)], thr: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| boxes[b].1.partial_cmp(&boxes[a].1).unwrap().then(a.cmp(&b)));
    let mut alive: Vec<usize> = Vec::new();
    for &i in &order {
        if alive.iter().all(|&k| iou(boxes[k].0, boxes[i].0) <= thr) {
            alive.push(i);
        }
    }
    alive
}

/// Keep flag of feature position `(y, x)` on an `h x w` map: true iff the
/// image region it covers touches any kept patch.
pub fn feature_kept(mask: &MaskGrid, h: usize, w: usize, y: usize, x: usize) -> bool {
    let (ih, iw) = mask.image_hw();
    let p = mask.patch_size;
    let (sy, sx) = (ih as f64 / h as f64, iw as f64 / w as f64);
    let rows = ((y as f64 * sy) as usize, (((y + 1) as f64 * sy).ceil() as usize).min(ih));
    let cols = ((x as f64 * sx) as usize, (((x + 1) as f64 * sx).ceil() as usize).min(iw));
    (rows.0..rows.1).any(|py| (cols.0..cols.1).any(|px| mask.kept(py / p, px / p)))
}

/// Zero-fill masked inputs, dense convolution, zero masked outputs.
pub fn sparse_conv_reference<T: Scalar>(input: &Tensor<T>, p: &ConvParams<T>, mask: &MaskGrid) -> Tensor<T> {
    let [_, _, h, w] = input.shape();
    let mut filled = input.clone();
    let shape = filled.shape();
    for n in 0..shape[0] {
        for c in 0..shape[1] {
            for y in 0..h {
                for x in 0..w {
                    if !feature_kept(mask, h, w, y, x) {
                        filled.set(n, c, y, x, T::zero());
                    }
                }
            }
        }
    }
    let mut out = conv2d(&filled, p).expect("reference conv");
    let [on, oc, oh, ow] = out.shape();
    for n in 0..on {
        for c in 0..oc {
            for y in 0..oh {
                for x in 0..ow {
                    if !feature_kept(mask, oh, ow, y, x) {
                        out.set(n, c, y, x, T::zero());
                    }
                }
            }
        }
    }
    out
}
