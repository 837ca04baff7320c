// SPDX-License-Identifier: Apache-2.0

//! Detection metrics: greedy score-ordered matching, interpolated average
//! precision, mAP over IoU thresholds, operating-point precision/recall,
//! and greedy NMS.

mod ap;
mod matching;
mod nms;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use ap::average_precision;
pub use matching::{match_detections, match_partition};
pub use nms::nms;

use crate::error::{Error, Result};
pub use crate::io::Interpolation;
use crate::loss::BBox;

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub image_id: u64,
    pub class_id: u32,
    pub bbox: BBox,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub image_id: u64,
    pub class_id: u32,
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    /// Ascending IoU thresholds; mAP50:95 averages over all of them.
    pub iou_thresholds: Vec<f64>,
    pub score_threshold: f64,
    pub operating_iou: f64,
    pub interpolation: Interpolation,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_thresholds: coco_thresholds(),
            score_threshold: 0.25,
            operating_iou: 0.5,
            interpolation: Interpolation::Point101,
        }
    }
}

/// 0.50, 0.55, ..., 0.95.
pub fn coco_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdMap {
    pub iou_threshold: f64,
    pub map: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// class -> IoU threshold (formatted "0.50") -> AP. Classes with neither
    /// ground truth nor detections are absent.
    pub per_class_ap: BTreeMap<u32, BTreeMap<String, f64>>,
    pub per_threshold: Vec<ThresholdMap>,
    pub map50: f64,
    pub map50_95: f64,
    pub precision: f64,
    pub recall: f64,
    pub counts: Counts,
}

pub fn threshold_key(t: f64) -> String {
    format!("{t:.2}")
}

impl EvalResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("EvalResult serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(e.into()))
    }

    /// Aligned table: Precision, Recall, mAP50, mAP50:95.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:>9}  {:>9}  {:>9}  {:>9}", "Precision", "Recall", "mAP50", "mAP50:95");
        let _ = writeln!(
            s,
            "{:>9.3}  {:>9.3}  {:>9.3}  {:>9.3}",
            self.precision, self.recall, self.map50, self.map50_95
        );
        s
    }
}

/// Ranked detections and ground truth of one class on one image.
type ImageGroup<'a> = (Vec<(usize, &'a Detection)>, Vec<&'a GroundTruth>);

/// Flags of every detection of one class across images, with the total
/// number of ground-truth boxes of that class.
fn ranked_flags(dets: &[(usize, &Detection)], gts: &[&GroundTruth], thr: f64) -> Result<Vec<bool>> {
    let mut per_image: BTreeMap<u64, ImageGroup<'_>> = BTreeMap::new();
    for &(i, d) in dets {
        per_image.entry(d.image_id).or_default().0.push((i, d));
    }
    for &g in gts {
        per_image.entry(g.image_id).or_default().1.push(g);
    }
    let mut scored: Vec<(f64, usize, bool)> = Vec::with_capacity(dets.len());
    for (img_dets, img_gts) in per_image.values() {
        let ds: Vec<Detection> = img_dets.iter().map(|(_, d)| (*d).clone()).collect();
        let gs: Vec<GroundTruth> = img_gts.iter().map(|g| (*g).clone()).collect();
        let flags = match_detections(&ds, &gs, thr)?;
        for ((i, d), tp) in img_dets.iter().zip(flags) {
            scored.push((d.score, *i, tp));
        }
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    Ok(scored.into_iter().map(|(_, _, tp)| tp).collect())
}

pub fn evaluate(dets: &[Detection], gts: &[GroundTruth], cfg: &EvalConfig, classes: &[u32]) -> Result<EvalResult> {
    if classes.is_empty() {
        return Err(Error::invalid("evaluate", "empty class list"));
    }
    if cfg.iou_thresholds.is_empty() || cfg.iou_thresholds.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("evaluate", "IoU thresholds must be non-empty and ascending"));
    }
    for d in dets {
        d.bbox.validate()?;
        if !(0.0..=1.0).contains(&d.score) {
            return Err(Error::invalid("evaluate", format!("score {} outside [0, 1]", d.score)));
        }
    }
    let classes: BTreeSet<u32> = classes.iter().copied().collect();

    let mut per_class_ap = BTreeMap::new();
    let mut per_threshold = Vec::with_capacity(cfg.iou_thresholds.len());
    let mut class_aps: Vec<Vec<f64>> = vec![Vec::new(); cfg.iou_thresholds.len()];
    for &c in &classes {
        let cd: Vec<(usize, &Detection)> = dets.iter().enumerate().filter(|(_, d)| d.class_id == c).collect();
        let cg: Vec<&GroundTruth> = gts.iter().filter(|g| g.class_id == c).collect();
        let mut by_thr = BTreeMap::new();
        for (ti, &thr) in cfg.iou_thresholds.iter().enumerate() {
            let flags = ranked_flags(&cd, &cg, thr)?;
            if let Some(ap) = average_precision(&flags, cg.len(), cfg.interpolation) {
                by_thr.insert(threshold_key(thr), ap);
                class_aps[ti].push(ap);
            }
        }
        if !by_thr.is_empty() {
            per_class_ap.insert(c, by_thr);
        }
    }
    for (ti, &thr) in cfg.iou_thresholds.iter().enumerate() {
        let aps = &class_aps[ti];
        let map = if aps.is_empty() {
            0.0
        } else {
            aps.iter().sum::<f64>() / aps.len() as f64
        };
        per_threshold.push(ThresholdMap { iou_threshold: thr, map });
    }
    let map50 = match per_threshold.iter().find(|t| (t.iou_threshold - 0.5).abs() < 1e-12) {
        Some(t) => t.map,
        None => {
            let sub = EvalConfig {
                iou_thresholds: vec![0.5],
                ..cfg.clone()
            };
            evaluate(dets, gts, &sub, &classes.iter().copied().collect::<Vec<_>>())?.map50
        }
    };
    let map50_95 = per_threshold.iter().map(|t| t.map).sum::<f64>() / per_threshold.len() as f64;

    let counts = operating_point(dets, gts, cfg, &classes)?;
    let precision = ratio(counts.tp, counts.tp + counts.fp);
    let recall = ratio(counts.tp, counts.tp + counts.fn_);

    Ok(EvalResult {
        per_class_ap,
        per_threshold,
        map50,
        map50_95,
        precision,
        recall,
        counts,
    })
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn operating_point(
    dets: &[Detection],
    gts: &[GroundTruth],
    cfg: &EvalConfig,
    classes: &BTreeSet<u32>,
) -> Result<Counts> {
    let mut counts = Counts::default();
    for &c in classes {
        let cd: Vec<(usize, &Detection)> = dets
            .iter()
            .enumerate()
            .filter(|(_, d)| d.class_id == c && d.score >= cfg.score_threshold)
            .collect();
        let cg: Vec<&GroundTruth> = gts.iter().filter(|g| g.class_id == c).collect();
        let flags = ranked_flags(&cd, &cg, cfg.operating_iou)?;
        let tp = flags.iter().filter(|&&f| f).count();
        counts.tp += tp;
        counts.fp += flags.len() - tp;
        counts.fn_ += cg.len() - tp;
    }
    Ok(counts)
}
