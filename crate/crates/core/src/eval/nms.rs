// SPDX-License-Identifier: Apache-2.0

use super::matching::score_order;
use super::Detection;
use crate::loss::iou;

/// Greedy non-maximum suppression: repeatedly keep the best remaining box
/// and drop every box overlapping it with IoU above `iou_thr`. The result
/// is sorted by descending score.
pub fn nms(dets: &[Detection], iou_thr: f64) -> Vec<Detection> {
    let order = score_order(dets);
    let mut suppressed = vec![false; dets.len()];
    let mut keep = Vec::new();
    for (pos, &i) in order.iter().enumerate() {
        if suppressed[i] {
            continue;
        }
        keep.push(dets[i].clone());
        for &j in &order[pos + 1..] {
            if !suppressed[j] && iou(&dets[i].bbox, &dets[j].bbox) > iou_thr {
                suppressed[j] = true;
            }
        }
    }
    keep
}
