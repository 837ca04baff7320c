// SPDX-License-Identifier: Apache-2.0

use super::{Detection, GroundTruth};
use crate::error::{Error, Result};
use crate::loss::iou;

/// Indices of `dets` by descending score; equal scores keep input order.
pub(crate) fn score_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
    order
}

/// Greedy assignment for one (image, class) partition. Entry `i` is the
/// ground-truth index matched by `dets[i]`, if any.
///
/// Detections are visited by descending score; each takes the unmatched
/// ground truth with the highest IoU at or above `iou_thr` (lowest index on
/// IoU ties).
pub fn match_partition(dets: &[Detection], gts: &[GroundTruth], iou_thr: f64) -> Result<Vec<Option<usize>>> {
    let key = dets
        .iter()
        .map(|d| (d.image_id, d.class_id))
        .chain(gts.iter().map(|g| (g.image_id, g.class_id)))
        .next();
    if let Some(key) = key {
        let mixed = dets.iter().any(|d| (d.image_id, d.class_id) != key)
            || gts.iter().any(|g| (g.image_id, g.class_id) != key);
        if mixed {
            return Err(Error::invalid(
                "match_detections",
                "records span several images or classes; partition first",
            ));
        }
    }
    let mut taken = vec![false; gts.len()];
    let mut assigned = vec![None; dets.len()];
    for i in score_order(dets) {
        let mut best: Option<(usize, f64)> = None;
        for (j, g) in gts.iter().enumerate() {
            if taken[j] {
                continue;
            }
            let v = iou(&dets[i].bbox, &g.bbox);
            if v >= iou_thr && best.is_none_or(|(_, b)| v > b) {
                best = Some((j, v));
            }
        }
        if let Some((j, _)) = best {
            taken[j] = true;
            assigned[i] = Some(j);
        }
    }
    Ok(assigned)
}

/// True-positive flag for every detection, in input order.
pub fn match_detections(dets: &[Detection], gts: &[GroundTruth], iou_thr: f64) -> Result<Vec<bool>> {
    Ok(match_partition(dets, gts, iou_thr)?
        .into_iter()
        .map(|m| m.is_some())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::BBox;

    fn gt(b: [f64; 4]) -> GroundTruth {
        GroundTruth { image_id: 0, class_id: 0, bbox: BBox::from_array(b) }
    }

    fn det(b: [f64; 4], score: f64) -> Detection {
        Detection { image_id: 0, class_id: 0, bbox: BBox::from_array(b), score }
    }

    #[test]
    fn single_match() {
        // IoU 0.6: [0,0,10,10] vs [0,0,6,10] -> 60/100
        let flags = match_detections(&[det([0.0, 0.0, 6.0, 10.0], 0.9)], &[gt([0.0, 0.0, 10.0, 10.0])], 0.5).unwrap();
        assert_eq!(flags, vec![true]);
    }

    #[test]
    fn second_detection_loses_taken_gt() {
        let g = gt([0.0, 0.0, 10.0, 10.0]);
        let d1 = det([0.0, 0.0, 6.0, 10.0], 0.9); // IoU 0.60
        let d2 = det([0.0, 0.0, 5.5, 10.0], 0.8); // IoU 0.55
        assert_eq!(match_detections(&[d1.clone(), d2.clone()], std::slice::from_ref(&g), 0.5).unwrap(), vec![true, false]);
        // Input order does not matter, score does.
        assert_eq!(match_detections(&[d2, d1], &[g], 0.5).unwrap(), vec![false, true]);
    }

    #[test]
    fn no_ground_truth() {
        let flags = match_detections(&[det([0.0, 0.0, 1.0, 1.0], 0.3), det([2.0, 2.0, 3.0, 3.0], 0.2)], &[], 0.5).unwrap();
        assert_eq!(flags, vec![false, false]);
    }

    #[test]
    fn mixed_partition_rejected() {
        let mut d = det([0.0, 0.0, 1.0, 1.0], 0.3);
        d.image_id = 7;
        assert!(match_detections(&[d], &[gt([0.0, 0.0, 1.0, 1.0])], 0.5).is_err());
    }
}
