// SPDX-License-Identifier: Apache-2.0

use super::Interpolation;

/// Average precision of a ranked list of TP/FP flags.
///
/// The precision curve is replaced by its monotone envelope (running max
/// from the tail). `Point101` averages the envelope at recall
/// 0.00, 0.01, ..., 1.00, taking the first rank whose recall reaches each
/// sample (0 where none does). `Continuous` integrates the envelope over
/// recall.
///
/// Returns `None` when there is nothing to score (no ground truth and no
/// detections); with detections but no ground truth the AP is 0.
pub fn average_precision(flags: &[bool], n_gt: usize, interp: Interpolation) -> Option<f64> {
    if n_gt == 0 {
        return if flags.is_empty() { None } else { Some(0.0) };
    }
    let mut tp = 0usize;
    let mut recall = Vec::with_capacity(flags.len());
    let mut precision = Vec::with_capacity(flags.len());
    for (k, &f) in flags.iter().enumerate() {
        tp += f as usize;
        recall.push(tp as f64 / n_gt as f64);
        precision.push(tp as f64 / (k + 1) as f64);
    }
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let ap = match interp {
        Interpolation::Point101 => {
            let mut sum = 0.0;
            let mut k = 0;
            for r in 0..=100 {
                let target = r as f64 / 100.0;
                while k < recall.len() && recall[k] < target - 1e-12 {
                    k += 1;
                }
                if k < recall.len() {
                    sum += precision[k];
                }
            }
            sum / 101.0
        }
        Interpolation::Continuous => {
            let mut prev = 0.0;
            let mut area = 0.0;
            for (r, p) in recall.iter().zip(&precision) {
                area += (r - prev) * p;
                prev = *r;
            }
            area
        }
    };
    Some(ap)
}
