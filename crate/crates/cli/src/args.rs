// SPDX-License-Identifier: Apache-2.0

//! Parsers for compound flag values.

use repdet_core::loss::BBox;

pub fn parse_box(s: &str) -> Result<BBox, String> {
    let v = parse_reals(s)?;
    let [x1, y1, x2, y2] = v[..] else {
        return Err(format!("expected x1,y1,x2,y2, got {s:?}"));
    };
    BBox::new(x1, y1, x2, y2).map_err(|e| e.to_string())
}

pub fn parse_reals(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("{t:?} is not a finite number"))
        })
        .collect()
}

pub fn parse_four(s: &str) -> Result<[usize; 4], String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|t| t.trim().parse().map_err(|_| format!("{t:?} is not a non-negative integer")))
        .collect::<Result<_, _>>()?;
    v.try_into().map_err(|_| format!("expected four comma-separated integers, got {s:?}"))
}

/// Ascending IoU thresholds parsed from one flag value.
#[derive(Debug, Clone, PartialEq)]
pub struct Thresholds(pub Vec<f64>);

/// `a:b:step`, inclusive of `b`. Values are rounded to 1e-9 so that
/// 0.5:0.95:0.05 yields exactly the ten decimal thresholds.
pub fn parse_thresholds(s: &str) -> Result<Thresholds, String> {
    let bad = || format!("expected a:b:step, got {s:?}");
    let v: Vec<f64> = s
        .split(':')
        .map(|t| t.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    let [a, b, step] = v[..] else {
        return Err(bad());
    };
    if !(0.0..=1.0).contains(&a) || !(a..=1.0).contains(&b) || !(step > 0.0) {
        return Err(format!("thresholds need 0 <= a <= b <= 1 and step > 0, got {s:?}"));
    }
    let n = ((b - a) / step + 1e-9).floor() as usize + 1;
    Ok(Thresholds((0..n).map(|i| ((a + i as f64 * step) * 1e9).round() / 1e9).collect()))
}
