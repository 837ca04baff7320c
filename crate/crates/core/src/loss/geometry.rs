// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in corner form, pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    /// Builds a box, rejecting negative extents. Zero-area boxes are legal.
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let b = Self { x1, y1, x2, y2 };
        b.validate()?;
        Ok(b)
    }

    /// Converts the on-disk `[x, y, w, h]` convention.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        Self::new(x, y, x + w, y + h)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x1, self.y1, self.x2, self.y2]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.x2 < self.x1 || self.y2 < self.y1 {
            return Err(Error::InvalidBox {
                x1: self.x1,
                y1: self.y1,
                x2: self.x2,
                y2: self.y2,
            });
        }
        Ok(())
    }

    #[inline]
    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    #[inline]
    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    #[inline]
    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    #[inline]
    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            x1: a[0],
            y1: a[1],
            x2: a[2],
            y2: a[3],
        }
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self {
            x1: self.x1 + dx,
            y1: self.y1 + dy,
            x2: self.x2 + dx,
            y2: self.y2 + dy,
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            x1: self.x1 * s,
            y1: self.y1 * s,
            x2: self.x2 * s,
            y2: self.y2 * s,
        }
    }

    pub fn contains(&self, other: &BBox) -> bool {
        self.x1 <= other.x1 && self.y1 <= other.y1 && self.x2 >= other.x2 && self.y2 >= other.y2
    }
}

/// Plain IoU of two boxes; 0 when the union is empty.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

/// Every derived quantity the regression losses consume.
///
/// `dx`/`dy` are the signed center offsets `gt - pred`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxGeometry {
    pub iou: f64,
    pub inter_area: f64,
    pub union_area: f64,
    pub enclose: BBox,
    pub enclose_diag_sq: f64,
    pub center_dist_sq: f64,
    pub dx: f64,
    pub dy: f64,
    pub w_p: f64,
    pub h_p: f64,
    pub w_g: f64,
    pub h_g: f64,
    pub cw: f64,
    pub ch: f64,
}

impl BoxGeometry {
    pub fn enclose_area(&self) -> f64 {
        self.cw * self.ch
    }
}

pub fn box_geometry(pred: &BBox, gt: &BBox) -> Result<BoxGeometry> {
    pred.validate()?;
    gt.validate()?;
    let iw = (pred.x2.min(gt.x2) - pred.x1.max(gt.x1)).max(0.0);
    let ih = (pred.y2.min(gt.y2) - pred.y1.max(gt.y1)).max(0.0);
    let inter_area = iw * ih;
    let union_area = pred.area() + gt.area() - inter_area;
    let iou = if union_area > 0.0 {
        inter_area / union_area
    } else {
        0.0
    };
    let enclose = BBox {
        x1: pred.x1.min(gt.x1),
        y1: pred.y1.min(gt.y1),
        x2: pred.x2.max(gt.x2),
        y2: pred.y2.max(gt.y2),
    };
    let (cw, ch) = (enclose.width(), enclose.height());
    let (pcx, pcy) = pred.center();
    let (gcx, gcy) = gt.center();
    let (dx, dy) = (gcx - pcx, gcy - pcy);
    Ok(BoxGeometry {
        iou,
        inter_area,
        union_area,
        enclose,
        enclose_diag_sq: cw * cw + ch * ch,
        center_dist_sq: dx * dx + dy * dy,
        dx,
        dy,
        w_p: pred.width(),
        h_p: pred.height(),
        w_g: gt.width(),
        h_g: gt.height(),
        cw,
        ch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn partial_overlap() {
        let g = box_geometry(&b(0.0, 0.0, 2.0, 2.0), &b(1.0, 1.0, 3.0, 3.0)).unwrap();
        assert_eq!(g.inter_area, 1.0);
        assert_eq!(g.union_area, 7.0);
        assert_eq!(g.iou, 1.0 / 7.0);
        assert_eq!(g.enclose, b(0.0, 0.0, 3.0, 3.0));
        assert_eq!(g.center_dist_sq, 2.0);
    }

    #[test]
    fn identical_boxes() {
        let p = b(1.0, 2.0, 4.0, 7.0);
        let g = box_geometry(&p, &p).unwrap();
        assert_eq!(g.iou, 1.0);
        assert_eq!(g.center_dist_sq, 0.0);
        assert_eq!(g.enclose, p);
    }

    #[test]
    fn disjoint_boxes() {
        let g = box_geometry(&b(0.0, 0.0, 1.0, 1.0), &b(2.0, 2.0, 3.0, 3.0)).unwrap();
        assert_eq!(g.iou, 0.0);
        assert_eq!(g.enclose, b(0.0, 0.0, 3.0, 3.0));
        assert_eq!(g.enclose_diag_sq, 18.0);
    }

    #[test]
    fn zero_area_and_invalid() {
        let z = b(1.0, 1.0, 1.0, 1.0);
        let g = box_geometry(&z, &z).unwrap();
        assert_eq!(g.union_area, 0.0);
        assert_eq!(g.iou, 0.0);
        assert!(matches!(BBox::new(2.0, 0.0, 1.0, 1.0), Err(Error::InvalidBox { .. })));
        let bad = BBox { x1: 0.0, y1: 3.0, x2: 1.0, y2: 1.0 };
        assert!(box_geometry(&bad, &z).is_err());
    }

    #[test]
    fn xywh_convention() {
        assert_eq!(BBox::from_xywh(10.0, 20.0, 30.0, 40.0).unwrap(), b(10.0, 20.0, 40.0, 60.0));
    }
}
