// SPDX-License-Identifier: Apache-2.0

//! Gradients of the regression losses with respect to the predicted box
//! corners `(x1, y1, x2, y2)`.

use super::{
    box_geometry, ciou_v_alpha, loss_value, BBox, BoxGeometry, LossConfig, LossVariant,
    WiouState, CIOU_V_SCALE,
};
use crate::error::{Error, Result};

/// A gradient 4-vector. `flagged` marks a one-sided subgradient (analytic:
/// an edge tie or touching boundary; finite difference: a clamped step).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gradient {
    pub grad: [f64; 4],
    pub flagged: bool,
}

type Vec4 = [f64; 4];

#[inline]
fn axpy(a: f64, x: &Vec4, y: &Vec4) -> Vec4 {
    [a * x[0] + y[0], a * x[1] + y[1], a * x[2] + y[2], a * x[3] + y[3]]
}

#[inline]
fn scaled(a: f64, x: &Vec4) -> Vec4 {
    [a * x[0], a * x[1], a * x[2], a * x[3]]
}

/// Derivatives of the overlap and enclosing extents along one axis.
/// `lo`/`hi` are the coordinate indices (0/2 for x, 1/3 for y).
struct AxisTerms {
    overlap: f64,
    d_overlap: Vec4,
    span: f64,
    d_span: Vec4,
}

fn axis_terms(
    p_lo: f64,
    p_hi: f64,
    g_lo: f64,
    g_hi: f64,
    lo: usize,
    hi: usize,
    flag: &mut bool,
) -> AxisTerms {
    let mut d_overlap = [0.0; 4];
    let mut d_span = [0.0; 4];

    // Ties between a pred edge and a gt edge (and a touching, zero-width
    // overlap) take the midpoint of the two one-sided derivatives.
    let side = |a: f64, b: f64| -> f64 {
        if a < b {
            1.0
        } else if a == b {
            0.5
        } else {
            0.0
        }
    };

    // overlap = max(0, min(p_hi, g_hi) - max(p_lo, g_lo))
    let overlap = p_hi.min(g_hi) - p_lo.max(g_lo);
    if p_hi == g_hi || p_lo == g_lo || overlap == 0.0 {
        *flag = true;
    }
    let active = side(0.0, overlap);
    d_overlap[hi] = active * side(p_hi, g_hi);
    d_overlap[lo] = -active * side(g_lo, p_lo);

    // span = max(p_hi, g_hi) - min(p_lo, g_lo)
    let span = p_hi.max(g_hi) - p_lo.min(g_lo);
    d_span[hi] = side(g_hi, p_hi);
    d_span[lo] = -side(p_lo, g_lo);

    AxisTerms {
        overlap: overlap.max(0.0),
        d_overlap,
        span,
        d_span,
    }
}

struct IouParts {
    iou: f64,
    d_iou: Vec4,
    union: f64,
    d_union: Vec4,
    x: AxisTerms,
    y: AxisTerms,
}

fn iou_parts(pred: &BBox, gt: &BBox, flag: &mut bool) -> Result<IouParts> {
    let x = axis_terms(pred.x1, pred.x2, gt.x1, gt.x2, 0, 2, flag);
    let y = axis_terms(pred.y1, pred.y2, gt.y1, gt.y2, 1, 3, flag);
    let (wp, hp) = (pred.width(), pred.height());
    let inter = x.overlap * y.overlap;
    let d_inter = axpy(y.overlap, &x.d_overlap, &scaled(x.overlap, &y.d_overlap));
    let d_area_p = [-hp, -wp, hp, wp];
    let union = pred.area() + gt.area() - inter;
    if !(union > 0.0) {
        return Err(Error::invalid("loss_grad_analytic", "boxes must have positive area"));
    }
    let d_union = axpy(-1.0, &d_inter, &d_area_p);
    let iou = inter / union;
    let d_iou = scaled(1.0 / union, &axpy(-iou, &d_union, &d_inter));
    Ok(IouParts {
        iou,
        d_iou,
        union,
        d_union,
        x,
        y,
    })
}

/// Treatment of CIoU's trade-off weight `alpha` when differentiating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CiouAlpha {
    /// Exact gradient of the loss, `alpha` differentiated through.
    #[default]
    Exact,
    /// `alpha` treated as a constant, the usual training convention.
    Detached,
}

/// Closed-form gradient for IoU, GIoU, CIoU and Focaler-IoU over any of
/// those three bases.
pub fn loss_grad_analytic(pred: &BBox, gt: &BBox, cfg: &LossConfig) -> Result<Gradient> {
    loss_grad_analytic_with(pred, gt, cfg, CiouAlpha::Exact)
}

pub fn loss_grad_analytic_with(pred: &BBox, gt: &BBox, cfg: &LossConfig, alpha: CiouAlpha) -> Result<Gradient> {
    cfg.validate()?;
    let geom = box_geometry(pred, gt)?;
    if !cfg.variant.has_analytic_grad(cfg) {
        return Err(Error::invalid(
            "loss_grad_analytic",
            format!("no analytic gradient for {}", cfg.variant),
        ));
    }
    let mut flagged = false;
    let parts = iou_parts(pred, gt, &mut flagged)?;
    let grad = match cfg.variant {
        LossVariant::FocalerIou => {
            let base = base_grad(cfg.focaler_base, pred, &geom, &parts, alpha);
            let (d, u) = (cfg.focaler_d, cfg.focaler_u);
            if parts.iou == d || parts.iou == u {
                flagged = true;
            }
            let slope = if parts.iou > d && parts.iou < u {
                1.0 / (u - d)
            } else {
                0.0
            };
            axpy(1.0 - slope, &parts.d_iou, &base)
        }
        v => base_grad(v, pred, &geom, &parts, alpha),
    };
    Ok(Gradient { grad, flagged })
}

fn base_grad(variant: LossVariant, pred: &BBox, geom: &BoxGeometry, p: &IouParts, mode: CiouAlpha) -> Vec4 {
    let neg_d_iou = scaled(-1.0, &p.d_iou);
    match variant {
        LossVariant::Iou => neg_d_iou,
        LossVariant::Giou => {
            // L = 2 - iou - union / area_c
            let area_c = p.x.span * p.y.span;
            let d_area_c = axpy(p.y.span, &p.x.d_span, &scaled(p.x.span, &p.y.d_span));
            let d_ratio = scaled(
                1.0 / (area_c * area_c),
                &axpy(-p.union, &d_area_c, &scaled(area_c, &p.d_union)),
            );
            axpy(-1.0, &d_ratio, &neg_d_iou)
        }
        LossVariant::Ciou => {
            let (dx, dy) = (geom.dx, geom.dy);
            let rho2 = geom.center_dist_sq;
            let d_rho2 = [-dx, -dy, -dx, -dy];
            let c2 = geom.enclose_diag_sq;
            let d_c2 = axpy(2.0 * p.x.span, &p.x.d_span, &scaled(2.0 * p.y.span, &p.y.d_span));
            let d_dist = scaled(1.0 / (c2 * c2), &axpy(-rho2, &d_c2, &scaled(c2, &d_rho2)));

            let (_, alpha) = ciou_v_alpha(geom);
            let (wp, hp) = (pred.width(), pred.height());
            let diff = (geom.w_g / geom.h_g).atan() - (wp / hp).atan();
            let r2 = wp * wp + hp * hp;
            let dv_dw = -2.0 * CIOU_V_SCALE * diff * hp / r2;
            let dv_dh = 2.0 * CIOU_V_SCALE * diff * wp / r2;
            let d_v = [-dv_dw, -dv_dh, dv_dw, dv_dh];

            let penalty = match mode {
                CiouAlpha::Detached => scaled(alpha, &d_v),
                // alpha * v = v^2 / (1 - iou + v)
                CiouAlpha::Exact => axpy(alpha * (2.0 - alpha), &d_v, &scaled(alpha * alpha, &p.d_iou)),
            };
            axpy(1.0, &penalty, &axpy(1.0, &d_dist, &neg_d_iou))
        }
        _ => unreachable!("base_grad called for {variant}"),
    }
}

/// Central finite difference of any loss variant. A step that would give
/// the predicted box a negative extent is clamped to the opposite edge and
/// the result is flagged.
pub fn loss_grad_fd(
    pred: &BBox,
    gt: &BBox,
    cfg: &LossConfig,
    state: Option<&WiouState>,
    h: f64,
) -> Result<Gradient> {
    if !(h > 0.0) {
        return Err(Error::invalid("loss_grad_fd", "step must be positive"));
    }
    pred.validate()?;
    let f = |b: &BBox| loss_value(b, gt, cfg, state);
    let base = pred.to_array();
    let mut grad = [0.0; 4];
    let mut flagged = false;
    for i in 0..4 {
        // partner coordinate on the same axis
        let j = (i + 2) % 4;
        let (mut lo, mut hi) = (base[i] - h, base[i] + h);
        if i < 2 && hi > base[j] {
            hi = base[j];
            flagged = true;
        }
        if i >= 2 && lo < base[j] {
            lo = base[j];
            flagged = true;
        }
        if hi <= lo {
            return Err(Error::invalid("loss_grad_fd", "no room to perturb a zero-extent box"));
        }
        let mut plus = base;
        plus[i] = hi;
        let mut minus = base;
        minus[i] = lo;
        grad[i] = (f(&BBox::from_array(plus))? - f(&BBox::from_array(minus))?) / (hi - lo);
    }
    Ok(Gradient { grad, flagged })
}

/// `max_i |a_i - b_i| / max(|a|_inf, |b|_inf)`, 0 when both vanish.
pub fn relative_error(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let num = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = a.iter().chain(b).map(|v| v.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        0.0
    } else {
        num / scale
    }
}
