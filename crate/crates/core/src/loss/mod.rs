// SPDX-License-Identifier: Apache-2.0

//! Bounding-box regression losses.
//!
//! Every variant is evaluated from a shared [`BoxGeometry`] decomposition.
//! Analytic gradients exist for IoU, GIoU, CIoU and Focaler-IoU over those
//! bases; central finite differences cover all variants.

mod geometry;
mod grad;

use std::f64::consts::{FRAC_PI_4, PI};
use std::fmt;
use std::str::FromStr;

pub use geometry::{box_geometry, iou, BBox, BoxGeometry};
pub use grad::{loss_grad_analytic, loss_grad_analytic_with, loss_grad_fd, relative_error, CiouAlpha, Gradient};

use crate::error::{Error, Result};

/// Lower bound applied to every denominator that can reach zero on
/// degenerate (zero-width, zero-height, coincident-point) boxes.
pub const DENOM_GUARD: f64 = 1e-9;

#[inline]
pub(crate) fn guard(x: f64) -> f64 {
    x.max(DENOM_GUARD)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LossVariant {
    Iou,
    Giou,
    Diou,
    Ciou,
    Nwd,
    AlphaIou,
    Eiou,
    Siou,
    Wiou,
    MpdIou,
    ShapeIou,
    PowerfulIou,
    FocalerIou,
}

impl LossVariant {
    pub const ALL: [LossVariant; 13] = [
        LossVariant::Iou,
        LossVariant::Giou,
        LossVariant::Diou,
        LossVariant::Ciou,
        LossVariant::Nwd,
        LossVariant::AlphaIou,
        LossVariant::Eiou,
        LossVariant::Siou,
        LossVariant::Wiou,
        LossVariant::MpdIou,
        LossVariant::ShapeIou,
        LossVariant::PowerfulIou,
        LossVariant::FocalerIou,
    ];

    /// Stable lowercase name used by the CLI and config files.
    pub fn name(self) -> &'static str {
        match self {
            LossVariant::Iou => "iou",
            LossVariant::Giou => "giou",
            LossVariant::Diou => "diou",
            LossVariant::Ciou => "ciou",
            LossVariant::Nwd => "nwd",
            LossVariant::AlphaIou => "alpha",
            LossVariant::Eiou => "eiou",
            LossVariant::Siou => "siou",
            LossVariant::Wiou => "wiou",
            LossVariant::MpdIou => "mpdiou",
            LossVariant::ShapeIou => "shapeiou",
            LossVariant::PowerfulIou => "piou",
            LossVariant::FocalerIou => "focaler",
        }
    }

    pub fn names() -> Vec<&'static str> {
        Self::ALL.iter().map(|v| v.name()).collect()
    }

    /// Whether [`loss_grad_analytic`] supports this variant as configured.
    pub fn has_analytic_grad(self, cfg: &LossConfig) -> bool {
        match self {
            LossVariant::Iou | LossVariant::Giou | LossVariant::Ciou => true,
            LossVariant::FocalerIou => cfg.focaler_base.has_analytic_grad(cfg),
            _ => false,
        }
    }
}

impl fmt::Display for LossVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                Error::invalid(
                    "loss variant",
                    format!("unknown variant {s:?}; valid: {}", Self::names().join(", ")),
                )
            })
    }
}

/// Variant selection plus every hyperparameter the variants read.
#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub variant: LossVariant,
    pub alpha_pow: f64,
    pub nwd_c: f64,
    pub siou_theta: f64,
    pub wiou_alpha: f64,
    pub wiou_delta: f64,
    pub shape_scale: f64,
    pub piou_lambda: f64,
    pub piou_v2: bool,
    pub focaler_d: f64,
    pub focaler_u: f64,
    pub focaler_base: LossVariant,
    pub image_w: Option<f64>,
    pub image_h: Option<f64>,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            variant: LossVariant::Ciou,
            alpha_pow: 3.0,
            nwd_c: 12.8,
            siou_theta: 4.0,
            wiou_alpha: 1.9,
            wiou_delta: 3.0,
            shape_scale: 0.0,
            piou_lambda: 1.3,
            piou_v2: false,
            focaler_d: 0.0,
            focaler_u: 0.95,
            focaler_base: LossVariant::Ciou,
            image_w: None,
            image_h: None,
        }
    }
}

impl LossConfig {
    pub fn with_variant(variant: LossVariant) -> Self {
        Self {
            variant,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (d, u) = (self.focaler_d, self.focaler_u);
        if !(0.0 <= d && d < u && u <= 1.0) {
            return Err(Error::invalid(
                "loss config",
                format!("focaler interval requires 0 <= d < u <= 1, got d={d}, u={u}"),
            ));
        }
        if !(self.nwd_c > 0.0) {
            return Err(Error::invalid("loss config", "nwd_c must be positive"));
        }
        if matches!(self.focaler_base, LossVariant::FocalerIou | LossVariant::Wiou) {
            return Err(Error::invalid(
                "loss config",
                format!("focaler_base cannot be {}", self.focaler_base),
            ));
        }
        let needs_image = self.variant == LossVariant::MpdIou
            || (self.variant == LossVariant::FocalerIou && self.focaler_base == LossVariant::MpdIou);
        if needs_image {
            self.image_dims()?;
        }
        Ok(())
    }

    fn image_dims(&self) -> Result<(f64, f64)> {
        match (self.image_w, self.image_h) {
            (Some(w), Some(h)) if w > 0.0 && h > 0.0 => Ok((w, h)),
            (Some(_), Some(_)) => Err(Error::invalid("mpdiou", "image dimensions must be positive")),
            _ => Err(Error::Missing {
                op: "mpdiou",
                what: "image dimensions",
            }),
        }
    }
}

/// Running mean of the IoU loss that drives WIoU's dynamic focusing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WiouState {
    pub running_mean_liou: f64,
    pub momentum: f64,
    pub initialized: bool,
}

impl Default for WiouState {
    fn default() -> Self {
        Self {
            running_mean_liou: 1.0,
            momentum: 0.9,
            initialized: false,
        }
    }
}

impl WiouState {
    /// Exponential moving average update; the first call adopts `l_iou`.
    /// The stored mean never drops below [`DENOM_GUARD`].
    pub fn update(&self, l_iou: f64) -> Result<Self> {
        if !(l_iou >= 0.0) {
            return Err(Error::invalid("wiou_update", format!("negative IoU loss {l_iou}")));
        }
        let m = if self.initialized {
            self.momentum * self.running_mean_liou + (1.0 - self.momentum) * l_iou
        } else {
            l_iou
        };
        Ok(Self {
            running_mean_liou: guard(m),
            momentum: self.momentum,
            initialized: true,
        })
    }

    /// Outlier degree `beta`; 1 before the first update.
    fn beta(&self, l_iou: f64) -> f64 {
        if self.initialized {
            l_iou / guard(self.running_mean_liou)
        } else {
            1.0
        }
    }
}

pub fn wiou_update(state: &WiouState, l_iou: f64) -> Result<WiouState> {
    state.update(l_iou)
}

/// Piecewise-linear Focaler remapping of an IoU onto `[d, u]`.
#[inline]
pub fn focaler_map(iou: f64, d: f64, u: f64) -> f64 {
    if iou <= d {
        0.0
    } else if iou >= u {
        1.0
    } else {
        (iou - d) / (u - d)
    }
}

pub(crate) const CIOU_V_SCALE: f64 = 4.0 / (PI * PI);

/// CIoU aspect term `v` and trade-off weight `alpha`.
pub(crate) fn ciou_v_alpha(g: &BoxGeometry) -> (f64, f64) {
    let t = (g.w_g / guard(g.h_g)).atan() - (g.w_p / guard(g.h_p)).atan();
    let v = CIOU_V_SCALE * t * t;
    let denom = (1.0 - g.iou) + v;
    let alpha = if denom > 0.0 { v / denom } else { 0.0 };
    (v, alpha)
}

pub fn loss_value(
    pred: &BBox,
    gt: &BBox,
    cfg: &LossConfig,
    state: Option<&WiouState>,
) -> Result<f64> {
    cfg.validate()?;
    let g = box_geometry(pred, gt)?;
    match cfg.variant {
        LossVariant::Wiou => {
            let st = state.ok_or(Error::Missing {
                op: "wiou",
                what: "WiouState",
            })?;
            Ok(wiou_loss(&g, cfg, st))
        }
        LossVariant::FocalerIou => {
            let base = evaluate(pred, gt, &g, cfg, cfg.focaler_base)?;
            Ok(base + g.iou - focaler_map(g.iou, cfg.focaler_d, cfg.focaler_u))
        }
        v => evaluate(pred, gt, &g, cfg, v),
    }
}

fn wiou_loss(g: &BoxGeometry, cfg: &LossConfig, st: &WiouState) -> f64 {
    let l_iou = 1.0 - g.iou;
    let r_dist = (g.center_dist_sq / guard(g.cw * g.cw + g.ch * g.ch)).exp();
    let beta = st.beta(l_iou);
    let r = beta / (cfg.wiou_delta * cfg.wiou_alpha.powf(beta - cfg.wiou_delta));
    r * r_dist * l_iou
}

/// Stateless variants (everything except WIoU and the Focaler wrapper).
fn evaluate(
    pred: &BBox,
    gt: &BBox,
    g: &BoxGeometry,
    cfg: &LossConfig,
    variant: LossVariant,
) -> Result<f64> {
    let l_iou = 1.0 - g.iou;
    let dist = g.center_dist_sq / guard(g.enclose_diag_sq);
    let value = match variant {
        LossVariant::Iou => l_iou,
        LossVariant::Giou => {
            let area_c = g.enclose_area();
            let penalty = if area_c > 0.0 {
                (area_c - g.union_area) / area_c
            } else {
                0.0
            };
            1.0 - (g.iou - penalty)
        }
        LossVariant::Diou => l_iou + dist,
        LossVariant::Ciou => {
            let (v, alpha) = ciou_v_alpha(g);
            l_iou + dist + alpha * v
        }
        LossVariant::Nwd => {
            let dw = (g.w_p - g.w_g) / 2.0;
            let dh = (g.h_p - g.h_g) / 2.0;
            let w2 = g.center_dist_sq + dw * dw + dh * dh;
            1.0 - (-w2.sqrt() / cfg.nwd_c).exp()
        }
        LossVariant::AlphaIou => 1.0 - g.iou.powf(cfg.alpha_pow),
        LossVariant::Eiou => {
            let dw = g.w_p - g.w_g;
            let dh = g.h_p - g.h_g;
            l_iou + dist + dw * dw / guard(g.cw * g.cw) + dh * dh / guard(g.ch * g.ch)
        }
        LossVariant::Siou => siou(g, cfg.siou_theta),
        LossVariant::MpdIou => {
            let (w, h) = cfg.image_dims()?;
            let norm = w * w + h * h;
            let d1 = (pred.x1 - gt.x1).powi(2) + (pred.y1 - gt.y1).powi(2);
            let d2 = (pred.x2 - gt.x2).powi(2) + (pred.y2 - gt.y2).powi(2);
            l_iou + d1 / norm + d2 / norm
        }
        LossVariant::ShapeIou => shape_iou(g, cfg.shape_scale),
        LossVariant::PowerfulIou => {
            let p = ((pred.x1 - gt.x1).abs() + (pred.x2 - gt.x2).abs()) / guard(g.w_g)
                + ((pred.y1 - gt.y1).abs() + (pred.y2 - gt.y2).abs()) / guard(g.h_g);
            let p = p / 4.0;
            let v1 = l_iou + 1.0 - (-p * p).exp();
            if cfg.piou_v2 {
                let q = cfg.piou_lambda * (-p).exp();
                3.0 * q * (-q * q).exp() * v1
            } else {
                v1
            }
        }
        LossVariant::Wiou | LossVariant::FocalerIou => {
            return Err(Error::invalid(
                "loss_value",
                format!("{variant} cannot be evaluated as a base loss"),
            ))
        }
    };
    Ok(value)
}

fn siou(g: &BoxGeometry, theta: f64) -> f64 {
    let sigma = g.center_dist_sq.sqrt();
    let angle = if sigma > 0.0 {
        let s = (g.dy.abs().min(sigma) / sigma).asin() - FRAC_PI_4;
        1.0 - 2.0 * s.sin().powi(2)
    } else {
        0.0
    };
    let gamma = 2.0 - angle;
    let rho_x = (g.dx / guard(g.cw)).powi(2);
    let rho_y = (g.dy / guard(g.ch)).powi(2);
    let distance = (1.0 - (-gamma * rho_x).exp()) + (1.0 - (-gamma * rho_y).exp());
    let omega_w = (g.w_p - g.w_g).abs() / guard(g.w_p.max(g.w_g));
    let omega_h = (g.h_p - g.h_g).abs() / guard(g.h_p.max(g.h_g));
    let shape = (1.0 - (-omega_w).exp()).powf(theta) + (1.0 - (-omega_h).exp()).powf(theta);
    1.0 - g.iou + (distance + shape) / 2.0
}

fn shape_iou(g: &BoxGeometry, scale: f64) -> f64 {
    let (ww, hh) = if scale == 0.0 {
        (1.0, 1.0)
    } else {
        let wg = g.w_g.powf(scale);
        let hg = g.h_g.powf(scale);
        let denom = guard(wg + hg);
        (2.0 * wg / denom, 2.0 * hg / denom)
    };
    let c2 = guard(g.enclose_diag_sq);
    let dist = hh * g.dx * g.dx / c2 + ww * g.dy * g.dy / c2;
    let omega_w = hh * (g.w_p - g.w_g).abs() / guard(g.w_p.max(g.w_g));
    let omega_h = ww * (g.h_p - g.h_g).abs() / guard(g.h_p.max(g.h_g));
    let shape = (1.0 - (-omega_w).exp()).powi(4) + (1.0 - (-omega_h).exp()).powi(4);
    1.0 - g.iou + dist + 0.5 * shape
}
