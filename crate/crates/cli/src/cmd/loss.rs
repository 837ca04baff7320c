// SPDX-License-Identifier: Apache-2.0

use std::fmt::Write as _;

use clap::Args;
use repdet_core::loss::{loss_grad_analytic, loss_grad_fd, loss_value, BBox, LossConfig, LossVariant, WiouState};
use repdet_core::Error;
use serde_json::{json, Value};

use crate::args::parse_box;
use crate::status::{CmdResult, Failure, Outcome};
use crate::{Context, Format};

#[derive(Args)]
pub struct LossArgs {
    /// Variant name or "all".
    #[arg(long, default_value = "all")]
    variant: String,
    /// Predicted box x1,y1,x2,y2.
    #[arg(long, value_parser = parse_box, allow_hyphen_values = true)]
    pred: BBox,
    /// Ground-truth box x1,y1,x2,y2.
    #[arg(long, value_parser = parse_box, allow_hyphen_values = true)]
    gt: BBox,
    /// Image width (MPDIoU normaliser).
    #[arg(long)]
    img_w: Option<f64>,
    /// Image height (MPDIoU normaliser).
    #[arg(long)]
    img_h: Option<f64>,
    /// Add analytic and finite-difference gradients.
    #[arg(long)]
    grad: bool,
}

pub fn select_variants(name: &str) -> Result<Vec<LossVariant>, Failure> {
    if name == "all" {
        return Ok(LossVariant::ALL.to_vec());
    }
    name.parse::<LossVariant>()
        .map(|v| vec![v])
        .map_err(|_| Failure::usage(format!("unknown variant {name:?}; valid: all, {}", LossVariant::names().join(", "))))
}

struct Row {
    variant: LossVariant,
    loss: Option<f64>,
    analytic: Option<[f64; 4]>,
    fd: Option<[f64; 4]>,
}

fn vec4(g: &[f64; 4]) -> String {
    format!("[{:.4}, {:.4}, {:.4}, {:.4}]", g[0], g[1], g[2], g[3])
}

fn cell(v: Option<String>) -> String {
    v.unwrap_or_else(|| "-".to_string())
}

pub fn run(a: &LossArgs, ctx: &Context) -> CmdResult {
    let variants = select_variants(&a.variant)?;
    let all = variants.len() > 1;
    let base = LossConfig {
        image_w: a.img_w.or(ctx.config.loss.image_w),
        image_h: a.img_h.or(ctx.config.loss.image_h),
        ..ctx.config.loss.clone()
    };
    let state = WiouState {
        momentum: ctx.config.wiou_momentum,
        ..WiouState::default()
    };
    let mut rows = Vec::with_capacity(variants.len());
    for v in variants {
        let cfg = LossConfig { variant: v, ..base.clone() };
        let loss = match loss_value(&a.pred, &a.gt, &cfg, Some(&state)) {
            Ok(l) => l,
            Err(Error::Missing { .. }) if all => {
                rows.push(Row { variant: v, loss: None, analytic: None, fd: None });
                continue;
            }
            Err(Error::Missing { op, what }) => {
                return Err(Failure::usage(format!("{op} needs {what}; pass --img-w and --img-h")))
            }
            Err(e) => return Err(Failure::usage(e.to_string())),
        };
        let (analytic, fd) = if a.grad {
            let an = if v.has_analytic_grad(&cfg) {
                Some(loss_grad_analytic(&a.pred, &a.gt, &cfg)?.grad)
            } else {
                None
            };
            let fd = loss_grad_fd(&a.pred, &a.gt, &cfg, Some(&state), ctx.config.fd_step).ok().map(|g| g.grad);
            (an, fd)
        } else {
            (None, None)
        };
        rows.push(Row { variant: v, loss: Some(loss), analytic, fd });
    }

    let stdout = match ctx.format {
        Format::Table => {
            let mut s = String::new();
            if a.grad {
                let _ = writeln!(s, "{:<10}  {:>8}  {:<40}  {:<40}", "variant", "loss", "analytic grad", "fd grad");
            } else {
                let _ = writeln!(s, "{:<10}  {:>8}", "variant", "loss");
            }
            for r in &rows {
                let loss = cell(r.loss.map(|l| format!("{l:.4}")));
                if a.grad {
                    let an = cell(r.analytic.as_ref().map(vec4));
                    let fd = cell(r.fd.as_ref().map(vec4));
                    let _ = writeln!(s, "{:<10}  {loss:>8}  {an:<40}  {fd:<40}", r.variant.name());
                } else {
                    let _ = writeln!(s, "{:<10}  {loss:>8}", r.variant.name());
                }
            }
            trim_lines(&s)
        }
        Format::Json => {
            let rows: Vec<Value> = rows
                .iter()
                .map(|r| {
                    let mut o = json!({ "variant": r.variant.name(), "loss": r.loss });
                    if a.grad {
                        o["grad_analytic"] = json!(r.analytic);
                        o["grad_fd"] = json!(r.fd);
                    }
                    o
                })
                .collect();
            let v = json!({ "pred": a.pred.to_array(), "gt": a.gt.to_array(), "losses": rows });
            serde_json::to_string_pretty(&v).expect("json value") + "\n"
        }
    };
    Ok(Outcome::ok(stdout))
}

/// Drops trailing padding so output lines never end in spaces.
pub fn trim_lines(s: &str) -> String {
    s.lines().map(|l| l.trim_end().to_string() + "\n").collect()
}
