// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeSet;
use std::path::PathBuf;

use clap::Args;
use repdet_core::eval::{coco_thresholds, evaluate, EvalConfig, Interpolation};
use repdet_core::io::{read_annotation_file, read_detection_file};

use crate::args::{parse_thresholds, Thresholds};
use crate::status::{CmdResult, Failure, Outcome};
use crate::{Context, Format};

#[derive(Args)]
pub struct EvalArgs {
    /// Ground-truth annotation file.
    #[arg(long, value_name = "FILE")]
    gt: PathBuf,
    /// Detection file.
    #[arg(long, value_name = "FILE")]
    dt: PathBuf,
    /// IoU thresholds as start:end:step.
    #[arg(long, value_parser = parse_thresholds)]
    iou_thrs: Option<Thresholds>,
    /// "101pt" or "continuous".
    #[arg(long)]
    interp: Option<String>,
}

pub fn run(a: &EvalArgs, ctx: &Context) -> CmdResult {
    let interpolation = match &a.interp {
        Some(s) => s.parse::<Interpolation>().map_err(Failure::usage)?,
        None => ctx.config.interpolation,
    };
    let cfg = EvalConfig {
        iou_thresholds: a.iou_thrs.clone().map_or_else(coco_thresholds, |t| t.0),
        score_threshold: ctx.config.score_threshold,
        operating_iou: ctx.config.operating_iou,
        interpolation,
    };
    let gt_file = read_annotation_file(&a.gt)?;
    let dt_file = read_detection_file(&a.dt)?;
    let gts = gt_file.ground_truths()?;
    let dets = dt_file.detections()?;

    let classes: BTreeSet<u32> = gt_file
        .categories
        .iter()
        .chain(&dt_file.categories)
        .map(|c| c.id)
        .chain(gts.iter().map(|g| g.class_id))
        .chain(dets.iter().map(|d| d.class_id))
        .collect();
    if classes.is_empty() {
        return Err(Failure::validation("no categories, annotations or detections to evaluate"));
    }
    let classes: Vec<u32> = classes.into_iter().collect();
    let result = evaluate(&dets, &gts, &cfg, &classes).map_err(|e| Failure::validation(e.to_string()))?;
    Ok(Outcome::ok(match ctx.format {
        Format::Table => result.to_table(),
        Format::Json => result.to_json(),
    }))
}
