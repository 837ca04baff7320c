// SPDX-License-Identifier: Apache-2.0
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

use repdet_core::eval::{threshold_key, Counts, EvalConfig, EvalResult, ThresholdMap};
use repdet_core::io::{load_annotations, load_detections};
use repdet_core::oracle;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn repdet<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_repdet"))
        .args(args)
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
        .expect("binary runs");
    Run {
        code: out.status.code().expect("exit code"),
        stdout: String::from_utf8(out.stdout).expect("utf-8 stdout"),
        stderr: String::from_utf8(out.stderr).expect("utf-8 stderr"),
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// The brute-force oracle's metrics in the CLI's JSON schema.
pub fn oracle_result(gt: &Path, dt: &Path) -> EvalResult {
    let gts = load_annotations(gt).unwrap();
    let dets = load_detections(dt).unwrap();
    let mut classes: Vec<u32> = gts.iter().map(|g| g.class_id).chain(dets.iter().map(|d| d.class_id)).collect();
    classes.sort_unstable();
    classes.dedup();
    let cfg = EvalConfig::default();
    let m = oracle::evaluate(&dets, &gts, &cfg, &classes);
    let per_class_ap = m
        .per_class
        .iter()
        .map(|(&c, aps)| (c, cfg.iou_thresholds.iter().zip(aps).map(|(&t, &ap)| (threshold_key(t), ap)).collect()))
        .collect();
    let per_threshold: Vec<ThresholdMap> = cfg
        .iou_thresholds
        .iter()
        .zip(&m.map_per_threshold)
        .map(|(&iou_threshold, &map)| ThresholdMap { iou_threshold, map })
        .collect();
    let Counts { tp, fp, fn_ } = m.counts;
    EvalResult {
        per_class_ap,
        map50: per_threshold[0].map,
        per_threshold,
        map50_95: m.map50_95,
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        counts: m.counts,
    }
}

/// Sorted keys, compact, shortest round-trip floats.
pub fn canonical(json: &str) -> String {
    let v: serde_json::Value = serde_json::from_str(json).expect("valid json");
    serde_json::to_string(&v).unwrap()
}

/// Golden stdout cases: file stem, arguments and expected exit code.
/// `{out}` is replaced by a scratch output path.
pub const GOLDEN_CASES: &[(&str, &[&str], i32)] = &[
    ("fuse_toy", &["fuse", "--in", "tests/fixtures/toy_train.json", "--out", "{out}"], 0),
    ("loss_giou", &["loss", "--variant", "giou", "--pred", "0,0,1,1", "--gt", "2,2,3,3"], 0),
    (
        "loss_all_identical",
        &["loss", "--variant", "all", "--pred", "5,5,20,30", "--gt", "5,5,20,30", "--img-w", "640", "--img-h", "480"],
        0,
    ),
    (
        "loss_all_grad",
        &["loss", "--pred", "10,12,50,40", "--gt", "14,10,46,52", "--img-w", "640", "--img-h", "480", "--grad"],
        0,
    ),
    (
        "loss_config_json",
        &[
            "--config", "tests/fixtures/run.cfg", "--format", "json", "loss", "--variant", "focaler", "--pred", "0,0,4,3",
            "--gt", "1,1,5,5", "--grad",
        ],
        0,
    ),
    ("gradcheck_default", &["gradcheck"], 0),
    ("gradcheck_tight", &["gradcheck", "--variant", "ciou", "--trials", "20", "--seed", "5", "--tol", "1e-12"], 1),
    ("eval_two_class", &["eval", "--gt", "tests/fixtures/gt_two_class.json", "--dt", "tests/fixtures/dt_two_class.json"], 0),
    (
        "eval_two_class_json",
        &["eval", "--gt", "tests/fixtures/gt_two_class.json", "--dt", "tests/fixtures/dt_two_class.json", "--format", "json"],
        0,
    ),
    ("eval_identity", &["eval", "--gt", "tests/fixtures/gt_two_class.json", "--dt", "tests/fixtures/dt_identity.json"], 0),
    ("eval_empty", &["eval", "--gt", "tests/fixtures/gt_two_class.json", "--dt", "tests/fixtures/dt_empty.json"], 0),
    (
        "eval_continuous_50",
        &[
            "eval", "--gt", "tests/fixtures/gt_two_class.json", "--dt", "tests/fixtures/dt_two_class.json", "--iou-thrs",
            "0.5:0.5:0.05", "--interp", "continuous",
        ],
        0,
    ),
    ("mask_seed7", &["mask", "--h", "224", "--w", "224", "--patch", "32", "--ratio", "0.6", "--seed", "7"], 0),
    ("mask_ratio0", &["mask", "--h", "96", "--w", "128", "--patch", "32", "--ratio", "0"], 0),
    ("mask_ratio1", &["mask", "--h", "96", "--w", "128", "--patch", "32", "--ratio", "1"], 0),
    ("mask_json", &["mask", "--h", "64", "--w", "96", "--patch", "32", "--ratio", "0.5", "--seed", "3", "--json"], 0),
    ("pretrain_default", &["pretrain-demo"], 0),
    ("pretrain_one_step", &["pretrain-demo", "--steps", "1", "--format", "json"], 0),
];

/// Runs one golden case and compares stdout and exit code with the
/// committed file. Returns a description of the first mismatch.
pub fn check_golden(name: &str, args: &[&str], code: i32, update: bool) -> Result<(), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path().join("out.json");
    let args: Vec<String> = args.iter().map(|a| a.replace("{out}", out.to_str().unwrap())).collect();
    let run = repdet(&args);
    if run.code != code {
        return Err(format!("{name}: exit {} (want {code}), stderr {}", run.code, run.stderr.trim()));
    }
    let path = golden(&format!("{name}.out"));
    if update {
        std::fs::write(&path, &run.stdout).map_err(|e| e.to_string())?;
        return Ok(());
    }
    let want = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if run.stdout != want {
        return Err(format!("{name}: stdout differs from {}", path.display()));
    }
    if repdet(&args).stdout != run.stdout {
        return Err(format!("{name}: second run printed different bytes"));
    }
    Ok(())
}
