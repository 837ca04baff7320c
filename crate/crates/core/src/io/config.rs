// SPDX-License-Identifier: Apache-2.0

//! `key = value` run configuration with `#` comments.

use std::collections::HashSet;
use std::path::Path;
use std::str::FromStr;

use super::{read_file, FormatError};
use crate::loss::{LossConfig, LossVariant};

/// Average-precision integration rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    /// Mean of the precision envelope at recall 0.00, 0.01, ..., 1.00.
    #[default]
    Point101,
    /// Exact area under the precision envelope.
    Continuous,
}

impl FromStr for Interpolation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "101pt" => Ok(Interpolation::Point101),
            "continuous" => Ok(Interpolation::Continuous),
            _ => Err(format!("expected \"101pt\" or \"continuous\", got {s:?}")),
        }
    }
}

/// Every tunable the CLI reads, with defaults applied.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedConfig {
    pub loss: LossConfig,
    pub wiou_momentum: f64,
    pub seed: u64,
    pub patch_size: usize,
    pub mask_ratio: f64,
    pub score_threshold: f64,
    pub operating_iou: f64,
    pub interpolation: Interpolation,
    pub gradcheck_tol: f64,
    pub gradcheck_trials: usize,
    pub fd_step: f64,
    pub pretrain_steps: usize,
}

impl Default for ResolvedConfig {
    fn default() -> Self {
        Self {
            loss: LossConfig::default(),
            wiou_momentum: 0.9,
            seed: 0,
            patch_size: 32,
            mask_ratio: 0.6,
            score_threshold: 0.25,
            operating_iou: 0.5,
            interpolation: Interpolation::Point101,
            gradcheck_tol: 1e-4,
            gradcheck_trials: 100,
            fd_step: 1e-5,
            pretrain_steps: 200,
        }
    }
}

pub const KEYS: &[&str] = &[
    "variant",
    "alpha_pow",
    "nwd_c",
    "siou_theta",
    "wiou_alpha",
    "wiou_delta",
    "wiou_momentum",
    "shape_scale",
    "piou_lambda",
    "piou_v2",
    "focaler_d",
    "focaler_u",
    "focaler_base",
    "image_w",
    "image_h",
    "seed",
    "patch_size",
    "mask_ratio",
    "score_threshold",
    "operating_iou",
    "interpolation",
    "gradcheck_tol",
    "gradcheck_trials",
    "fd_step",
    "pretrain_steps",
];

struct Entry<'a> {
    line: usize,
    key: &'a str,
    value: &'a str,
}

impl Entry<'_> {
    fn mismatch(&self, expected: &'static str) -> FormatError {
        FormatError::TypeMismatch {
            line: self.line,
            key: self.key.to_string(),
            expected,
            value: self.value.to_string(),
        }
    }

    fn real(&self) -> Result<f64, FormatError> {
        self.value
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| self.mismatch("a finite real number"))
    }

    fn count(&self) -> Result<usize, FormatError> {
        self.value.parse().map_err(|_| self.mismatch("a non-negative integer"))
    }

    fn flag(&self) -> Result<bool, FormatError> {
        match self.value {
            "true" | "on" | "1" => Ok(true),
            "false" | "off" | "0" => Ok(false),
            _ => Err(self.mismatch("a boolean (true/false)")),
        }
    }

    fn variant(&self) -> Result<LossVariant, FormatError> {
        self.value
            .parse()
            .map_err(|_| self.mismatch("a loss variant name"))
    }
}

pub fn parse_config(text: &str) -> Result<ResolvedConfig, FormatError> {
    let mut cfg = ResolvedConfig::default();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| FormatError::Syntax {
            line,
            msg: format!("expected `key = value`, got {content:?}"),
        })?;
        let e = Entry {
            line,
            key: key.trim(),
            value: value.trim(),
        };
        if !KEYS.contains(&e.key) {
            return Err(FormatError::UnknownKey {
                line,
                key: e.key.to_string(),
            });
        }
        if !seen.insert(e.key) {
            return Err(FormatError::DuplicateKey {
                line,
                key: e.key.to_string(),
            });
        }
        let l = &mut cfg.loss;
        match e.key {
            "variant" => l.variant = e.variant()?,
            "alpha_pow" => l.alpha_pow = e.real()?,
            "nwd_c" => l.nwd_c = e.real()?,
            "siou_theta" => l.siou_theta = e.real()?,
            "wiou_alpha" => l.wiou_alpha = e.real()?,
            "wiou_delta" => l.wiou_delta = e.real()?,
            "wiou_momentum" => cfg.wiou_momentum = e.real()?,
            "shape_scale" => l.shape_scale = e.real()?,
            "piou_lambda" => l.piou_lambda = e.real()?,
            "piou_v2" => l.piou_v2 = e.flag()?,
            "focaler_d" => l.focaler_d = e.real()?,
            "focaler_u" => l.focaler_u = e.real()?,
            "focaler_base" => l.focaler_base = e.variant()?,
            "image_w" => l.image_w = Some(e.real()?),
            "image_h" => l.image_h = Some(e.real()?),
            "seed" => cfg.seed = e.value.parse().map_err(|_| e.mismatch("an unsigned integer"))?,
            "patch_size" => cfg.patch_size = e.count()?,
            "mask_ratio" => cfg.mask_ratio = e.real()?,
            "score_threshold" => cfg.score_threshold = e.real()?,
            "operating_iou" => cfg.operating_iou = e.real()?,
            "interpolation" => {
                cfg.interpolation = e.value.parse().map_err(|_| e.mismatch("\"101pt\" or \"continuous\""))?
            }
            "gradcheck_tol" => cfg.gradcheck_tol = e.real()?,
            "gradcheck_trials" => cfg.gradcheck_trials = e.count()?,
            "fd_step" => cfg.fd_step = e.real()?,
            "pretrain_steps" => cfg.pretrain_steps = e.count()?,
            _ => unreachable!("key list and match arms out of sync"),
        }
        check_range(&e, &cfg)?;
    }
    Ok(cfg)
}

fn check_range(e: &Entry<'_>, cfg: &ResolvedConfig) -> Result<(), FormatError> {
    let bad = |msg: &str| FormatError::InvalidValue {
        line: e.line,
        key: e.key.to_string(),
        msg: msg.to_string(),
    };
    let unit = |v: f64| (0.0..=1.0).contains(&v);
    match e.key {
        "focaler_d" | "focaler_u" if !unit(e.real()?) => Err(bad("must lie in [0, 1]")),
        "mask_ratio" if !unit(cfg.mask_ratio) => Err(bad("must lie in [0, 1]")),
        "score_threshold" if !unit(cfg.score_threshold) => Err(bad("must lie in [0, 1]")),
        "operating_iou" if !unit(cfg.operating_iou) => Err(bad("must lie in [0, 1]")),
        "wiou_momentum" if !(cfg.wiou_momentum > 0.0 && cfg.wiou_momentum < 1.0) => Err(bad("must lie in (0, 1)")),
        "nwd_c" | "image_w" | "image_h" | "fd_step" | "gradcheck_tol" if e.real()? <= 0.0 => {
            Err(bad("must be positive"))
        }
        "patch_size" if cfg.patch_size == 0 => Err(bad("must be positive")),
        _ => Ok(()),
    }
}

pub fn load_config(path: &Path) -> Result<ResolvedConfig, FormatError> {
    parse_config(&read_file(path)?)
}
