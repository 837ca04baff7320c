// SPDX-License-Identifier: Apache-2.0

//! On-disk formats: the JSON weight container, COCO-like annotation and
//! detection files, and `key = value` run configuration.

mod coco;
mod config;
mod weights;

use thiserror::Error;

pub use coco::{
    load_annotations, load_detections, parse_annotations, parse_detections, read_annotation_file,
    read_detection_file, write_annotation_file, write_detection_file, Category, CocoFile,
    ImageInfo, Record,
};
pub use config::{load_config, parse_config, Interpolation, ResolvedConfig};
pub use weights::{load_weights, read_weights_file, save_weights, NamedTensor, WeightContainer, WEIGHT_MAGIC};

/// Structured diagnostic for malformed input. Every variant carries enough
/// position information (line/column, record index or tensor name) to find
/// the offending spot.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormatError {
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },

    #[error("parse error at line {line}, column {column}: {msg}")]
    Json { line: usize, column: usize, msg: String },

    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { found: String, expected: &'static str },

    #[error("unsupported format_version {found}, expected {expected}")]
    Version { found: u64, expected: u64 },

    #[error("unknown form {0:?}, expected \"train\" or \"deploy\"")]
    Form(String),

    #[error("tensor {name:?}: shape {shape:?} needs {expected} values, found {found}")]
    DataLength {
        name: String,
        shape: Vec<usize>,
        expected: usize,
        found: usize,
    },

    #[error("tensor {name:?}: non-finite value at index {index}")]
    NonFinite { name: String, index: usize },

    #[error("duplicate tensor name {0:?}")]
    DuplicateTensor(String),

    #[error("deploy-form container holds branch tensor {0:?}")]
    BranchInDeploy(String),

    #[error("{section}[{index}]: image_id {image_id} not listed in \"images\"")]
    DanglingImage {
        section: &'static str,
        index: usize,
        image_id: u64,
    },

    #[error("{section}[{index}]: bbox has negative width or height {bbox:?}")]
    NegativeExtent {
        section: &'static str,
        index: usize,
        bbox: [f64; 4],
    },

    #[error("{section}[{index}]: {msg}")]
    Record {
        section: &'static str,
        index: usize,
        msg: String,
    },

    #[error("file has no {0:?} section")]
    MissingSection(&'static str),

    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },

    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },

    #[error("line {line}: duplicate key {key:?}")]
    DuplicateKey { line: usize, key: String },

    #[error("line {line}: key {key:?} expects {expected}, got {value:?}")]
    TypeMismatch {
        line: usize,
        key: String,
        expected: &'static str,
        value: String,
    },

    #[error("line {line}: invalid value for {key:?}: {msg}")]
    InvalidValue { line: usize, key: String, msg: String },
}

impl From<serde_json::Error> for FormatError {
    fn from(e: serde_json::Error) -> Self {
        FormatError::Json {
            line: e.line(),
            column: e.column(),
            msg: e.to_string(),
        }
    }
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<String, FormatError> {
    std::fs::read_to_string(path).map_err(|e| FormatError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    })
}
