// SPDX-License-Identifier: Apache-2.0

//! JSON weight container.
//!
//! ```text
//! {"magic":"PKW1","format_version":1,"form":"train",
//!  "tensors":[{"name":"stem.conv1.conv.weight","shape":[8,3,3,3],"dtype":"f32","data":[...]}]}
//! ```
//!
//! Values are written with the shortest representation that parses back
//! to the same bits for the declared dtype.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_file, FormatError};
use crate::repvit::Form;
use crate::tensor::DType;

pub const WEIGHT_MAGIC: &str = "PKW1";
const FORMAT_VERSION: u64 = 1;

/// Name suffixes that only exist in train-form containers.
const BRANCH_MARKERS: [&str; 2] = [".dw1x1.", ".identity_bn."];

/// A flat row-major tensor. Values are held as f64; for `DType::F32`
/// every value is exactly representable as f32.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: DType,
    pub data: Vec<f64>,
}

impl NamedTensor {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightContainer {
    pub form: Form,
    pub tensors: Vec<NamedTensor>,
}

impl WeightContainer {
    pub fn new(form: Form) -> Self {
        Self {
            form,
            tensors: Vec::new(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Stored values, not counting batch-norm `eps` scalars.
    pub fn param_count(&self) -> usize {
        self.tensors
            .iter()
            .filter(|t| !t.name.ends_with(".eps"))
            .map(|t| t.data.len())
            .sum()
    }

    pub fn validate(&self) -> Result<(), FormatError> {
        let mut seen = HashSet::new();
        for t in &self.tensors {
            if !seen.insert(t.name.as_str()) {
                return Err(FormatError::DuplicateTensor(t.name.clone()));
            }
            if t.numel() != t.data.len() {
                return Err(FormatError::DataLength {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    expected: t.numel(),
                    found: t.data.len(),
                });
            }
            if let Some(index) = t.data.iter().position(|v| !v.is_finite()) {
                return Err(FormatError::NonFinite {
                    name: t.name.clone(),
                    index,
                });
            }
            if self.form == Form::Deploy && BRANCH_MARKERS.iter().any(|m| t.name.contains(m)) {
                return Err(FormatError::BranchInDeploy(t.name.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct FileOut<'a> {
    magic: &'static str,
    format_version: u64,
    form: &'static str,
    tensors: Vec<TensorOut<'a>>,
}

#[derive(Serialize)]
struct TensorOut<'a> {
    name: &'a str,
    shape: &'a [usize],
    dtype: DType,
    data: DataOut<'a>,
}

#[derive(Serialize)]
#[serde(untagged)]
enum DataOut<'a> {
    F32(Vec<f32>),
    F64(&'a [f64]),
}

#[derive(Deserialize)]
struct FileIn {
    magic: String,
    format_version: u64,
    form: String,
    tensors: Vec<TensorIn>,
}

#[derive(Deserialize)]
struct TensorIn {
    name: String,
    shape: Vec<usize>,
    dtype: DType,
    data: Vec<f64>,
}

pub fn save_weights(container: &WeightContainer) -> Result<String, FormatError> {
    container.validate()?;
    let tensors = container
        .tensors
        .iter()
        .map(|t| TensorOut {
            name: &t.name,
            shape: &t.shape,
            dtype: t.dtype,
            data: match t.dtype {
                DType::F32 => DataOut::F32(t.data.iter().map(|&v| v as f32).collect()),
                DType::F64 => DataOut::F64(&t.data),
            },
        })
        .collect();
    let file = FileOut {
        magic: WEIGHT_MAGIC,
        format_version: FORMAT_VERSION,
        form: container.form.as_str(),
        tensors,
    };
    let mut s = serde_json::to_string(&file)?;
    s.push('\n');
    Ok(s)
}

pub fn load_weights(text: &str) -> Result<WeightContainer, FormatError> {
    let file: FileIn = serde_json::from_str(text)?;
    if file.magic != WEIGHT_MAGIC {
        return Err(FormatError::BadMagic {
            found: file.magic,
            expected: WEIGHT_MAGIC,
        });
    }
    if file.format_version != FORMAT_VERSION {
        return Err(FormatError::Version {
            found: file.format_version,
            expected: FORMAT_VERSION,
        });
    }
    let form = match file.form.as_str() {
        "train" => Form::Train,
        "deploy" => Form::Deploy,
        _ => return Err(FormatError::Form(file.form)),
    };
    let tensors = file
        .tensors
        .into_iter()
        .map(|t| {
            let data = match t.dtype {
                DType::F32 => t.data.into_iter().map(|v| v as f32 as f64).collect(),
                DType::F64 => t.data,
            };
            NamedTensor {
                name: t.name,
                shape: t.shape,
                dtype: t.dtype,
                data,
            }
        })
        .collect();
    let c = WeightContainer { form, tensors };
    c.validate()?;
    Ok(c)
}

pub fn read_weights_file(path: &Path) -> Result<WeightContainer, FormatError> {
    load_weights(&read_file(path)?)
}
