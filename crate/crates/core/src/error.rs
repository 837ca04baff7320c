// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch in {op}: {dim} expected {expected}, got {got}")]
    Shape {
        op: &'static str,
        dim: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid argument to {op}: {msg}")]
    Invalid { op: &'static str, msg: String },

    #[error("invalid box [{x1}, {y1}, {x2}, {y2}]: negative extent")]
    InvalidBox { x1: f64, y1: f64, x2: f64, y2: f64 },

    #[error("missing {what} for {op}")]
    Missing { op: &'static str, what: &'static str },

    #[error("weight container: {0}")]
    Container(String),

    #[error("{0}")]
    Format(#[from] crate::io::FormatError),
}

impl Error {
    pub(crate) fn shape(op: &'static str, dim: &'static str, expected: usize, got: usize) -> Self {
        Error::Shape {
            op,
            dim,
            expected,
            got,
        }
    }

    pub(crate) fn invalid(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Invalid {
            op,
            msg: msg.into(),
        }
    }
}
