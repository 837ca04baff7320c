// SPDX-License-Identifier: Apache-2.0

use std::fmt;

use repdet_core::io::FormatError;
use repdet_core::Error;

/// Process exit codes. These values are part of the interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    Validation = 1,
    Usage = 2,
    Io = 3,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

/// A failure that ends the command with a message on stderr.
#[derive(Debug)]
pub struct Failure {
    pub status: ExitStatus,
    pub msg: String,
}

impl Failure {
    pub fn usage(msg: impl Into<String>) -> Self {
        Self { status: ExitStatus::Usage, msg: msg.into() }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Self { status: ExitStatus::Validation, msg: msg.into() }
    }

    pub fn io(msg: impl Into<String>) -> Self {
        Self { status: ExitStatus::Io, msg: msg.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.msg)
    }
}

impl From<FormatError> for Failure {
    fn from(e: FormatError) -> Self {
        Failure::io(e.to_string())
    }
}

/// Library errors: malformed files are I/O failures, everything else is
/// a bad argument.
impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Format(f) => f.into(),
            other => Failure::usage(other.to_string()),
        }
    }
}

/// What a command prints on success and the code it exits with.
pub struct Outcome {
    pub stdout: String,
    pub status: ExitStatus,
}

impl Outcome {
    pub fn ok(stdout: String) -> Self {
        Self { stdout, status: ExitStatus::Success }
    }
}

pub type CmdResult = Result<Outcome, Failure>;
