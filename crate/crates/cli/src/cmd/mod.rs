// SPDX-License-Identifier: Apache-2.0

pub mod eval;
pub mod fuse;
pub mod gradcheck;
pub mod init;
pub mod loss;
pub mod mask;
pub mod pretrain;

use std::path::Path;

use crate::status::Failure;

/// Writes `text` to `path`, mapping failures to the I/O exit code.
pub fn write_output(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}
