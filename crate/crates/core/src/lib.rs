// SPDX-License-Identifier: Apache-2.0

//! Numerical core for a reparameterizable detection backbone: box
//! regression losses, structural reparameterization, sparse masked
//! convolution pretraining and detection metrics.

pub mod error;
pub mod eval;
pub mod init;
pub mod io;
pub mod loss;
#[cfg(any(test, feature = "oracles"))]
pub mod oracle;
pub mod repvit;
pub mod spark;
pub mod tensor;

pub use error::{Error, Result};
pub use loss::{BBox, BoxGeometry, LossConfig, LossVariant, WiouState};
pub use tensor::{Activation, BnParams, ConvParams, DType, Scalar, Tensor};
