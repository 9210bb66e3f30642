//! Token-reduction-free high-resolution image encoder building blocks:
//! streaming attention kernels, window layouts, state-space scans,
//! multi-scale packing, an encoder backbone and the click-based
//! evaluation protocol.

pub mod attention;
pub mod encoder;
mod error;
pub mod evalproto;
pub mod io;
pub mod multiscale;
pub mod nn;
pub mod oracle;
pub mod rng;
mod scratch;
pub mod ssm;
pub mod tensor;
pub mod window;

pub use error::{Error, Result};
pub use tensor::{DType, Scalar, Tensor};
