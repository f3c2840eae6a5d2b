//! Sparse representation of grayscale (X-ray class) images.
//!
//! Images are moved to the CDF 9/7 wavelet domain, cut into square blocks and
//! each block is approximated by a greedy pursuit over a large separable
//! dictionary built from cosine, sine and short local atoms. Blocks can be
//! processed independently (OMP2D, SPMP2D), ranked globally so every new atom
//! goes to the block where it reduces the error most (HBW), or pruned back
//! globally after an independent forward pass.
//!
//! DWT and block-DCT thresholding baselines, PSNR/MSSIM metrics and a corpus
//! benchmark harness live alongside.

pub mod baselines;
pub mod bench;
pub mod dictionary;
mod error;
pub mod format;
pub mod hbw;
pub mod image;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod pursuit;
pub mod synthetic;
pub mod transforms;

pub use error::{Error, Result};
