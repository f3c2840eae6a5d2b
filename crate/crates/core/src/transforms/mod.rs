//! Wavelet and DCT transforms.

mod cdf97;
mod dct;

pub use cdf97::{cdf97_forward, cdf97_inverse, lifting, Boundary, WaveletSpec};
pub use dct::{dct2_block, Dct2, Direction};
