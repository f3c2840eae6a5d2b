//! Multilevel 2D CDF 9/7 wavelet transform by lifting.
//!
//! Each level transforms the rows and then the columns of the current
//! approximation region; lowpass samples go first, so the approximation band
//! ends up in the top-left corner recursively. Odd lengths are handled by
//! whole-point symmetric extension (`x[-1] = x[1]`, `x[n] = x[n-2]`).
//!
//! The scaling gives the lowpass branch a DC gain of `sqrt(2)`, which makes the
//! transform close to orthonormal.

use crate::image::ImageArray;
use crate::{Error, Result};

/// Lifting coefficients of the CDF 9/7 factorization.
pub mod lifting {
    pub const ALPHA: f64 = -1.586_134_342_059_924;
    pub const BETA: f64 = -0.052_980_118_572_961;
    pub const GAMMA: f64 = 0.882_911_075_530_934;
    pub const DELTA: f64 = 0.443_506_852_043_971;
    /// Lowpass samples are multiplied, highpass samples divided by this.
    pub const ZETA: f64 = 1.149_604_398_860_243;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Boundary {
    #[default]
    Symmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WaveletSpec {
    pub levels: usize,
    pub boundary: Boundary,
}

impl WaveletSpec {
    pub fn new(levels: usize) -> Self {
        Self {
            levels,
            boundary: Boundary::Symmetric,
        }
    }

    fn check(&self, width: usize, height: usize) -> Result<()> {
        let min_dim = width.min(height);
        if self.levels == 0 {
            return Err(Error::invalid("wavelet levels must be at least 1"));
        }
        if self.levels >= usize::BITS as usize || (1usize << self.levels) > min_dim {
            return Err(Error::invalid(format!(
                "{} wavelet levels exceed log2 of the smallest dimension {min_dim}",
                self.levels
            )));
        }
        Ok(())
    }
}

impl Default for WaveletSpec {
    fn default() -> Self {
        Self::new(5)
    }
}

pub fn cdf97_forward(arr: &ImageArray, spec: &WaveletSpec) -> Result<ImageArray> {
    spec.check(arr.width(), arr.height())?;
    let mut out = arr.clone();
    let regions = level_regions(arr.width(), arr.height(), spec.levels);
    let mut buf = Vec::new();
    let mut scratch = Vec::new();
    for &(w, h) in &regions {
        transform_region(&mut out, w, h, &mut buf, &mut scratch, forward_1d);
    }
    Ok(out)
}

/// Inverse of [`cdf97_forward`] with the same spec. No rounding or clamping.
pub fn cdf97_inverse(arr: &ImageArray, spec: &WaveletSpec) -> Result<ImageArray> {
    spec.check(arr.width(), arr.height())?;
    let mut out = arr.clone();
    let regions = level_regions(arr.width(), arr.height(), spec.levels);
    let mut buf = Vec::new();
    let mut scratch = Vec::new();
    for &(w, h) in regions.iter().rev() {
        inverse_region(&mut out, w, h, &mut buf, &mut scratch);
    }
    Ok(out)
}

fn level_regions(width: usize, height: usize, levels: usize) -> Vec<(usize, usize)> {
    let mut regions = Vec::with_capacity(levels);
    let (mut w, mut h) = (width, height);
    for _ in 0..levels {
        regions.push((w, h));
        w = w.div_ceil(2);
        h = h.div_ceil(2);
    }
    regions
}

type Lift = fn(&mut [f64], &mut Vec<f64>);

fn transform_region(
    arr: &mut ImageArray,
    w: usize,
    h: usize,
    buf: &mut Vec<f64>,
    scratch: &mut Vec<f64>,
    lift: Lift,
) {
    let stride = arr.width();
    let data = arr.data_mut();
    for r in 0..h {
        lift(&mut data[r * stride..r * stride + w], scratch);
    }
    for c in 0..w {
        gather_column(data, stride, c, h, buf);
        lift(buf, scratch);
        scatter_column(data, stride, c, buf);
    }
}

fn inverse_region(
    arr: &mut ImageArray,
    w: usize,
    h: usize,
    buf: &mut Vec<f64>,
    scratch: &mut Vec<f64>,
) {
    let stride = arr.width();
    let data = arr.data_mut();
    for c in 0..w {
        gather_column(data, stride, c, h, buf);
        inverse_1d(buf, scratch);
        scatter_column(data, stride, c, buf);
    }
    for r in 0..h {
        inverse_1d(&mut data[r * stride..r * stride + w], scratch);
    }
}

fn gather_column(data: &[f64], stride: usize, c: usize, h: usize, buf: &mut Vec<f64>) {
    buf.clear();
    buf.extend((0..h).map(|r| data[r * stride + c]));
}

fn scatter_column(data: &mut [f64], stride: usize, c: usize, buf: &[f64]) {
    for (r, &v) in buf.iter().enumerate() {
        data[r * stride + c] = v;
    }
}

// s = even samples, d = odd samples
fn predict(s: &[f64], d: &mut [f64], k: f64) {
    let ne = s.len();
    for (i, di) in d.iter_mut().enumerate() {
        let right = if i + 1 < ne { s[i + 1] } else { s[ne - 1] };
        *di += k * (s[i] + right);
    }
}

fn update(s: &mut [f64], d: &[f64], k: f64) {
    let no = d.len();
    for (i, si) in s.iter_mut().enumerate() {
        let left = if i == 0 { d[0] } else { d[i - 1] };
        let right = if i < no { d[i] } else { d[no - 1] };
        *si += k * (left + right);
    }
}

fn forward_1d(x: &mut [f64], scratch: &mut Vec<f64>) {
    use lifting::*;
    let n = x.len();
    if n < 2 {
        return;
    }
    let ne = n.div_ceil(2);
    scratch.clear();
    scratch.extend(x.iter().step_by(2));
    scratch.extend(x.iter().skip(1).step_by(2));
    let (s, d) = scratch.split_at_mut(ne);
    predict(s, d, ALPHA);
    update(s, d, BETA);
    predict(s, d, GAMMA);
    update(s, d, DELTA);
    for v in s.iter_mut() {
        *v *= ZETA;
    }
    for v in d.iter_mut() {
        *v /= ZETA;
    }
    x.copy_from_slice(scratch);
}

fn inverse_1d(x: &mut [f64], scratch: &mut Vec<f64>) {
    use lifting::*;
    let n = x.len();
    if n < 2 {
        return;
    }
    let ne = n.div_ceil(2);
    scratch.clear();
    scratch.extend_from_slice(x);
    let (s, d) = scratch.split_at_mut(ne);
    for v in s.iter_mut() {
        *v /= ZETA;
    }
    for v in d.iter_mut() {
        *v *= ZETA;
    }
    update(s, d, -DELTA);
    predict(s, d, -GAMMA);
    update(s, d, -BETA);
    predict(s, d, -ALPHA);
    for (i, v) in x.iter_mut().enumerate() {
        *v = if i % 2 == 0 { s[i / 2] } else { d[i / 2] };
    }
}
