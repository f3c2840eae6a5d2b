//! Coefficient-thresholding baselines: whole-image CDF 9/7 and 8x8 block DCT.
//!
//! Both keep the `K` largest-magnitude transform coefficients, with `K` the
//! smallest count whose rounded reconstruction reaches the PSNR target.

use std::time::Instant;

use crate::image::{assemble, partition, BlockPartition, ImageArray};
use crate::metrics::{psnr, Method, QualityReport};
use crate::transforms::{cdf97_forward, cdf97_inverse, Dct2, Direction, WaveletSpec};
use crate::{Error, Result};

/// How many single-coefficient steps below the bisection result are tried.
/// Rounding makes PSNR(K) only approximately monotone.
const FINE_STEPS: usize = 8;

#[derive(Debug, Clone)]
pub struct BaselineOutcome {
    pub report: QualityReport,
    pub reconstruction: ImageArray,
    pub kept: usize,
}

/// Indices of `values` by decreasing magnitude; ties keep index order.
pub fn rank_by_magnitude(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()));
    order
}

/// Copy of `values` with everything but the first `k` ranked entries zeroed.
pub fn keep_top(values: &[f64], order: &[usize], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    for &i in &order[..k] {
        out[i] = values[i];
    }
    out
}

/// Smallest `k` in `lo..=hi` with `passes(k)`, assuming `passes(hi)` and a
/// roughly monotone predicate.
fn smallest_passing(mut lo: usize, mut hi: usize, mut passes: impl FnMut(usize) -> Result<bool>) -> Result<usize> {
    let floor = lo;
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if passes(mid)? {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    for _ in 0..FINE_STEPS {
        if hi == floor || !passes(hi - 1)? {
            break;
        }
        hi -= 1;
    }
    Ok(hi)
}

fn check_target(image: &ImageArray, psnr_target: f64) -> Result<()> {
    if psnr_target.is_nan() || psnr_target <= 0.0 {
        return Err(Error::invalid(format!("bad PSNR target {psnr_target}")));
    }
    if !image.is_intensity() {
        return Err(Error::invalid("baselines expect an intensity image"));
    }
    Ok(())
}

/// Whole-image wavelet coefficients ranked by magnitude.
#[derive(Debug, Clone)]
pub struct DwtCoefficients {
    pub spec: WaveletSpec,
    pub coefficients: ImageArray,
    pub order: Vec<usize>,
    pub nonzero: usize,
}

impl DwtCoefficients {
    pub fn new(image: &ImageArray, levels: usize) -> Result<Self> {
        let spec = WaveletSpec::new(levels);
        let coefficients = cdf97_forward(image, &spec)?;
        let order = rank_by_magnitude(coefficients.data());
        let nonzero = coefficients.data().iter().filter(|v| **v != 0.0).count();
        Ok(Self {
            spec,
            coefficients,
            order,
            nonzero,
        })
    }

    /// Unrounded reconstruction from the `k` largest coefficients.
    pub fn reconstruct(&self, k: usize) -> Result<ImageArray> {
        let c = &self.coefficients;
        let kept = ImageArray::new(c.width(), c.height(), c.bit_depth(), keep_top(c.data(), &self.order, k))?;
        cdf97_inverse(&kept, &self.spec)
    }
}

/// Keep the fewest CDF 9/7 coefficients (approximation band included) that
/// reach `psnr_target`; an infinite target keeps every nonzero coefficient.
pub fn dwt_threshold_baseline(image: &ImageArray, psnr_target: f64, levels: usize) -> Result<BaselineOutcome> {
    check_target(image, psnr_target)?;
    let start = Instant::now();
    let dwt = DwtCoefficients::new(image, levels)?;
    let passes = |k: usize| -> Result<bool> {
        let rec = dwt.reconstruct(k)?.to_intensity();
        Ok(psnr(image, &rec)? >= psnr_target)
    };
    if !passes(dwt.nonzero)? {
        return Err(Error::TargetUnreachable(format!(
            "DWT baseline cannot reach {psnr_target} dB even with all coefficients"
        )));
    }
    let kept = if psnr_target.is_infinite() {
        dwt.nonzero
    } else {
        smallest_passing(0, dwt.nonzero, passes)?
    };
    let reconstruction = dwt.reconstruct(kept)?.to_intensity();
    let mut report = QualityReport::measure(Method::DwtBaseline, image, &reconstruction, kept, None, Some(levels))?;
    report.elapsed_secs = start.elapsed().as_secs_f64();
    Ok(BaselineOutcome {
        report,
        reconstruction,
        kept,
    })
}

/// 8x8 block DCT coefficients of an image, ranked globally by magnitude.
#[derive(Debug, Clone)]
pub struct DctCoefficients {
    partition: BlockPartition,
    dct: Dct2,
    /// Block `q` occupies `values[64 q..64 (q + 1)]`.
    pub values: Vec<f64>,
    pub order: Vec<usize>,
    /// `energy_prefix[k]` is the energy of the `k` largest coefficients.
    pub energy_prefix: Vec<f64>,
    pub nonzero: usize,
}

pub const DCT_BLOCK: usize = 8;

impl DctCoefficients {
    pub fn new(image: &ImageArray) -> Result<Self> {
        if image.width() < DCT_BLOCK || image.height() < DCT_BLOCK {
            return Err(Error::invalid(format!(
                "block DCT needs both dimensions >= {DCT_BLOCK}, got {}x{}",
                image.width(),
                image.height()
            )));
        }
        let partition = partition(image, DCT_BLOCK)?;
        let dct = Dct2::new(DCT_BLOCK);
        let values: Vec<f64> = partition
            .blocks
            .iter()
            .flat_map(|b| dct.apply(b, Direction::Forward).data().to_vec())
            .collect();
        let order = rank_by_magnitude(&values);
        let mut energy_prefix = Vec::with_capacity(values.len() + 1);
        let mut acc = 0.0;
        energy_prefix.push(0.0);
        for &i in &order {
            acc += values[i] * values[i];
            energy_prefix.push(acc);
        }
        let nonzero = values.iter().filter(|v| **v != 0.0).count();
        Ok(Self {
            partition,
            dct,
            values,
            order,
            energy_prefix,
            nonzero,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Pre-rounding MSE of the `k`-term reconstruction predicted from the
    /// discarded energy (Parseval). Exact without padding, an upper bound
    /// with it.
    pub fn predicted_mse(&self, k: usize) -> f64 {
        let total = self.energy_prefix[self.len()];
        let discarded = (total - self.energy_prefix[k]).max(0.0);
        discarded / (self.partition.grid.width * self.partition.grid.height) as f64
    }

    /// Unrounded reconstruction from the `k` largest coefficients.
    pub fn reconstruct(&self, k: usize) -> Result<ImageArray> {
        let kept = keep_top(&self.values, &self.order, k);
        let area = DCT_BLOCK * DCT_BLOCK;
        let blocks = kept
            .chunks_exact(area)
            .map(|c| {
                let b = crate::image::Block::from_vec(DCT_BLOCK, c.to_vec())?;
                Ok(self.dct.apply(&b, Direction::Inverse))
            })
            .collect::<Result<Vec<_>>>()?;
        assemble(&self.partition.with_blocks(blocks))
    }
}

/// Keep the fewest block-DCT coefficients, ranked across all blocks, that
/// reach `psnr_target`. The energy bookkeeping gives the starting estimate;
/// the final count is verified on the rounded reconstruction.
pub fn dct_threshold_baseline(image: &ImageArray, psnr_target: f64) -> Result<BaselineOutcome> {
    check_target(image, psnr_target)?;
    let start = Instant::now();
    let dct = DctCoefficients::new(image)?;
    let passes = |k: usize| -> Result<bool> {
        let rec = dct.reconstruct(k)?.to_intensity();
        Ok(psnr(image, &rec)? >= psnr_target)
    };
    if !passes(dct.nonzero)? {
        return Err(Error::TargetUnreachable(format!(
            "DCT baseline cannot reach {psnr_target} dB even with all coefficients"
        )));
    }
    let kept = if psnr_target.is_infinite() {
        dct.nonzero
    } else {
        let target = crate::pursuit::target_mse(psnr_target, image.bit_depth());
        let estimate = (0..=dct.nonzero)
            .find(|&k| dct.predicted_mse(k) <= target)
            .unwrap_or(dct.nonzero);
        if passes(estimate)? {
            smallest_passing(0, estimate, passes)?
        } else {
            smallest_passing(estimate + 1, dct.nonzero, passes)?
        }
    };
    let reconstruction = dct.reconstruct(kept)?.to_intensity();
    let mut report =
        QualityReport::measure(Method::DctBaseline, image, &reconstruction, kept, Some(DCT_BLOCK), None)?;
    report.elapsed_secs = start.elapsed().as_secs_f64();
    Ok(BaselineOutcome {
        report,
        reconstruction,
        kept,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(w: usize, h: usize) -> ImageArray {
        ImageArray::from_fn(w, h, 8, |r, c| {
            let v = 100.0 + 0.8 * r as f64 + 40.0 * ((c as f64) / 7.0).sin() + ((r * c) % 5) as f64;
            v.round().clamp(0.0, 255.0)
        })
        .unwrap()
    }

    #[test]
    fn ranking_is_stable() {
        let order = rank_by_magnitude(&[1.0, -3.0, 3.0, 0.0, 2.0]);
        assert_eq!(order, vec![1, 2, 4, 0, 3]);
        assert_eq!(keep_top(&[1.0, -3.0, 3.0], &[1, 2, 0], 2), vec![0.0, -3.0, 3.0]);
    }

    #[test]
    fn infinite_target_keeps_all_nonzero() {
        let img = fixture(32, 24);
        let dwt = dwt_threshold_baseline(&img, f64::INFINITY, 3).unwrap();
        assert_eq!(dwt.kept, DwtCoefficients::new(&img, 3).unwrap().nonzero);
        assert_eq!(dwt.report.psnr, f64::INFINITY);
        let dct = dct_threshold_baseline(&img, f64::INFINITY).unwrap();
        assert_eq!(dct.reconstruction, img);
        assert_eq!(dct.kept, DctCoefficients::new(&img).unwrap().nonzero);
    }

    #[test]
    fn constant_image_keeps_one_dc_per_block() {
        let img = ImageArray::from_fn(32, 16, 8, |_, _| 77.0).unwrap();
        for target in [30.0, 45.0, 60.0] {
            let out = dct_threshold_baseline(&img, target).unwrap();
            assert_eq!(out.kept, 8);
            assert_eq!(out.report.sr, 64.0);
        }
    }

    #[test]
    fn counts_grow_with_target() {
        let img = fixture(48, 40);
        let mut prev_dwt = 0;
        let mut prev_dct = 0;
        for target in [28.0, 34.0, 40.0, 46.0, 52.0] {
            let dwt = dwt_threshold_baseline(&img, target, 3).unwrap();
            let dct = dct_threshold_baseline(&img, target).unwrap();
            assert!(dwt.report.psnr >= target && dct.report.psnr >= target);
            assert!(dwt.kept >= prev_dwt && dct.kept >= prev_dct);
            prev_dwt = dwt.kept;
            prev_dct = dct.kept;
        }
    }

    #[test]
    fn dct_bookkeeping_matches_pixel_error() {
        let img = fixture(32, 32);
        let dct = DctCoefficients::new(&img).unwrap();
        for k in [0, 5, 40, 200, 1000] {
            let rec = dct.reconstruct(k).unwrap();
            let measured = crate::metrics::mse(&img, &rec).unwrap();
            let predicted = dct.predicted_mse(k);
            assert!((measured - predicted).abs() <= 1e-10 * predicted.max(1.0), "{measured} {predicted}");
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let img = fixture(32, 32);
        assert!(dct_threshold_baseline(&fixture(7, 32), 40.0).is_err());
        assert!(dwt_threshold_baseline(&img, f64::NAN, 3).is_err());
        assert!(dwt_threshold_baseline(&img, 40.0, 9).is_err());
        let frac = ImageArray::from_fn(16, 16, 8, |_, _| 0.5).unwrap();
        assert!(dct_threshold_baseline(&frac, 40.0).is_err());
    }
}
