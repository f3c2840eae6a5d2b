//! Seeded synthetic images that are sparse in the dictionary, in the wavelet
//! domain.
//!
//! A flat approximation band sets the background. Random 2D dictionary atoms
//! are dropped onto block-aligned positions inside detail subbands, the
//! result is inverse transformed, Gaussian noise is added and the image is
//! rounded and clamped.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dictionary::SeparableDictionary;
use crate::image::{AtomPair, ImageArray};
use crate::metrics::psnr_from_mse;
use crate::transforms::{cdf97_inverse, WaveletSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub width: usize,
    pub height: usize,
    pub bit_depth: u8,
    pub levels: usize,
    /// Number of random atoms placed in detail subbands.
    pub atoms: usize,
    /// Atom coefficient magnitudes are uniform in this range, signs random.
    pub amplitude: (f64, f64),
    /// Background intensity set through the approximation band.
    pub mean: f64,
    /// Standard deviation of the additive pixel noise.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// 256x256 8-bit, 5 levels, 100 atoms, noise well below 55 dB PSNR.
    pub fn standard(seed: u64) -> Self {
        Self {
            width: 256,
            height: 256,
            bit_depth: 8,
            levels: 5,
            atoms: 100,
            amplitude: (30.0, 120.0),
            mean: 128.0,
            noise_sigma: 0.25,
            seed,
        }
    }
}

/// Where one atom went: subband block origin in the coefficient array.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Placement {
    pub row: usize,
    pub col: usize,
    pub pair: AtomPair,
    pub coefficient: f64,
}

#[derive(Debug, Clone)]
pub struct SyntheticImage {
    pub image: ImageArray,
    /// Noise-free, unrounded image.
    pub clean: ImageArray,
    /// PSNR of `image` against `clean`: the noise floor including rounding.
    pub noise_psnr: f64,
    pub placements: Vec<Placement>,
}

pub fn wavelet_sparse_image(spec: &SyntheticSpec, dict: &SeparableDictionary) -> Result<SyntheticImage> {
    let nb = dict.block_size();
    let (w, h, levels) = (spec.width, spec.height, spec.levels);
    if levels == 0 || w % (nb << levels) != 0 || h % (nb << levels) != 0 {
        return Err(Error::invalid(format!(
            "synthetic image {w}x{h} must be a multiple of N_b 2^levels = {}",
            nb << levels
        )));
    }
    let (lo, hi) = spec.amplitude;
    if lo.is_nan() || hi.is_nan() || lo <= 0.0 || hi < lo || spec.noise_sigma.is_nan() || spec.noise_sigma < 0.0 {
        return Err(Error::invalid("bad amplitude range or noise level"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut coef = ImageArray::zeros(w, h, spec.bit_depth)?;

    // the 2D lowpass has DC gain 2 per level
    let ll = spec.mean * (1u64 << levels) as f64;
    let (lw, lh) = (w >> levels, h >> levels);
    for r in 0..lh {
        for c in 0..lw {
            coef.set(r, c, ll);
        }
    }

    let mut placements = Vec::with_capacity(spec.atoms);
    for _ in 0..spec.atoms {
        let level = rng.random_range(1..=levels);
        let (sw, sh) = (w >> level, h >> level);
        // HL, LH or HH quadrant of this level
        let (r0, c0) = match rng.random_range(0..3) {
            0 => (0, sw),
            1 => (sh, 0),
            _ => (sh, sw),
        };
        let row = r0 + nb * rng.random_range(0..sh / nb);
        let col = c0 + nb * rng.random_range(0..sw / nb);
        let pair = AtomPair::new(rng.random_range(0..dict.mx()), rng.random_range(0..dict.my()));
        let mag = rng.random_range(spec.amplitude.0..=spec.amplitude.1);
        let coefficient = if rng.random_bool(0.5) { mag } else { -mag };
        let atom = dict.atom_2d(pair)?;
        for i in 0..nb {
            for j in 0..nb {
                let v = coef.get(row + i, col + j) + coefficient * atom.get(i, j);
                coef.set(row + i, col + j, v);
            }
        }
        placements.push(Placement {
            row,
            col,
            pair,
            coefficient,
        });
    }

    let clean = cdf97_inverse(&coef, &WaveletSpec::new(levels))?;
    let mut noisy = clean.clone();
    if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::invalid(e.to_string()))?;
        for v in noisy.data_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    let image = noisy.to_intensity();
    let mse = clean
        .data()
        .iter()
        .zip(image.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / clean.pixel_count() as f64;
    Ok(SyntheticImage {
        noise_psnr: psnr_from_mse(mse, spec.bit_depth),
        image,
        clean,
        placements,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::{build_mixed, DictionaryConfig};

    #[test]
    fn seeded_and_quiet() {
        let dict = build_mixed(&DictionaryConfig::with_block_size(8)).unwrap();
        let spec = SyntheticSpec::standard(7);
        let a = wavelet_sparse_image(&spec, &dict).unwrap();
        let b = wavelet_sparse_image(&spec, &dict).unwrap();
        assert_eq!(a.image, b.image);
        assert_eq!(a.placements.len(), 100);
        assert!(a.noise_psnr >= 55.0, "{}", a.noise_psnr);
        assert!(a.image.is_intensity());
        let other = wavelet_sparse_image(&SyntheticSpec::standard(8), &dict).unwrap();
        assert_ne!(a.image, other.image);
    }

    #[test]
    fn rejects_misaligned_size() {
        let dict = build_mixed(&DictionaryConfig::with_block_size(8)).unwrap();
        let mut spec = SyntheticSpec::standard(0);
        spec.width = 200;
        assert!(wavelet_sparse_image(&spec, &dict).is_err());
    }
}
