//! Orthonormal 2D DCT-II / DCT-III on square blocks.

use std::f64::consts::PI;

use crate::image::Block;
use crate::{Error, Result};

type Entry<'a> = &'a dyn Fn(usize, usize) -> f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Precomputed orthonormal DCT-II basis for blocks of one size.
#[derive(Debug, Clone)]
pub struct Dct2 {
    size: usize,
    // basis[k * size + n] = a_k cos(pi (2n + 1) k / (2 size))
    basis: Vec<f64>,
}

impl Dct2 {
    pub fn new(size: usize) -> Self {
        let mut basis = Vec::with_capacity(size * size);
        for k in 0..size {
            let a = if k == 0 {
                (1.0 / size as f64).sqrt()
            } else {
                (2.0 / size as f64).sqrt()
            };
            for n in 0..size {
                basis.push(a * (PI * (2 * n + 1) as f64 * k as f64 / (2 * size) as f64).cos());
            }
        }
        Self { size, basis }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn apply(&self, block: &Block, direction: Direction) -> Block {
        assert_eq!(block.size(), self.size, "DCT size mismatch");
        let n = self.size;
        let c = &self.basis;
        // forward: C X C^T, inverse: C^T Y C
        let (first, second): (Entry<'_>, Entry<'_>) = match direction {
            Direction::Forward => (&|k, i| c[k * n + i], &|k, j| c[k * n + j]),
            Direction::Inverse => (&|i, k| c[k * n + i], &|j, k| c[k * n + j]),
        };
        let mut tmp = vec![0.0; n * n];
        for r in 0..n {
            for col in 0..n {
                tmp[r * n + col] = (0..n).map(|i| first(r, i) * block.get(i, col)).sum();
            }
        }
        let mut out = Block::zeros(n);
        for r in 0..n {
            for col in 0..n {
                let v = (0..n).map(|j| tmp[r * n + j] * second(col, j)).sum();
                out.set(r, col, v);
            }
        }
        out
    }
}

/// 8x8 orthonormal DCT used by the block-DCT baseline.
pub fn dct2_block(block: &Block, direction: Direction) -> Result<Block> {
    if block.size() != 8 {
        return Err(Error::invalid(format!(
            "dct2_block needs an 8x8 block, got {0}x{0}",
            block.size()
        )));
    }
    Ok(Dct2::new(8).apply(block, direction))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pseudo_block(seed: u64) -> Block {
        let mut s = seed;
        let data = (0..64)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
                ((s >> 33) % 1000) as f64 / 7.0 - 60.0
            })
            .collect();
        Block::from_vec(8, data).unwrap()
    }

    #[test]
    fn constant_gives_dc_only() {
        let b = Block::from_vec(8, vec![3.0; 64]).unwrap();
        let y = dct2_block(&b, Direction::Forward).unwrap();
        assert!((y.get(0, 0) - 24.0).abs() < 1e-12);
        for i in 1..64 {
            assert!(y.data()[i].abs() < 1e-12);
        }
    }

    #[test]
    fn parseval_and_round_trip() {
        for seed in 0..20 {
            let x = pseudo_block(seed);
            let y = dct2_block(&x, Direction::Forward).unwrap();
            assert!((y.norm() - x.norm()).abs() <= 1e-12 * x.norm());
            let back = dct2_block(&y, Direction::Inverse).unwrap();
            let rms = (back
                .data()
                .iter()
                .zip(x.data())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                / 64.0)
                .sqrt();
            assert!(rms <= 1e-12);
        }
    }

    #[test]
    fn wrong_size_rejected() {
        assert!(dct2_block(&Block::zeros(4), Direction::Forward).is_err());
    }
}
