#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use xsparse::dictionary::SeparableDictionary;
use xsparse::image::{AtomPair, AtomicDecomposition, Block, BlockPartition, ImageArray};

pub fn random_block(rng: &mut ChaCha8Rng, nb: usize) -> Block {
    Block::from_vec(nb, (0..nb * nb).map(|_| rng.random_range(-128.0..128.0)).collect()).unwrap()
}

/// Dense least-squares coefficients of `target` over `atoms` (SVD solve).
pub fn lstsq(dict: &SeparableDictionary, atoms: &[AtomPair], target: &Block) -> Vec<f64> {
    if atoms.is_empty() {
        return Vec::new();
    }
    let n = target.data().len();
    let cols: Vec<Block> = atoms.iter().map(|p| dict.atom_2d(*p).unwrap()).collect();
    let a = DMatrix::from_fn(n, atoms.len(), |i, j| cols[j].data()[i]);
    let b = DVector::from_column_slice(target.data());
    a.svd(true, true).solve(&b, 1e-12).unwrap().iter().copied().collect()
}

pub fn diff_norm(a: &Block, b: &Block) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// HBW forward selection recomputed from scratch every step: all
/// correlations of every block are rescanned pair by pair, and coefficients
/// come from a dense least-squares refit. Returns the `(q, pair)` sequence
/// and final decompositions.
pub fn brute_force_hbw(
    part: &BlockPartition,
    dict: &SeparableDictionary,
    k_total: usize,
) -> (Vec<(usize, AtomPair)>, Vec<AtomicDecomposition>) {
    let q_count = part.len();
    let mut selected: Vec<Vec<AtomPair>> = vec![Vec::new(); q_count];
    let mut residuals: Vec<Block> = part.blocks.clone();
    let mut history = Vec::new();
    for _ in 0..k_total {
        let mut best: Option<(f64, usize, AtomPair)> = None;
        for q in 0..q_count {
            for n in 0..dict.mx() {
                for m in 0..dict.my() {
                    let p = AtomPair::new(n, m);
                    if selected[q].contains(&p) {
                        continue;
                    }
                    let v = dict.correlate(&residuals[q], p).abs();
                    if best.is_none_or(|(b, _, _)| v > b) {
                        best = Some((v, q, p));
                    }
                }
            }
        }
        let (_, q, p) = best.expect("something to select");
        selected[q].push(p);
        history.push((q, p));
        let c = lstsq(dict, &selected[q], &part.blocks[q]);
        let mut r = part.blocks[q].clone();
        r.axpy(-1.0, &dict.synthesize(&selected[q], &c));
        residuals[q] = r;
    }
    let decomps = (0..q_count)
        .map(|q| {
            let c = lstsq(dict, &selected[q], &part.blocks[q]);
            let mut d = AtomicDecomposition::new(q);
            for (p, v) in selected[q].iter().zip(c) {
                d.push(*p, v);
            }
            d
        })
        .collect();
    (history, decomps)
}

/// The removal every single-step pruning oracle agrees on: the globally
/// smallest `|c|^2` (first block, then first position on ties), followed by
/// a least-squares refit of that block over its remaining atoms.
pub fn prune_one_oracle(
    part: &BlockPartition,
    decomps: &[AtomicDecomposition],
    dict: &SeparableDictionary,
) -> (usize, AtomPair, Block) {
    let mut best: Option<(f64, usize, usize)> = None;
    for (q, d) in decomps.iter().enumerate() {
        for (j, c) in d.coefficients.iter().enumerate() {
            let e = c * c;
            if best.is_none_or(|(b, _, _)| e < b) {
                best = Some((e, q, j));
            }
        }
    }
    let (_, q, j) = best.expect("something to prune");
    let mut atoms = decomps[q].atoms.clone();
    let removed = atoms.remove(j);
    let c = lstsq(dict, &atoms, &part.blocks[q]);
    (q, removed, dict.synthesize(&atoms, &c))
}

/// Smooth (`textured = false`) or busy reference image and a copy with a
/// small deterministic distortion.
pub fn ssim_fixture(textured: bool) -> (ImageArray, ImageArray) {
    let (h, w) = (64, 80);
    let reference = ImageArray::from_fn(w, h, 8, |r, c| {
        let (r, c) = (r as i64, c as i64);
        if textured {
            ((r * r + 3 * c * c + r * c) % 200 + 20) as f64
        } else {
            (20 + ((r - 32).pow(2) + (c - 40).pow(2)) / 20).min(255) as f64
        }
    })
    .unwrap();
    let distorted = ImageArray::from_fn(w, h, 8, |r, c| {
        let d = if textured {
            ((r * 5 + c) % 5) as f64 - 2.0
        } else {
            ((r * 7 + c * 3) % 3) as f64 - 1.0
        };
        (reference.get(r, c) + d).clamp(0.0, 255.0)
    })
    .unwrap();
    (reference, distorted)
}
