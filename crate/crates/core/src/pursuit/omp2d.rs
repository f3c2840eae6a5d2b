use crate::dictionary::SeparableDictionary;
use crate::image::{dot, AtomicDecomposition, Block};
use crate::Result;

use super::{argmax_abs, correlations, ResidualState, Selection, StopRule};

/// Orthogonalized norm below which a new atom counts as linearly dependent.
const DEPENDENCE_THRESHOLD: f64 = 1e-10;

/// Relative residual norm treated as an exact representation.
const EXACT_RESIDUAL: f64 = 1e-12;

/// Selected atoms `A_n`, their orthonormalized versions `W_n` and the
/// biorthogonal set `B_n` (`<B_i, A_j> = δ_ij`), each flattened row-major.
#[derive(Debug, Clone, Default)]
pub struct OrthoBasisState {
    pub atoms: Vec<Vec<f64>>,
    pub orthonormal: Vec<Vec<f64>>,
    pub biorthogonal: Vec<Vec<f64>>,
}

impl OrthoBasisState {
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Orthogonalize `a` against the current `W` set with one
    /// re-orthogonalization pass. Returns the unnormalized remainder and its
    /// norm.
    fn orthogonalize(&self, a: &[f64]) -> (Vec<f64>, f64) {
        let mut w = a.to_vec();
        for _pass in 0..2 {
            for wi in &self.orthonormal {
                let p = dot(wi, &w);
                for (v, &x) in w.iter_mut().zip(wi) {
                    *v -= p * x;
                }
            }
        }
        let norm = dot(&w, &w).sqrt();
        (w, norm)
    }

    /// Append `a` whose orthogonal remainder `w` has norm `norm`.
    fn push(&mut self, a: Vec<f64>, mut w: Vec<f64>, norm: f64) {
        // B_new = w / |w|^2, B_n -= B_new <A_new, B_n>
        let b_new: Vec<f64> = w.iter().map(|v| v / (norm * norm)).collect();
        for b in &mut self.biorthogonal {
            let s = dot(&a, b);
            for (v, &x) in b.iter_mut().zip(&b_new) {
                *v -= s * x;
            }
        }
        for v in &mut w {
            *v /= norm;
        }
        self.atoms.push(a);
        self.orthonormal.push(w);
        self.biorthogonal.push(b_new);
    }
}

/// OMP2D engine for one block.
#[derive(Debug, Clone)]
pub struct Omp2d<'d> {
    dict: &'d SeparableDictionary,
    target: Block,
    state: ResidualState,
    basis: OrthoBasisState,
    candidate: Option<Selection>,
    floor_sq: f64,
}

impl<'d> Omp2d<'d> {
    pub fn new(block: &Block, q: usize, dict: &'d SeparableDictionary) -> Self {
        let state = ResidualState::new(block, q);
        let floor = EXACT_RESIDUAL * block.norm();
        let mut engine = Self {
            dict,
            target: block.clone(),
            state,
            basis: OrthoBasisState::default(),
            candidate: None,
            floor_sq: floor * floor,
        };
        engine.refresh_candidate();
        engine
    }

    fn refresh_candidate(&mut self) {
        let res_sq = self.state.residual.norm_sq();
        let full = self.basis.len() >= self.target.data().len();
        self.candidate = if res_sq == 0.0 || res_sq <= self.floor_sq || full {
            None
        } else {
            let c = correlations(&self.state.residual, self.dict);
            argmax_abs(&c, &self.state.mask).map(|(i, value)| Selection {
                pair: crate::image::AtomPair::new(i / self.dict.my(), i % self.dict.my()),
                value,
            })
        };
    }

    pub fn candidate(&self) -> Option<Selection> {
        self.candidate
    }

    /// Add the current candidate. Candidates that turn out to be linearly
    /// dependent on the selected atoms are masked and the next one is tried.
    /// Returns `false` once nothing can be added.
    pub fn step(&mut self) -> bool {
        let my = self.dict.my();
        while let Some(sel) = self.candidate {
            let a = self.dict.atom_2d(sel.pair).expect("selection inside dictionary");
            let a = a.data().to_vec();
            let (w, norm) = self.basis.orthogonalize(&a);
            self.state.mask_pair(sel.pair, my);
            if norm < DEPENDENCE_THRESHOLD {
                self.refresh_candidate();
                continue;
            }
            self.basis.push(a, w, norm);
            let wn = self.basis.orthonormal.last().unwrap();
            let p = dot(wn, self.state.residual.data());
            for (r, &x) in self.state.residual.data_mut().iter_mut().zip(wn) {
                *r -= p * x;
            }
            self.state.decomposition.atoms.push(sel.pair);
            self.state.decomposition.coefficients = self
                .basis
                .biorthogonal
                .iter()
                .map(|b| dot(b, self.target.data()))
                .collect();
            self.refresh_candidate();
            return true;
        }
        false
    }

    pub fn residual(&self) -> &Block {
        &self.state.residual
    }

    pub fn decomposition(&self) -> &AtomicDecomposition {
        &self.state.decomposition
    }

    pub fn into_decomposition(self) -> AtomicDecomposition {
        self.state.decomposition
    }

    pub fn basis(&self) -> &OrthoBasisState {
        &self.basis
    }

    pub fn state(&self) -> &ResidualState {
        &self.state
    }
}

/// Orthogonal matching pursuit on one block until `stop` holds or the block
/// is represented exactly.
pub fn omp2d(block: &Block, dict: &SeparableDictionary, stop: &StopRule) -> Result<AtomicDecomposition> {
    stop.validate()?;
    if block.size() != dict.block_size() {
        return Err(crate::Error::invalid(format!(
            "block size {} does not match dictionary block size {}",
            block.size(),
            dict.block_size()
        )));
    }
    if block.data().iter().any(|v| !v.is_finite()) {
        return Err(crate::Error::invalid("block contains non-finite values"));
    }
    let mut engine = Omp2d::new(block, 0, dict);
    let pixels = block.data().len();
    while !stop.reached(engine.decomposition().len(), engine.residual().norm_sq(), pixels) {
        if !engine.step() {
            break;
        }
    }
    Ok(engine.into_decomposition())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::{build_mixed, DictionaryConfig};
    use crate::image::AtomPair;

    fn dict8() -> SeparableDictionary {
        build_mixed(&DictionaryConfig::with_block_size(8)).unwrap()
    }

    fn rand_block(seed: u64) -> Block {
        let mut s = seed ^ 0xDEADBEEF;
        let data = (0..64)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 200.0 - 100.0
            })
            .collect();
        Block::from_vec(8, data).unwrap()
    }

    #[test]
    fn single_scaled_atom() {
        let dict = dict8();
        let mut block = dict.atom_2d(AtomPair::new(0, 0)).unwrap();
        for v in block.data_mut() {
            *v *= 2.5;
        }
        let d = omp2d(&block, &dict, &StopRule::ResidualTolerance(1e-9)).unwrap();
        assert_eq!(d.atoms, vec![AtomPair::new(0, 0)]);
        assert!((d.coefficients[0] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn residual_strictly_decreases_and_stays_orthogonal() {
        let dict = dict8();
        for seed in 0..10 {
            let block = rand_block(seed);
            let mut e = Omp2d::new(&block, 0, &dict);
            let mut prev = block.norm_sq();
            for _ in 0..30 {
                assert!(e.step());
                let now = e.residual().norm_sq();
                assert!(now < prev);
                prev = now;
            }
            let b = e.basis();
            for wn in &b.orthonormal {
                assert!(dot(wn, e.residual().data()).abs() <= 1e-8 * block.norm());
            }
            for (i, wi) in b.orthonormal.iter().enumerate() {
                for (j, wj) in b.orthonormal.iter().enumerate() {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((dot(wi, wj) - expect).abs() <= 1e-9);
                }
            }
            for (i, bi) in b.biorthogonal.iter().enumerate() {
                for (j, aj) in b.atoms.iter().enumerate() {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((dot(bi, aj) - expect).abs() <= 1e-8);
                }
            }
            // stored residual agrees with U - sum c A
            let d = e.decomposition();
            let mut recomputed = block.clone();
            recomputed.axpy(-1.0, &dict.synthesize(&d.atoms, &d.coefficients));
            let diff: f64 = recomputed
                .data()
                .iter()
                .zip(e.residual().data())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(diff <= 1e-9 * block.norm());
        }
    }

    #[test]
    fn full_run_reaches_exact_representation() {
        let dict = dict8();
        let block = rand_block(77);
        let d = omp2d(&block, &dict, &StopRule::ResidualTolerance(0.0)).unwrap();
        assert!(d.len() <= 64);
        d.validate(8).unwrap();
        let approx = dict.synthesize(&d.atoms, &d.coefficients);
        let err: f64 = approx
            .data()
            .iter()
            .zip(block.data())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(err <= 1e-9 * block.norm());
    }

    #[test]
    fn zero_block_needs_no_atoms() {
        let dict = dict8();
        let d = omp2d(&Block::zeros(8), &dict, &StopRule::MaxAtoms(5)).unwrap();
        assert!(d.is_empty());
    }

    #[test]
    fn size_mismatch_rejected() {
        let dict = dict8();
        assert!(omp2d(&Block::zeros(4), &dict, &StopRule::MaxAtoms(1)).is_err());
    }
}
