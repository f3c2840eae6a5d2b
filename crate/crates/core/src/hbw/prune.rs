use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::dictionary::SeparableDictionary;
use crate::image::{AtomPair, AtomicDecomposition, Block, BlockPartition};
use crate::pursuit::{project_iterative, StopRule, Tolerance};
use crate::{Error, Result};

use super::Ranked;

/// One committed removal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruneStep {
    pub block: usize,
    pub pair: AtomPair,
    pub coefficient: f64,
    /// Change in `||R_q||_F^2` caused by the removal and re-projection.
    pub distortion_increase: f64,
}

#[derive(Debug, Clone)]
struct PruneBlock {
    decomposition: AtomicDecomposition,
    residual: Block,
    eps: f64,
}

impl PruneBlock {
    /// Position `j^q` of the smallest `|c|^2` (first on ties).
    fn weakest(&self) -> Option<(usize, f64)> {
        let c = &self.decomposition.coefficients;
        let mut best: Option<(usize, f64)> = None;
        for (j, v) in c.iter().enumerate() {
            let e = v * v;
            if best.is_none_or(|(_, b)| e < b) {
                best = Some((j, e));
            }
        }
        best
    }

    /// Drop term `j`, push its contribution back into the residual and
    /// redistribute the residual over the remaining atoms.
    fn remove(&mut self, j: usize, dict: &SeparableDictionary) -> Result<(AtomPair, f64)> {
        let (pair, c) = self.decomposition.remove(j);
        dict.add_atom(&mut self.residual, c, pair);
        if self.decomposition.is_empty() {
            return Ok((pair, c));
        }
        let proj = project_iterative(&self.residual, &self.decomposition.atoms, dict, self.eps)?;
        if !proj.converged {
            return Err(Error::ConvergenceFailure {
                iterations: proj.iterations,
                last_step: proj.last_step,
            });
        }
        for ((coef, &t), &p) in self
            .decomposition
            .coefficients
            .iter_mut()
            .zip(&proj.updates)
            .zip(&self.decomposition.atoms)
        {
            if t != 0.0 {
                *coef += t;
                dict.add_atom(&mut self.residual, -t, p);
            }
        }
        Ok((pair, c))
    }
}

/// Backward pruning across blocks.
///
/// Every block offers its smallest-energy coefficient; the globally smallest
/// one is removed and that block is re-projected onto its remaining atoms.
pub struct HbwPruner<'d> {
    dict: &'d SeparableDictionary,
    blocks: Vec<PruneBlock>,
    heap: BinaryHeap<Reverse<Ranked>>,
    residual_sq: Vec<f64>,
    total_residual_sq: f64,
    total_atoms: usize,
    pixels: usize,
}

impl<'d> HbwPruner<'d> {
    /// `partition` holds the blocks `U_q` the decompositions approximate.
    /// The projection tolerance is resolved per block against `||U_q||_F`.
    pub fn new(
        partition: &BlockPartition,
        decomps: Vec<AtomicDecomposition>,
        dict: &'d SeparableDictionary,
        eps_proj: Tolerance,
    ) -> Result<Self> {
        if decomps.len() != partition.len() {
            return Err(Error::invalid(format!(
                "{} decompositions for {} blocks",
                decomps.len(),
                partition.len()
            )));
        }
        let nb = dict.block_size();
        if partition.block_size() != nb {
            return Err(Error::invalid("partition and dictionary block sizes differ"));
        }
        for (q, d) in decomps.iter().enumerate() {
            d.validate(nb)?;
            if d.atoms.iter().any(|p| !dict.contains(*p)) {
                return Err(Error::invalid(format!("block {q} uses atoms outside the dictionary")));
            }
        }
        let blocks: Vec<PruneBlock> = partition
            .blocks
            .par_iter()
            .zip(decomps)
            .map(|(u, decomposition)| {
                let mut residual = u.clone();
                residual.axpy(-1.0, &dict.synthesize(&decomposition.atoms, &decomposition.coefficients));
                PruneBlock {
                    eps: eps_proj.resolve(u.norm()),
                    decomposition,
                    residual,
                }
            })
            .collect();
        let residual_sq: Vec<f64> = blocks.iter().map(|b| b.residual.norm_sq()).collect();
        let heap = blocks
            .iter()
            .enumerate()
            .filter_map(|(q, b)| b.weakest().map(|(_, e)| Reverse(Ranked { key: e, q })))
            .collect();
        Ok(Self {
            dict,
            total_atoms: blocks.iter().map(|b| b.decomposition.len()).sum(),
            total_residual_sq: residual_sq.iter().sum(),
            residual_sq,
            blocks,
            heap,
            pixels: partition.grid.width * partition.grid.height,
        })
    }

    /// Block `q◇` and coefficient energy of the next removal.
    pub fn peek(&self) -> Option<(usize, f64)> {
        self.heap.peek().map(|Reverse(r)| (r.q, r.key))
    }

    /// Remove the globally weakest coefficient. `None` once every block is
    /// empty.
    pub fn step(&mut self) -> Result<Option<PruneStep>> {
        let Some(Reverse(top)) = self.heap.pop() else {
            return Ok(None);
        };
        let q = top.q;
        let block = &mut self.blocks[q];
        let (j, _) = block.weakest().expect("ranked block has terms");
        let (pair, coefficient) = block.remove(j, self.dict)?;
        if let Some((_, e)) = block.weakest() {
            self.heap.push(Reverse(Ranked { key: e, q }));
        }
        let now = block.residual.norm_sq();
        let distortion_increase = now - self.residual_sq[q];
        self.total_residual_sq += distortion_increase;
        self.residual_sq[q] = now;
        self.total_atoms -= 1;
        Ok(Some(PruneStep {
            block: q,
            pair,
            coefficient,
            distortion_increase,
        }))
    }

    /// The step [`step`](Self::step) would commit, computed on a copy of the
    /// affected block. Returns the global residual energy afterwards.
    pub fn tentative(&self) -> Result<Option<f64>> {
        let Some((q, _)) = self.peek() else {
            return Ok(None);
        };
        let mut block = self.blocks[q].clone();
        let (j, _) = block.weakest().expect("ranked block has terms");
        block.remove(j, self.dict)?;
        Ok(Some(self.total_residual_sq - self.residual_sq[q] + block.residual.norm_sq()))
    }

    /// Prune while the result still satisfies `target`: down to `k` atoms
    /// for `MaxAtoms(k)`, or for as long as the next removal keeps the global
    /// residual within the tolerance or PSNR floor. Removing every atom with
    /// a quality floor still unmet is reported as
    /// [`Error::TargetUnreachable`].
    pub fn run(&mut self, target: &StopRule) -> Result<Vec<PruneStep>> {
        target.validate()?;
        let mut steps = Vec::new();
        let floor = match *target {
            StopRule::MaxAtoms(k) => {
                while self.total_atoms > k {
                    match self.step()? {
                        Some(s) => steps.push(s),
                        None => break,
                    }
                }
                return Ok(steps);
            }
            StopRule::ResidualTolerance(t) => t * t,
            StopRule::TargetPsnr { db, bit_depth } => crate::pursuit::target_mse(db, bit_depth) * self.pixels as f64,
        };
        if self.total_residual_sq > floor {
            return Err(Error::TargetUnreachable(format!(
                "starting residual energy {:.6e} already exceeds the floor {floor:.6e}",
                self.total_residual_sq
            )));
        }
        while let Some(after) = self.tentative()? {
            if after > floor {
                return Ok(steps);
            }
            steps.push(self.step()?.expect("tentative step exists"));
        }
        Err(Error::TargetUnreachable(
            "every coefficient was pruned without reaching the quality floor".into(),
        ))
    }

    pub fn total_atoms(&self) -> usize {
        self.total_atoms
    }

    pub fn total_residual_sq(&self) -> f64 {
        self.total_residual_sq
    }

    pub fn block_residual(&self, q: usize) -> &Block {
        &self.blocks[q].residual
    }

    pub fn decomposition(&self, q: usize) -> &AtomicDecomposition {
        &self.blocks[q].decomposition
    }

    pub fn decompositions(&self) -> Vec<AtomicDecomposition> {
        self.blocks.iter().map(|b| b.decomposition.clone()).collect()
    }

    pub fn into_decompositions(self) -> Vec<AtomicDecomposition> {
        self.blocks.into_iter().map(|b| b.decomposition).collect()
    }
}

/// Prune `decomps` of the blocks in `partition` down to `target`.
pub fn hbw_prune(
    partition: &BlockPartition,
    decomps: Vec<AtomicDecomposition>,
    dict: &SeparableDictionary,
    target: &StopRule,
    eps_proj: Tolerance,
) -> Result<Vec<AtomicDecomposition>> {
    let mut pruner = HbwPruner::new(partition, decomps, dict, eps_proj)?;
    pruner.run(target)?;
    Ok(pruner.into_decompositions())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::{build_mixed, DictionaryConfig};
    use crate::image::{partition, ImageArray};
    use crate::pursuit::{omp2d, StopRule};

    fn setup() -> (SeparableDictionary, BlockPartition) {
        let dict = build_mixed(&DictionaryConfig::with_block_size(8)).unwrap();
        let img = ImageArray::from_fn(16, 16, 8, |r, c| ((r * 5 + c * 3) % 13) as f64 * 6.0 + r as f64).unwrap();
        (dict, partition(&img, 8).unwrap())
    }

    #[test]
    fn orthogonal_atoms_prune_without_redistribution() {
        let dict = build_mixed(&DictionaryConfig::with_block_size(8)).unwrap();
        // single-pixel atoms are mutually orthogonal
        let atoms = [AtomPair::new(32, 32), AtomPair::new(33, 35), AtomPair::new(39, 36)];
        let coefs = [5.0, -1.5, 3.0];
        let mut img = ImageArray::zeros(8, 8, 8).unwrap();
        let b = dict.synthesize(&atoms, &coefs);
        img.data_mut().copy_from_slice(b.data());
        let p = partition(&img, 8).unwrap();
        let mut d = AtomicDecomposition::new(0);
        for (a, c) in atoms.iter().zip(coefs) {
            d.push(*a, c);
        }
        let mut pruner = HbwPruner::new(&p, vec![d], &dict, Tolerance::default()).unwrap();
        let s = pruner.step().unwrap().unwrap();
        assert_eq!(s.pair, AtomPair::new(33, 35));
        assert!((s.distortion_increase - 2.25).abs() < 1e-12);
        assert_eq!(pruner.decomposition(0).coefficients, vec![5.0, 3.0]);
    }

    #[test]
    fn budget_and_energy_bound() {
        let (dict, p) = setup();
        let decomps: Vec<_> = p
            .blocks
            .iter()
            .map(|b| omp2d(b, &dict, &StopRule::MaxAtoms(20)).unwrap())
            .collect();
        let mut pruner = HbwPruner::new(&p, decomps, &dict, Tolerance::default()).unwrap();
        let steps = pruner.run(&StopRule::MaxAtoms(30)).unwrap();
        assert_eq!(steps.len(), 50);
        assert_eq!(pruner.total_atoms(), 30);
        for s in &steps {
            assert!(s.distortion_increase <= s.coefficient * s.coefficient + 1e-6);
        }
    }

    #[test]
    fn floor_is_respected() {
        let (dict, p) = setup();
        let decomps: Vec<_> = p
            .blocks
            .iter()
            .map(|b| omp2d(b, &dict, &StopRule::MaxAtoms(40)).unwrap())
            .collect();
        let mut pruner = HbwPruner::new(&p, decomps, &dict, Tolerance::default()).unwrap();
        let floor = pruner.total_residual_sq() + 500.0;
        let steps = pruner.run(&StopRule::ResidualTolerance(floor.sqrt())).unwrap();
        assert!(!steps.is_empty());
        assert!(pruner.total_residual_sq() <= floor);
        let next = pruner.tentative().unwrap().unwrap();
        assert!(next > floor);
    }

    #[test]
    fn unreachable_cases() {
        let (dict, p) = setup();
        let decomps: Vec<_> = p
            .blocks
            .iter()
            .map(|b| omp2d(b, &dict, &StopRule::MaxAtoms(3)).unwrap())
            .collect();
        let err = hbw_prune(&p, decomps.clone(), &dict, &StopRule::ResidualTolerance(1e-3), Tolerance::default());
        assert!(matches!(err, Err(Error::TargetUnreachable(_))));
        let huge = hbw_prune(&p, decomps, &dict, &StopRule::ResidualTolerance(1e9), Tolerance::default());
        assert!(matches!(huge, Err(Error::TargetUnreachable(_))));
    }
}
