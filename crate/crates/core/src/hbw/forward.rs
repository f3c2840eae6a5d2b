use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::dictionary::SeparableDictionary;
use crate::image::{AtomicDecomposition, BlockPartition};
use crate::pursuit::{BlockEngine, EngineKind, EngineOptions, StopRule};
use crate::{Error, Result};

use super::Ranked;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HbwTermination {
    /// The global stop rule holds.
    StopReached,
    /// Every block is exactly represented (or cannot take another atom)
    /// before the stop rule was met.
    Exhausted,
}

/// Globally ranked forward selection over all blocks of a partition.
///
/// The ranking holds exactly one entry per block that can still take an
/// atom, so each step costs one heap pop, one engine step and one push.
/// Only the stepped block's candidate is recomputed. The run can be resumed
/// with a stricter stop rule.
pub struct HbwForward<'d> {
    engines: Vec<BlockEngine<'d>>,
    heap: BinaryHeap<Ranked>,
    residual_sq: Vec<f64>,
    total_residual_sq: f64,
    total_atoms: usize,
    pixels: usize,
    candidate_evaluations: usize,
    history: Vec<usize>,
}

impl<'d> HbwForward<'d> {
    pub fn new(
        partition: &BlockPartition,
        dict: &'d SeparableDictionary,
        kind: EngineKind,
        opts: &EngineOptions,
    ) -> Result<Self> {
        if partition.is_empty() {
            return Err(Error::invalid("empty partition"));
        }
        if partition.block_size() != dict.block_size() {
            return Err(Error::invalid(format!(
                "partition block size {} does not match dictionary block size {}",
                partition.block_size(),
                dict.block_size()
            )));
        }
        if partition.blocks.iter().any(|b| b.data().iter().any(|v| !v.is_finite())) {
            return Err(Error::invalid("partition contains non-finite values"));
        }
        let engines: Vec<BlockEngine<'d>> = partition
            .blocks
            .par_iter()
            .enumerate()
            .map(|(q, b)| BlockEngine::new(kind, b, q, dict, opts))
            .collect();
        let residual_sq: Vec<f64> = engines.iter().map(|e| e.residual_norm_sq()).collect();
        let heap = engines
            .iter()
            .enumerate()
            .filter_map(|(q, e)| e.candidate().map(|s| Ranked { key: s.value.abs(), q }))
            .collect();
        Ok(Self {
            total_residual_sq: residual_sq.iter().sum(),
            residual_sq,
            heap,
            candidate_evaluations: engines.len(),
            engines,
            total_atoms: 0,
            pixels: partition.grid.width * partition.grid.height,
            history: Vec::new(),
        })
    }

    /// Block `q*` the next step will extend, with its candidate magnitude.
    pub fn peek(&self) -> Option<(usize, f64)> {
        self.heap.peek().map(|r| (r.q, r.key))
    }

    /// Add one atom to the top-ranked block. Returns that block, or `None`
    /// when no block can take another atom.
    pub fn step(&mut self) -> Result<Option<usize>> {
        while let Some(top) = self.heap.pop() {
            let q = top.q;
            let engine = &mut self.engines[q];
            let added = engine.step()?;
            self.candidate_evaluations += 1;
            let now = engine.residual_norm_sq();
            self.total_residual_sq += now - self.residual_sq[q];
            self.residual_sq[q] = now;
            if let Some(s) = engine.candidate() {
                self.heap.push(Ranked { key: s.value.abs(), q });
            }
            if added {
                self.total_atoms += 1;
                self.history.push(q);
                return Ok(Some(q));
            }
        }
        Ok(None)
    }

    /// Step until `stop` holds for the whole image: total atom count, global
    /// residual norm, or global mean squared residual over the image's
    /// `N_x N_y` samples.
    pub fn run(&mut self, stop: &StopRule) -> Result<HbwTermination> {
        stop.validate()?;
        loop {
            if stop.reached(self.total_atoms, self.total_residual_sq, self.pixels) {
                return Ok(HbwTermination::StopReached);
            }
            if self.step()?.is_none() {
                return Ok(HbwTermination::Exhausted);
            }
        }
    }

    pub fn total_atoms(&self) -> usize {
        self.total_atoms
    }

    /// `sum_q ||R_q||_F^2`, maintained incrementally.
    pub fn total_residual_sq(&self) -> f64 {
        self.total_residual_sq
    }

    pub fn block_residual_sq(&self, q: usize) -> f64 {
        self.residual_sq[q]
    }

    /// Candidate computations so far: one per block at start, one per step.
    pub fn candidate_evaluations(&self) -> usize {
        self.candidate_evaluations
    }

    /// Block chosen at each step, in order.
    pub fn history(&self) -> &[usize] {
        &self.history
    }

    pub fn engines(&self) -> &[BlockEngine<'d>] {
        &self.engines
    }

    pub fn decompositions(&self) -> Vec<AtomicDecomposition> {
        self.engines.iter().map(|e| e.decomposition().clone()).collect()
    }

    pub fn into_decompositions(self) -> Vec<AtomicDecomposition> {
        self.engines.into_iter().map(|e| e.into_decomposition()).collect()
    }
}

/// HBW forward selection until `global_stop`, or until every block is
/// represented exactly, which is the best any stop rule can get.
pub fn hbw_forward(
    partition: &BlockPartition,
    dict: &SeparableDictionary,
    kind: EngineKind,
    opts: &EngineOptions,
    global_stop: &StopRule,
) -> Result<Vec<AtomicDecomposition>> {
    let mut hbw = HbwForward::new(partition, dict, kind, opts)?;
    hbw.run(global_stop)?;
    Ok(hbw.into_decompositions())
}
