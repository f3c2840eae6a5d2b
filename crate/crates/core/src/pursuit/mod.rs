//! Per-block greedy engines over a separable dictionary.
//!
//! Both engines share the selection rule: the next atom is the pair `(n, m)`
//! maximizing `|<d^x_n, R d^y_m>|`, read off the correlation matrix
//! `C = (D^x)^T R D^y`. They differ in how the orthogonal projection onto the
//! selected atoms is realized: [`Omp2d`] keeps an orthonormal basis and a
//! biorthogonal set per block, [`Spmp2d`] stores only indices and
//! coefficients and projects by running matching pursuit restricted to the
//! selected atoms.

mod omp2d;
mod project;
mod spmp2d;

pub use omp2d::{omp2d, Omp2d, OrthoBasisState};
pub use project::{project_iterative, project_iterative_capped, Projection, MAX_PROJECTION_ITERATIONS};
pub use spmp2d::{spmp2d, Spmp2d};

use std::fmt;
use std::str::FromStr;

use crate::dictionary::SeparableDictionary;
use crate::image::{AtomPair, AtomicDecomposition, Block};
use crate::{Error, Result};

/// When to stop adding atoms.
///
/// At block level `MaxAtoms` caps `k_q`, `ResidualTolerance` bounds
/// `||R_q||_F` and `TargetPsnr` bounds the block mean squared residual by the
/// MSE implied by the PSNR. At image level (HBW) the same modes apply to the
/// total atom count, the global residual norm and the global mean squared
/// residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    MaxAtoms(usize),
    ResidualTolerance(f64),
    TargetPsnr { db: f64, bit_depth: u8 },
}

impl StopRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            StopRule::MaxAtoms(_) => Ok(()),
            StopRule::ResidualTolerance(t) if t >= 0.0 && t.is_finite() => Ok(()),
            StopRule::ResidualTolerance(t) => Err(Error::invalid(format!("bad residual tolerance {t}"))),
            StopRule::TargetPsnr { db, bit_depth } if db > 0.0 && !db.is_nan() && (1..=16).contains(&bit_depth) => {
                Ok(())
            }
            StopRule::TargetPsnr { db, .. } => Err(Error::invalid(format!("bad PSNR target {db}"))),
        }
    }

    /// Whether a block (or image) with `atoms` terms and squared residual
    /// norm `residual_sq` over `pixels` samples satisfies the rule.
    pub fn reached(&self, atoms: usize, residual_sq: f64, pixels: usize) -> bool {
        match *self {
            StopRule::MaxAtoms(k) => atoms >= k,
            StopRule::ResidualTolerance(t) => residual_sq <= t * t,
            StopRule::TargetPsnr { db, bit_depth } => {
                residual_sq <= target_mse(db, bit_depth) * pixels as f64
            }
        }
    }
}

/// MSE corresponding to a PSNR of `db` for `bit_depth`-bit data.
pub fn target_mse(db: f64, bit_depth: u8) -> f64 {
    let peak = crate::image::peak_value(bit_depth);
    peak * peak / 10f64.powf(db / 10.0)
}

/// Projection tolerance, absolute or relative to the block norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tolerance {
    Absolute(f64),
    Relative(f64),
}

impl Tolerance {
    pub fn resolve(&self, block_norm: f64) -> f64 {
        match *self {
            Tolerance::Absolute(e) => e,
            Tolerance::Relative(r) => r * block_norm,
        }
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance::Relative(1e-9)
    }
}

/// Result of one selection: the atom pair and the signed inner product
/// `<d^x_n, R d^y_m>` at the argmax.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub pair: AtomPair,
    pub value: f64,
}

/// Residual of one block and its decomposition so far.
///
/// `mask` holds flattened pair indices (`n * M_y + m`, sorted) excluded from
/// selection: atoms already in the decomposition and atoms found to be
/// linearly dependent on them. `correlations` optionally caches
/// `(D^x)^T R D^y`.
#[derive(Debug, Clone)]
pub struct ResidualState {
    pub residual: Block,
    pub decomposition: AtomicDecomposition,
    pub mask: Vec<usize>,
    pub correlations: Option<Vec<f64>>,
}

impl ResidualState {
    pub fn new(block: &Block, q: usize) -> Self {
        Self {
            residual: block.clone(),
            decomposition: AtomicDecomposition::new(q),
            mask: Vec::new(),
            correlations: None,
        }
    }

    pub fn mask_pair(&mut self, pair: AtomPair, my: usize) {
        let flat = pair.x * my + pair.y;
        if let Err(pos) = self.mask.binary_search(&flat) {
            self.mask.insert(pos, flat);
        }
    }
}

/// `C = (D^x)^T R D^y` as an `M_x x M_y` row-major matrix.
pub fn correlations(residual: &Block, dict: &SeparableDictionary) -> Vec<f64> {
    let nb = dict.block_size();
    let my = dict.my();
    let mx = dict.mx();
    let by = dict.bank_y();
    // tmp[r][m] = sum_c R[r][c] d^y_m[c]
    let mut tmp = vec![0.0; nb * my];
    for (r, row) in residual.data().chunks_exact(nb).enumerate() {
        for (m, atom) in by.iter().enumerate() {
            tmp[r * my + m] = crate::image::dot(row, atom);
        }
    }
    let mut c = vec![0.0; mx * my];
    for (n, dx) in dict.bank_x().iter().enumerate() {
        let out = &mut c[n * my..(n + 1) * my];
        for (r, &w) in dx.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (o, &t) in out.iter_mut().zip(&tmp[r * my..(r + 1) * my]) {
                *o += w * t;
            }
        }
    }
    c
}

/// Argmax of `|c|` skipping masked entries. Ties keep the lowest flat index,
/// i.e. the lexicographically smallest `(n, m)`. Returns `None` when every
/// unmasked entry is zero.
pub(crate) fn argmax_abs(c: &[f64], mask: &[usize]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    let mut best_abs = 0.0;
    let mut skip = mask.iter().peekable();
    for (i, &v) in c.iter().enumerate() {
        if skip.peek() == Some(&&i) {
            skip.next();
            continue;
        }
        if v.abs() > best_abs {
            best_abs = v.abs();
            best = Some((i, v));
        }
    }
    best
}

/// Greedy selection on the current residual. `None` means the residual is
/// exactly representable already (all correlations zero), not a failure.
pub fn select_atom(state: &ResidualState, dict: &SeparableDictionary) -> Option<Selection> {
    let computed;
    let c = match &state.correlations {
        Some(c) => c,
        None => {
            computed = correlations(&state.residual, dict);
            &computed
        }
    };
    argmax_abs(c, &state.mask).map(|(i, value)| Selection {
        pair: AtomPair::new(i / dict.my(), i % dict.my()),
        value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EngineKind {
    Omp2d,
    Spmp2d,
}

impl EngineKind {
    /// OMP2D up to 16x16 blocks, SPMP2D above (the OMP2D basis storage grows
    /// as `k_q N_b^2` per block).
    pub fn default_for(block_size: usize) -> Self {
        if block_size > 16 {
            EngineKind::Spmp2d
        } else {
            EngineKind::Omp2d
        }
    }
}

impl fmt::Display for EngineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EngineKind::Omp2d => "omp2d",
            EngineKind::Spmp2d => "spmp2d",
        })
    }
}

impl FromStr for EngineKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "omp2d" => Ok(EngineKind::Omp2d),
            "spmp2d" => Ok(EngineKind::Spmp2d),
            _ => Err(Error::invalid(format!("unknown engine {s:?}"))),
        }
    }
}

/// How [`Spmp2d`] keeps its correlation matrix current.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CacheMode {
    /// Recompute `C` from the residual after every step.
    #[default]
    Recompute,
    /// Keep `C` and apply rank-1 downdates `C -= t g^x_a (g^y_b)^T` when that
    /// is cheaper than recomputing.
    Downdate,
}

impl CacheMode {
    /// Downdating pays off for dictionaries much larger than the block.
    pub fn auto(dict: &SeparableDictionary) -> Self {
        let nb = dict.block_size();
        if dict.size_2d() > 4 * nb * nb {
            CacheMode::Downdate
        } else {
            CacheMode::Recompute
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EngineOptions {
    pub eps_proj: Tolerance,
    pub cache: CacheMode,
}

/// Either engine behind one interface, so block-wise and HBW drivers can be
/// written once.
#[derive(Debug, Clone)]
pub enum BlockEngine<'d> {
    Omp(Omp2d<'d>),
    Spmp(Spmp2d<'d>),
}

impl<'d> BlockEngine<'d> {
    pub fn new(
        kind: EngineKind,
        block: &Block,
        q: usize,
        dict: &'d SeparableDictionary,
        opts: &EngineOptions,
    ) -> Self {
        match kind {
            EngineKind::Omp2d => BlockEngine::Omp(Omp2d::new(block, q, dict)),
            EngineKind::Spmp2d => BlockEngine::Spmp(Spmp2d::new(
                block,
                q,
                dict,
                opts.eps_proj.resolve(block.norm()),
                opts.cache,
            )),
        }
    }

    /// Selection the next step would make.
    pub fn candidate(&self) -> Option<Selection> {
        match self {
            BlockEngine::Omp(e) => e.candidate(),
            BlockEngine::Spmp(e) => e.candidate(),
        }
    }

    /// Add one atom. `Ok(false)` when the block is exhausted.
    pub fn step(&mut self) -> Result<bool> {
        match self {
            BlockEngine::Omp(e) => Ok(e.step()),
            BlockEngine::Spmp(e) => e.step(),
        }
    }

    /// Step until `stop` holds or the block is exhausted.
    pub fn run(&mut self, stop: &StopRule) -> Result<()> {
        let pixels = self.residual().data().len();
        while !stop.reached(self.atom_count(), self.residual_norm_sq(), pixels) {
            if !self.step()? {
                break;
            }
        }
        Ok(())
    }

    pub fn residual(&self) -> &Block {
        match self {
            BlockEngine::Omp(e) => e.residual(),
            BlockEngine::Spmp(e) => e.residual(),
        }
    }

    pub fn residual_norm_sq(&self) -> f64 {
        self.residual().norm_sq()
    }

    pub fn atom_count(&self) -> usize {
        self.decomposition().len()
    }

    pub fn decomposition(&self) -> &AtomicDecomposition {
        match self {
            BlockEngine::Omp(e) => e.decomposition(),
            BlockEngine::Spmp(e) => e.decomposition(),
        }
    }

    pub fn into_decomposition(self) -> AtomicDecomposition {
        match self {
            BlockEngine::Omp(e) => e.into_decomposition(),
            BlockEngine::Spmp(e) => e.into_decomposition(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::{build_mixed, DictionaryConfig};

    fn dict8() -> SeparableDictionary {
        build_mixed(&DictionaryConfig::with_block_size(8)).unwrap()
    }

    fn rand_block(seed: u64, nb: usize) -> Block {
        let mut s = seed.wrapping_add(0x9E3779B97F4A7C15);
        let data = (0..nb * nb)
            .map(|_| {
                s ^= s << 13;
                s ^= s >> 7;
                s ^= s << 17;
                (s % 20001) as f64 / 100.0 - 100.0
            })
            .collect();
        Block::from_vec(nb, data).unwrap()
    }

    #[test]
    fn selects_exact_atom() {
        let dict = dict8();
        let block = dict.atom_2d(AtomPair::new(3, 7)).unwrap();
        let sel = select_atom(&ResidualState::new(&block, 0), &dict).unwrap();
        assert_eq!(sel.pair, AtomPair::new(3, 7));
        assert!((sel.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matches_brute_force() {
        let dict = dict8();
        for seed in 0..25 {
            let block = rand_block(seed, 8);
            let sel = select_atom(&ResidualState::new(&block, 0), &dict).unwrap();
            let mut best = (0, 0, 0.0f64);
            for n in 0..dict.mx() {
                for m in 0..dict.my() {
                    let a = dict.atom_2d(AtomPair::new(n, m)).unwrap();
                    let v: f64 = a.data().iter().zip(block.data()).map(|(x, y)| x * y).sum();
                    if v.abs() > best.2.abs() {
                        best = (n, m, v);
                    }
                }
            }
            assert_eq!(sel.pair, AtomPair::new(best.0, best.1));
            assert!((sel.value - best.2).abs() <= 1e-10 * best.2.abs());
        }
    }

    #[test]
    fn tie_goes_to_lowest_index() {
        let c = vec![0.0, -2.0, 1.0, 2.0, -2.0];
        assert_eq!(argmax_abs(&c, &[]), Some((1, -2.0)));
        assert_eq!(argmax_abs(&c, &[1]), Some((3, 2.0)));
        assert_eq!(argmax_abs(&[0.0, 0.0], &[]), None);

        // two single-pixel atoms with identical weight: (n=32+1,m=32+4) beats (32+4, 32+1)
        let dict = dict8();
        let mut block = Block::zeros(8);
        block.set(1, 4, 5.0);
        block.set(4, 1, 5.0);
        let sel = select_atom(&ResidualState::new(&block, 0), &dict).unwrap();
        assert_eq!(sel.pair, AtomPair::new(33, 36));
    }

    #[test]
    fn zero_residual_has_no_selection() {
        let dict = dict8();
        assert!(select_atom(&ResidualState::new(&Block::zeros(8), 0), &dict).is_none());
    }

    #[test]
    fn stop_rules() {
        assert!(StopRule::MaxAtoms(3).reached(3, 1.0, 64));
        assert!(!StopRule::MaxAtoms(3).reached(2, 0.0, 64));
        assert!(StopRule::ResidualTolerance(2.0).reached(0, 4.0, 64));
        let psnr = StopRule::TargetPsnr { db: 20.0 * 255f64.log10(), bit_depth: 8 };
        assert!(psnr.reached(0, 64.0, 64));
        assert!(!psnr.reached(0, 64.5, 64));
        assert!(StopRule::ResidualTolerance(-1.0).validate().is_err());
        assert!(StopRule::TargetPsnr { db: 40.0, bit_depth: 8 }.validate().is_ok());
    }
}
