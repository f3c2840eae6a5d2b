use crate::dictionary::SeparableDictionary;
use crate::image::{AtomPair, AtomicDecomposition, Block};
use crate::{Error, Result};

use super::project::project_iterative;
use super::{argmax_abs, correlations, CacheMode, ResidualState, Selection, StopRule};

/// Self projected matching pursuit engine for one block.
///
/// Keeps only the residual, the selected index pairs and their coefficients.
/// Each step is a plain MP step followed by [`project_iterative`] over the
/// selected atoms, which restores the orthogonal projection up to `eps`.
#[derive(Debug, Clone)]
pub struct Spmp2d<'d> {
    dict: &'d SeparableDictionary,
    state: ResidualState,
    eps: f64,
    cache: CacheMode,
    candidate: Option<Selection>,
    floor_sq: f64,
    max_atoms: usize,
}

impl<'d> Spmp2d<'d> {
    pub fn new(block: &Block, q: usize, dict: &'d SeparableDictionary, eps: f64, cache: CacheMode) -> Self {
        let mut state = ResidualState::new(block, q);
        if cache == CacheMode::Downdate {
            state.correlations = Some(correlations(block, dict));
        }
        let floor = eps.max(1e-12 * block.norm());
        let mut engine = Self {
            dict,
            state,
            eps,
            cache,
            candidate: None,
            floor_sq: floor * floor,
            max_atoms: block.data().len(),
        };
        engine.refresh_candidate();
        engine
    }

    fn refresh_candidate(&mut self) {
        let res_sq = self.state.residual.norm_sq();
        if res_sq == 0.0 || res_sq <= self.floor_sq || self.state.decomposition.len() >= self.max_atoms {
            self.candidate = None;
            return;
        }
        let found = match &self.state.correlations {
            Some(c) => argmax_abs(c, &self.state.mask),
            None => argmax_abs(&correlations(&self.state.residual, self.dict), &self.state.mask),
        };
        self.candidate = found.map(|(i, value)| Selection {
            pair: AtomPair::new(i / self.dict.my(), i % self.dict.my()),
            value,
        });
    }

    /// Apply `R -= sum_i t_i A_{p_i}` to the residual and, when cached, to
    /// the correlation matrix.
    fn subtract(&mut self, terms: &[(AtomPair, f64)]) {
        for &(p, t) in terms {
            self.dict.add_atom(&mut self.state.residual, -t, p);
        }
        let nb = self.dict.block_size();
        let Some(c) = self.state.correlations.as_mut() else {
            return;
        };
        // a rank-1 downdate costs M_x M_y, a recompute about N_b M_x M_y
        if terms.len() < nb {
            let (mx, my) = (self.dict.mx(), self.dict.my());
            for &(p, t) in terms {
                for n in 0..mx {
                    let s = t * self.dict.gram_x(n, p.x);
                    if s == 0.0 {
                        continue;
                    }
                    let row = &mut c[n * my..(n + 1) * my];
                    for (m, v) in row.iter_mut().enumerate() {
                        *v -= s * self.dict.gram_y(m, p.y);
                    }
                }
            }
        } else {
            *c = correlations(&self.state.residual, self.dict);
        }
    }

    pub fn candidate(&self) -> Option<Selection> {
        self.candidate
    }

    pub fn step(&mut self) -> Result<bool> {
        let Some(sel) = self.candidate else {
            return Ok(false);
        };
        let my = self.dict.my();
        self.state.mask_pair(sel.pair, my);
        self.state.decomposition.push(sel.pair, sel.value);
        self.subtract(&[(sel.pair, sel.value)]);

        let proj = project_iterative(&self.state.residual, &self.state.decomposition.atoms, self.dict, self.eps)?;
        if !proj.converged {
            return Err(Error::ConvergenceFailure {
                iterations: proj.iterations,
                last_step: proj.last_step,
            });
        }
        let terms: Vec<(AtomPair, f64)> = self
            .state
            .decomposition
            .atoms
            .iter()
            .zip(&proj.updates)
            .filter(|(_, &t)| t != 0.0)
            .map(|(&p, &t)| (p, t))
            .collect();
        for (c, t) in self.state.decomposition.coefficients.iter_mut().zip(&proj.updates) {
            *c += t;
        }
        self.subtract(&terms);
        self.refresh_candidate();
        Ok(true)
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

    pub fn state(&self) -> &ResidualState {
        &self.state
    }

    pub fn cache_mode(&self) -> CacheMode {
        self.cache
    }
}

/// SPMP2D on one block with absolute projection tolerance `eps_proj`.
pub fn spmp2d(
    block: &Block,
    dict: &SeparableDictionary,
    stop: &StopRule,
    eps_proj: f64,
) -> Result<AtomicDecomposition> {
    stop.validate()?;
    if block.size() != dict.block_size() {
        return Err(Error::invalid(format!(
            "block size {} does not match dictionary block size {}",
            block.size(),
            dict.block_size()
        )));
    }
    if block.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("block contains non-finite values"));
    }
    let mut engine = Spmp2d::new(block, 0, dict, eps_proj, CacheMode::auto(dict));
    let pixels = block.data().len();
    while !stop.reached(engine.decomposition().len(), engine.residual().norm_sq(), pixels) {
        if !engine.step()? {
            break;
        }
    }
    Ok(engine.into_decomposition())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::{build_mixed, DictionaryConfig};
    use crate::pursuit::omp2d;

    fn rand_block(seed: u64, nb: usize) -> Block {
        let mut s = seed ^ 0xA5A5_5A5A;
        let data = (0..nb * nb)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 200.0 - 100.0
            })
            .collect();
        Block::from_vec(nb, data).unwrap()
    }

    #[test]
    fn single_atom_matches_omp() {
        let dict = build_mixed(&DictionaryConfig::with_block_size(8)).unwrap();
        let mut block = dict.atom_2d(AtomPair::new(50, 3)).unwrap();
        for v in block.data_mut() {
            *v *= -4.0;
        }
        let stop = StopRule::ResidualTolerance(1e-6);
        let a = spmp2d(&block, &dict, &stop, 1e-9 * block.norm()).unwrap();
        let b = omp2d(&block, &dict, &stop).unwrap();
        assert_eq!(a.atoms, b.atoms);
        assert!((a.coefficients[0] - b.coefficients[0]).abs() < 1e-12);
    }

    #[test]
    fn downdated_cache_matches_recompute() {
        let dict = build_mixed(&DictionaryConfig::with_block_size(8)).unwrap();
        let block = rand_block(3, 8);
        let eps = 1e-9 * block.norm();
        let mut e = Spmp2d::new(&block, 0, &dict, eps, CacheMode::Downdate);
        for _ in 0..12 {
            assert!(e.step().unwrap());
            let cached = e.state().correlations.as_ref().unwrap();
            let fresh = correlations(e.residual(), &dict);
            let worst = cached.iter().zip(&fresh).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(worst <= 1e-10, "{worst}");
        }
    }

    #[test]
    fn stores_no_orthogonal_basis() {
        let dict = build_mixed(&DictionaryConfig::with_block_size(8)).unwrap();
        let block = rand_block(9, 8);
        let mut e = Spmp2d::new(&block, 0, &dict, 1e-9 * block.norm(), CacheMode::Recompute);
        for _ in 0..20 {
            e.step().unwrap();
        }
        let s = e.state();
        // residual + indices + coefficients only
        assert!(s.correlations.is_none());
        assert_eq!(s.decomposition.atoms.len(), 20);
        assert_eq!(s.decomposition.coefficients.len(), 20);
        assert_eq!(s.residual.data().len(), 64);
    }
}
