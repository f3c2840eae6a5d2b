use crate::dictionary::SeparableDictionary;
use crate::image::{AtomPair, Block};
use crate::{Error, Result};

pub const MAX_PROJECTION_ITERATIONS: usize = 1_000_000;

/// Output of the iterative projection.
#[derive(Debug, Clone)]
pub struct Projection {
    /// `T`, the approximation of the residual in the span of the atoms.
    pub approximation: Block,
    /// Accumulated coefficient per selected atom, `T = sum_n t(n) A_n`.
    pub updates: Vec<f64>,
    pub iterations: usize,
    /// `||T^j - T^{j-1}||_F` of the last iteration.
    pub last_step: f64,
    /// False when the iteration cap was hit before the step fell below `eps`.
    pub converged: bool,
}

/// Orthogonal projection of `residual` onto the span of `selected` by
/// matching pursuit restricted to those atoms.
///
/// Each iteration picks the selected atom with the largest `|<A_n, R~>|`
/// (lowest `n` on ties), moves that component from `R~` to `T`, and stops
/// once the step `||T^j - T^{j-1}||_F = |t(j)|` drops below `eps`.
/// Correlations are kept current through the atoms' Gram matrix, so an
/// iteration costs `O(k)` after an `O(k N_b^2 + k^2)` setup.
pub fn project_iterative(
    residual: &Block,
    selected: &[AtomPair],
    dict: &SeparableDictionary,
    eps: f64,
) -> Result<Projection> {
    project_iterative_capped(residual, selected, dict, eps, MAX_PROJECTION_ITERATIONS)
}

pub fn project_iterative_capped(
    residual: &Block,
    selected: &[AtomPair],
    dict: &SeparableDictionary,
    eps: f64,
    max_iterations: usize,
) -> Result<Projection> {
    if eps.is_nan() || eps < 0.0 {
        return Err(Error::invalid(format!("projection tolerance must be >= 0, got {eps}")));
    }
    if let Some(p) = selected.iter().find(|p| !dict.contains(**p)) {
        return Err(Error::invalid(format!("atom ({}, {}) outside dictionary", p.x, p.y)));
    }
    let k = selected.len();
    let mut updates = vec![0.0; k];
    if k == 0 {
        return Ok(Projection {
            approximation: Block::zeros(residual.size()),
            updates,
            iterations: 0,
            last_step: 0.0,
            converged: true,
        });
    }
    let mut gram = vec![0.0; k * k];
    for i in 0..k {
        for j in i..k {
            let g = dict.atom_inner(selected[i], selected[j]);
            gram[i * k + j] = g;
            gram[j * k + i] = g;
        }
    }
    let mut h: Vec<f64> = selected.iter().map(|&p| dict.correlate(residual, p)).collect();

    let mut iterations = 0;
    let mut last_step = f64::INFINITY;
    let mut converged = false;
    while iterations < max_iterations {
        let mut j = 0;
        let mut best = h[0].abs();
        for (n, v) in h.iter().enumerate().skip(1) {
            if v.abs() > best {
                best = v.abs();
                j = n;
            }
        }
        let t = h[j];
        iterations += 1;
        last_step = t.abs();
        if t == 0.0 {
            converged = true;
            break;
        }
        updates[j] += t;
        let row = &gram[j * k..(j + 1) * k];
        for (hn, &g) in h.iter_mut().zip(row) {
            *hn -= t * g;
        }
        if last_step < eps {
            converged = true;
            break;
        }
    }
    let approximation = dict.synthesize(selected, &updates);
    Ok(Projection {
        approximation,
        updates,
        iterations,
        last_step,
        converged,
    })
}
