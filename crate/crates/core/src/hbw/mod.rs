//! Hierarchized block-wise strategies.
//!
//! [`HbwForward`] keeps one pursuit engine per block and always spends the
//! next atom on the block whose candidate has the largest `|<d^x, R_q d^y>|`.
//! [`HbwPruner`] goes the other way: it repeatedly drops the coefficient with
//! the smallest `|c|^2` over all blocks and re-projects the block's residual
//! onto its remaining atoms.

mod forward;
mod prune;

pub use forward::{hbw_forward, HbwForward, HbwTermination};
pub use prune::{hbw_prune, HbwPruner, PruneStep};

use std::cmp::Ordering;

/// Heap entry keyed on a magnitude. Larger keys order first; on equal keys
/// the lower block index orders first.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Ranked {
    pub key: f64,
    pub q: usize,
}

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked {}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.total_cmp(&other.key).then_with(|| other.q.cmp(&self.q))
    }
}
