use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::Side;
use super::state::{BlockState, MoveTarget};

/// A move is accepted only if it lowers the description length by more
/// than this many nats; smaller changes are rounding noise.
pub const ACCEPT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Sides with at most this many blocks have every block evaluated as a
    /// move target; larger sides use sampled two-hop proposals.
    pub candidate_limit: usize,
    /// Proposals drawn per node when sampling.
    pub samples: usize,
    /// Allow moving a node into a fresh block.
    pub allow_new_blocks: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { candidate_limit: 64, samples: 12, allow_new_blocks: true }
    }
}

/// Blocks on `side` reached by short random walks from `v`, plus a few
/// uniformly drawn blocks.
pub(crate) fn sampled_blocks<R: Rng>(
    state: &BlockState<'_>,
    v: usize,
    pool: &[usize],
    samples: usize,
    rng: &mut R,
) -> BTreeSet<usize> {
    let g = state.graph();
    let mut out = BTreeSet::new();
    for i in 0..samples {
        let nbrs = g.neighbors(v);
        if i % 3 != 2 && !nbrs.is_empty() {
            let (u, _) = nbrs[rng.random_range(0..nbrs.len())];
            let back = g.neighbors(u);
            let (x, _) = back[rng.random_range(0..back.len())];
            out.insert(state.block_of(x));
        } else if !pool.is_empty() {
            let b = pool[rng.random_range(0..pool.len())];
            if state.is_active(b) && state.block_side(b) == g.side(v) {
                out.insert(b);
            }
        }
    }
    out
}

/// One pass over all nodes in shuffled order, applying each node's best
/// strictly improving move. Returns the number of accepted moves.
///
/// Ties in ΔDL go to the lowest block id; a fresh block ranks last.
pub fn greedy_sweep<R: Rng>(state: &mut BlockState<'_>, rng: &mut R, cfg: &SweepConfig) -> usize {
    let g = state.graph();
    let mut order: Vec<usize> = (0..g.node_count()).collect();
    order.shuffle(rng);
    let pools: [Vec<usize>; 2] = [state.blocks(Side::Doc).collect(), state.blocks(Side::Word).collect()];
    let mut accepted = 0;
    for v in order {
        let side = g.side(v);
        let current = state.block_of(v);
        let candidates: BTreeSet<usize> = if state.block_count(side) <= cfg.candidate_limit {
            state.blocks(side).collect()
        } else {
            sampled_blocks(state, v, &pools[side.index()], cfg.samples, rng)
        };
        let nb = state.neighbor_blocks(v);
        let mut best: Option<(f64, MoveTarget)> = None;
        for s in candidates.into_iter().filter(|&s| s != current) {
            let d = state.delta_move_with(v, &nb, MoveTarget::Block(s));
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, MoveTarget::Block(s)));
            }
        }
        if cfg.allow_new_blocks && state.block_size(current) > 1 {
            let d = state.delta_move_with(v, &nb, MoveTarget::NewBlock);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, MoveTarget::NewBlock));
            }
        }
        if let Some((d, target)) = best {
            if d < -ACCEPT_EPS {
                state.apply_move(v, target).expect("candidate is a valid target");
                accepted += 1;
            }
        }
    }
    accepted
}

/// Sweeps until a pass accepts nothing or `max_sweeps` passes ran.
pub fn sweep_until_stable<R: Rng>(
    state: &mut BlockState<'_>,
    rng: &mut R,
    cfg: &SweepConfig,
    max_sweeps: usize,
) -> usize {
    let mut total = 0;
    for _ in 0..max_sweeps {
        let n = greedy_sweep(state, rng, cfg);
        total += n;
        if n == 0 {
            break;
        }
    }
    total
}
