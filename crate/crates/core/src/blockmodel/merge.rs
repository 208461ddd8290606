use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use super::graph::Side;
use super::state::BlockState;
use super::sweep::{sampled_blocks, sweep_until_stable, SweepConfig};
use super::BlockModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum MergeGoal {
    /// Merge on each side down to the given count.
    PerSide { doc: usize, word: usize },
    /// Merge on either side until doc + word blocks reach the total.
    Total(usize),
}

impl MergeGoal {
    fn remaining(&self, state: &BlockState<'_>) -> [usize; 2] {
        match *self {
            MergeGoal::PerSide { doc, word } => [
                state.block_count(Side::Doc).saturating_sub(doc),
                state.block_count(Side::Word).saturating_sub(word),
            ],
            MergeGoal::Total(t) => {
                let excess = state.total_blocks().saturating_sub(t);
                [
                    excess.min(state.block_count(Side::Doc).saturating_sub(1)),
                    excess.min(state.block_count(Side::Word).saturating_sub(1)),
                ]
            }
        }
    }

    fn reached(&self, state: &BlockState<'_>) -> bool {
        self.remaining(state) == [0, 0]
    }
}

/// Parameters for [`agglomerative_merge`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MergeConfig {
    /// Candidate partner blocks sampled per block.
    pub trials: usize,
    pub sweep: SweepConfig,
    pub max_sweeps: usize,
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self { trials: 10, sweep: SweepConfig::default(), max_sweeps: 10 }
    }
}

struct UnionFind(BTreeMap<usize, usize>);

impl UnionFind {
    fn find(&mut self, mut b: usize) -> usize {
        while let Some(&p) = self.0.get(&b) {
            b = p;
        }
        b
    }
}

/// Best merge partner for `r` among all same-side blocks (small sides) or
/// `trials` sampled ones. Ties go to the lowest block id.
fn best_partner<R: Rng>(
    state: &BlockState<'_>,
    r: usize,
    trials: usize,
    pool: &[usize],
    rng: &mut R,
) -> Option<(f64, usize)> {
    let side = state.block_side(r);
    let candidates: BTreeSet<usize> = if state.block_count(side) <= trials + 1 {
        state.blocks(side).collect()
    } else {
        let members = state.members(r);
        let mut out = BTreeSet::new();
        for _ in 0..trials {
            let v = members[rng.random_range(0..members.len())];
            out.extend(sampled_blocks(state, v, pool, 1, rng));
        }
        if out.iter().all(|&s| s == r) {
            out = state.blocks(side).collect();
        }
        out
    };
    let mut best: Option<(f64, usize)> = None;
    for s in candidates.into_iter().filter(|&s| s != r) {
        let d = state.delta_merge_unchecked(r, s);
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, s));
        }
    }
    best
}

pub(crate) fn merge_until<R: Rng>(
    state: &mut BlockState<'_>,
    goal: MergeGoal,
    cfg: &MergeConfig,
    rng: &mut R,
) {
    let sweep_cfg = SweepConfig { allow_new_blocks: false, ..cfg.sweep };
    while !goal.reached(state) {
        let remaining = goal.remaining(state);
        let mut quota = [0usize; 2];
        for side in Side::BOTH {
            let i = side.index();
            // at most halve a side per batch
            quota[i] = remaining[i].min((state.block_count(side) / 2).max(1));
        }
        let batch_total = match goal {
            MergeGoal::Total(t) => {
                let all = state.total_blocks();
                all.saturating_sub(t).min((all / 2).max(1))
            }
            MergeGoal::PerSide { .. } => usize::MAX,
        };

        let mut proposals: Vec<(f64, usize, usize)> = Vec::new();
        for side in Side::BOTH {
            if quota[side.index()] == 0 {
                continue;
            }
            let pool: Vec<usize> = state.blocks(side).collect();
            for &r in &pool {
                if let Some((d, s)) = best_partner(state, r, cfg.trials, &pool, rng) {
                    proposals.push((d, r, s));
                }
            }
        }
        proposals.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then((a.1.min(a.2), a.1.max(a.2)).cmp(&(b.1.min(b.2), b.1.max(b.2))))
        });

        let mut uf = UnionFind(BTreeMap::new());
        let mut done = [0usize; 2];
        for (_, r, s) in proposals {
            let (r, s) = (uf.find(r), uf.find(s));
            if r == s {
                continue;
            }
            let i = state.block_side(r).index();
            if done[i] >= quota[i] {
                continue;
            }
            if done[0] + done[1] >= batch_total {
                break;
            }
            state.merge_blocks(r, s).expect("same-side active blocks");
            uf.0.insert(r, s);
            done[i] += 1;
        }
        debug_assert!(done[0] + done[1] > 0);
        sweep_until_stable(state, rng, &sweep_cfg, cfg.max_sweeps);
    }
}

/// Merges same-side block pairs, cheapest sampled ΔDL first, until each side
/// is down to its target, sweeping after each halving.
pub fn agglomerative_merge<R: Rng>(
    state: &mut BlockState<'_>,
    target_doc: usize,
    target_word: usize,
    cfg: &MergeConfig,
    rng: &mut R,
) -> Result<(), BlockModelError> {
    if target_doc < 1 || target_word < 1 {
        return Err(BlockModelError::InvalidTarget("block targets must be at least 1".into()));
    }
    if cfg.trials < 1 {
        return Err(BlockModelError::InvalidTarget("merge trials must be at least 1".into()));
    }
    let (bd, bw) = (state.block_count(Side::Doc), state.block_count(Side::Word));
    if target_doc > bd.max(1) || target_word > bw.max(1) {
        return Err(BlockModelError::InvalidTarget(format!(
            "targets ({target_doc}, {target_word}) exceed current blocks ({bd}, {bw})"
        )));
    }
    merge_until(state, MergeGoal::PerSide { doc: target_doc, word: target_word }, cfg, rng);
    Ok(())
}
