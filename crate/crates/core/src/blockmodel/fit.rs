use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::graph::{Multigraph, Side};
use super::merge::{agglomerative_merge, merge_until, MergeConfig, MergeGoal};
use super::state::{BlockState, DescriptionLength};
use super::sweep::{sweep_until_stable, SweepConfig};
use super::{BlockModelError, Hierarchy, Partition};
use crate::network::BipartiteNetwork;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Independent searches per level; the lowest description length wins.
    pub restarts: usize,
    /// Cap on sweeps each time the state is relaxed.
    pub sweeps: usize,
    /// Candidate partners sampled per block when merging.
    pub merge_trials: usize,
    /// Sides with at most this many blocks evaluate every move target.
    pub candidate_limit: usize,
    /// Block count shrinks by this factor per step of the descent.
    pub shrink_ratio: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { restarts: 4, sweeps: 20, merge_trials: 10, candidate_limit: 64, shrink_ratio: 1.5 }
    }
}

impl FitConfig {
    fn sweep(&self, allow_new_blocks: bool) -> SweepConfig {
        SweepConfig { candidate_limit: self.candidate_limit, allow_new_blocks, ..SweepConfig::default() }
    }

    fn merge(&self) -> MergeConfig {
        MergeConfig { trials: self.merge_trials, sweep: self.sweep(false), max_sweeps: self.sweeps }
    }

    fn validate(&self) -> Result<(), BlockModelError> {
        if self.restarts == 0 || self.merge_trials == 0 || self.shrink_ratio <= 1.0 {
            return Err(BlockModelError::InvalidTarget(
                "restarts and merge_trials must be >= 1, shrink_ratio > 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub hierarchy: Hierarchy,
    /// Level-0 description length.
    pub description_length: DescriptionLength,
    /// Description length of each level's partition of its own block graph.
    pub level_description_lengths: Vec<DescriptionLength>,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn derive_seed(seed: u64, level: usize, restart: usize) -> u64 {
    splitmix(splitmix(seed ^ splitmix(level as u64)) ^ restart as u64)
}

struct Search<'g> {
    cache: BTreeMap<usize, (BlockState<'g>, f64)>,
}

impl<'g> Search<'g> {
    fn insert(&mut self, state: BlockState<'g>) {
        let key = state.total_blocks();
        let dl = state.description_length().total;
        match self.cache.get(&key) {
            Some((_, old)) if *old <= dl => {}
            _ => {
                self.cache.insert(key, (state, dl));
            }
        }
    }

    /// Merge down from the nearest cached state with more blocks.
    fn derive(&mut self, target: usize, cfg: &FitConfig, rng: &mut ChaCha8Rng) {
        let Some((_, (from, _))) = self.cache.range(target + 1..).next() else {
            return;
        };
        let mut state = from.clone();
        merge_until(&mut state, MergeGoal::Total(target), &cfg.merge(), rng);
        self.insert(state);
    }

    fn best(&self) -> (usize, f64) {
        self.cache
            .iter()
            .map(|(&k, (_, dl))| (k, *dl))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .expect("search cache is never empty")
    }
}

/// Single search for the minimum-DL partition of `g`.
fn minimize<'g>(g: &'g Multigraph, cfg: &FitConfig, rng: &mut ChaCha8Rng) -> BlockState<'g> {
    let mut start = BlockState::singletons(g);
    sweep_until_stable(&mut start, rng, &cfg.sweep(false), cfg.sweeps);
    let floor = Side::BOTH.iter().filter(|&&s| g.count(s) > 0).count();

    let mut search = Search { cache: BTreeMap::new() };
    let mut visited = BTreeSet::new();
    let mut t = start.total_blocks();
    search.insert(start);

    while t > floor {
        let target = ((t as f64 / cfg.shrink_ratio).floor() as usize).clamp(floor, t - 1);
        visited.insert(target);
        search.derive(target, cfg, rng);
        t = target;
    }

    // narrow the bracket around the best count
    loop {
        let (best, _) = search.best();
        let lower = search.cache.range(..best).next_back().map(|(&k, _)| k);
        let upper = search.cache.range(best + 1..).next().map(|(&k, _)| k);
        let mut gaps: Vec<(usize, usize)> = Vec::new();
        if let Some(u) = upper {
            gaps.push((u - best, (best + u) / 2));
        }
        if let Some(l) = lower {
            gaps.push((best - l, (l + best) / 2));
        }
        gaps.sort_by_key(|g| std::cmp::Reverse(g.0));
        let next = gaps
            .into_iter()
            .filter(|&(gap, _)| gap > 1)
            .map(|(_, mid)| mid)
            .find(|mid| !visited.contains(mid));
        let Some(target) = next else { break };
        visited.insert(target);
        search.derive(target, cfg, rng);
    }

    let (best, _) = search.best();
    let (mut state, _) = search.cache.remove(&best).expect("best key is cached");
    sweep_until_stable(&mut state, rng, &cfg.sweep(true), cfg.sweeps);
    state
}

/// Best of `cfg.restarts` independent searches; ties go to the lowest restart.
fn minimize_restarts<'g>(g: &'g Multigraph, seed: u64, level: usize, cfg: &FitConfig) -> BlockState<'g> {
    let runs: Vec<(BlockState<'g>, f64)> = (0..cfg.restarts)
        .into_par_iter()
        .map(|restart| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, level, restart));
            let st = minimize(g, cfg, &mut rng);
            let dl = st.description_length().total;
            (st, dl)
        })
        .collect();
    runs.into_iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| a.1.total_cmp(&b.1).then(ia.cmp(ib)))
        .map(|(_, (st, _))| st)
        .expect("at least one restart")
}

/// Multigraph whose nodes are the blocks of `p`.
fn block_graph(g: &Multigraph, p: &Partition) -> Multigraph {
    let edges = g.nodes(Side::Doc).flat_map(|d| {
        g.neighbors(d)
            .iter()
            .map(move |&(u, m)| (p.assignment[d], p.assignment[u] - p.doc_blocks, m))
    });
    Multigraph::from_edges(p.doc_blocks, p.word_blocks, edges)
}

pub fn fit(net: &BipartiteNetwork, seed: u64, cfg: &FitConfig) -> Result<FitResult, BlockModelError> {
    fit_graph(&net.to_multigraph(), seed, cfg)
}

/// Fits level 0, then repeatedly fits the block graph of the level below
/// until both sides are a single block.
pub fn fit_graph(graph: &Multigraph, seed: u64, cfg: &FitConfig) -> Result<FitResult, BlockModelError> {
    cfg.validate()?;
    if graph.node_count() == 0 || graph.total() == 0 {
        return Err(BlockModelError::EmptyNetwork);
    }
    let level0 = minimize_restarts(graph, seed, 0, cfg);
    let description_length = level0.description_length();
    let mut levels = vec![level0.partition()];
    let mut level_description_lengths = vec![description_length];

    let mut below = graph.clone();
    loop {
        let current = levels.last().unwrap();
        if current.doc_blocks <= 1 && current.word_blocks <= 1 {
            break;
        }
        let upper = block_graph(&below, current);
        let level = levels.len();
        let mut st = minimize_restarts(&upper, seed, level, cfg);
        let (nd, nw) = (upper.count(Side::Doc), upper.count(Side::Word));
        if st.block_count(Side::Doc) == nd && st.block_count(Side::Word) == nw {
            // no coarsening found; force one halving so the recursion ends
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, level, usize::MAX));
            agglomerative_merge(&mut st, (nd / 2).max(1), (nw / 2).max(1), &cfg.merge(), &mut rng)?;
        }
        level_description_lengths.push(st.description_length());
        let next = st.partition();
        drop(st);
        levels.push(next);
        below = upper;
    }

    Ok(FitResult { hierarchy: Hierarchy { levels }, description_length, level_description_lengths })
}
