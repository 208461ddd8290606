//! Block state and the description length it is scored by.
//!
//! The objective is the microcanonical degree-corrected SBM description
//! length, in nats:
//!
//! ```text
//! S = -E - Σ_{r<s} e_rs ln(e_rs / (e_r e_s)) - Σ_v ln k_v!
//! L = Σ_side [ ln C(N-1, B-1) + ln N! - Σ_r ln n_r! + ln N ]      partition
//!   + Σ_r ln multiset(n_r, e_r)                                    degrees
//!   + ln multiset(B_doc · B_word, E)                               edge counts
//! ```
//!
//! Only doc–word block pairs carry edges, so same-side pairs contribute
//! nothing. `multiset(n, k) = C(n + k - 1, k)`, with `multiset(n, 0) = 1`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use statrs::function::factorial::{ln_binomial, ln_factorial};

use super::graph::{Multigraph, Side};
use super::{BlockModelError, Partition};

/// Components in nats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescriptionLength {
    pub total: f64,
    pub entropy: f64,
    pub partition: f64,
    pub degrees: f64,
    pub edges: f64,
}

impl DescriptionLength {
    pub fn new(entropy: f64, partition: f64, degrees: f64, edges: f64) -> Self {
        Self { total: entropy + partition + degrees + edges, entropy, partition, degrees, edges }
    }

    pub fn total_bits(&self) -> f64 {
        self.total / std::f64::consts::LN_2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MoveTarget {
    Block(usize),
    NewBlock,
}

#[inline]
pub(crate) fn xlnx(x: u64) -> f64 {
    if x == 0 {
        0.0
    } else {
        let x = x as f64;
        x * x.ln()
    }
}

#[inline]
pub(crate) fn ln_multiset(n: u64, k: u64) -> f64 {
    if k == 0 {
        0.0
    } else {
        ln_binomial(n + k - 1, k)
    }
}

fn side_partition_term(nodes: usize, blocks: usize, sizes: impl Iterator<Item = usize>) -> f64 {
    if nodes == 0 {
        return 0.0;
    }
    let n = nodes as u64;
    ln_binomial(n - 1, blocks as u64 - 1) + ln_factorial(n)
        - sizes.map(|s| ln_factorial(s as u64)).sum::<f64>()
        + (nodes as f64).ln()
}

/// Side-pure partition of a [`Multigraph`] with its block edge counts.
///
/// Block ids are slots; emptied slots are recycled, so ids are not compact.
/// [`BlockState::partition`] returns a compact canonical labelling.
#[derive(Debug, Clone)]
pub struct BlockState<'g> {
    graph: &'g Multigraph,
    assignment: Vec<usize>,
    block_side: Vec<Side>,
    block_size: Vec<usize>,
    block_degree: Vec<u64>,
    block_edges: Vec<BTreeMap<usize, u64>>,
    active: [BTreeSet<usize>; 2],
    free: BTreeSet<usize>,
}

impl<'g> BlockState<'g> {
    /// Every node in its own block.
    pub fn singletons(graph: &'g Multigraph) -> Self {
        let assignment: Vec<usize> = (0..graph.node_count()).collect();
        Self::build(graph, assignment)
    }

    /// One block per non-empty side.
    pub fn single_block(graph: &'g Multigraph) -> Self {
        let assignment = (0..graph.node_count())
            .map(|v| graph.side(v).index())
            .collect();
        Self::build(graph, assignment)
    }

    /// Arbitrary labels; blocks must not mix docs and words.
    pub fn from_assignment(graph: &'g Multigraph, assignment: &[usize]) -> Result<Self, BlockModelError> {
        if assignment.len() != graph.node_count() {
            return Err(BlockModelError::AssignmentLength {
                expected: graph.node_count(),
                got: assignment.len(),
            });
        }
        let mut side_of: BTreeMap<usize, Side> = BTreeMap::new();
        for (v, &b) in assignment.iter().enumerate() {
            let side = graph.side(v);
            if *side_of.entry(b).or_insert(side) != side {
                return Err(BlockModelError::MixedBlock(b));
            }
        }
        Ok(Self::build(graph, assignment.to_vec()))
    }

    pub fn from_partition(graph: &'g Multigraph, partition: &Partition) -> Result<Self, BlockModelError> {
        Self::from_assignment(graph, &partition.assignment)
    }

    fn build(graph: &'g Multigraph, assignment: Vec<usize>) -> Self {
        let slots = assignment.iter().copied().max().map_or(0, |m| m + 1);
        let mut block_side = vec![Side::Doc; slots];
        let mut block_size = vec![0; slots];
        let mut block_degree = vec![0; slots];
        let mut block_edges = vec![BTreeMap::new(); slots];
        for (v, &b) in assignment.iter().enumerate() {
            block_side[b] = graph.side(v);
            block_size[b] += 1;
            block_degree[b] += graph.degree(v);
            for &(u, m) in graph.neighbors(v) {
                *block_edges[b].entry(assignment[u]).or_insert(0) += m;
            }
        }
        let mut active = [BTreeSet::new(), BTreeSet::new()];
        let mut free = BTreeSet::new();
        for b in 0..slots {
            if block_size[b] > 0 {
                active[block_side[b].index()].insert(b);
            } else {
                free.insert(b);
            }
        }
        Self { graph, assignment, block_side, block_size, block_degree, block_edges, active, free }
    }

    pub fn graph(&self) -> &'g Multigraph {
        self.graph
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn block_of(&self, v: usize) -> usize {
        self.assignment[v]
    }

    pub fn block_count(&self, side: Side) -> usize {
        self.active[side.index()].len()
    }

    pub fn total_blocks(&self) -> usize {
        self.active[0].len() + self.active[1].len()
    }

    pub fn blocks(&self, side: Side) -> impl Iterator<Item = usize> + '_ {
        self.active[side.index()].iter().copied()
    }

    pub fn is_active(&self, b: usize) -> bool {
        b < self.block_size.len() && self.block_size[b] > 0
    }

    pub fn block_side(&self, b: usize) -> Side {
        self.block_side[b]
    }

    pub fn block_size(&self, b: usize) -> usize {
        self.block_size[b]
    }

    pub fn block_degree(&self, b: usize) -> u64 {
        self.block_degree[b]
    }

    /// e_rs
    pub fn block_edge_count(&self, r: usize, s: usize) -> u64 {
        self.block_edges.get(r).and_then(|row| row.get(&s)).copied().unwrap_or(0)
    }

    pub fn block_row(&self, r: usize) -> &BTreeMap<usize, u64> {
        &self.block_edges[r]
    }

    pub fn members(&self, b: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&v| self.assignment[v] == b).collect()
    }

    /// Compact relabelling: doc blocks `0..B_doc` by first appearance over doc
    /// nodes, then word blocks `B_doc..` by first appearance over word nodes.
    pub fn partition(&self) -> Partition {
        let mut relabel: BTreeMap<usize, usize> = BTreeMap::new();
        let mut next = 0;
        let mut doc_blocks = 0;
        for side in Side::BOTH {
            for v in self.graph.nodes(side) {
                relabel.entry(self.assignment[v]).or_insert_with(|| {
                    next += 1;
                    next - 1
                });
            }
            if side == Side::Doc {
                doc_blocks = next;
            }
        }
        Partition {
            assignment: self.assignment.iter().map(|b| relabel[b]).collect(),
            doc_nodes: self.graph.count(Side::Doc),
            doc_blocks,
            word_blocks: next - doc_blocks,
        }
    }

    /// Full evaluation from the block matrices.
    pub fn description_length(&self) -> DescriptionLength {
        let g = self.graph;
        let e_total = g.total();
        let mut sparse = 0.0;
        for &r in &self.active[Side::Doc.index()] {
            let er = self.block_degree[r] as f64;
            for (&s, &ers) in &self.block_edges[r] {
                if ers > 0 {
                    let es = self.block_degree[s] as f64;
                    sparse += ers as f64 * (ers as f64 / (er * es)).ln();
                }
            }
        }
        let entropy = -(e_total as f64) - sparse - g.ln_degree_factorials();

        let partition = Side::BOTH
            .iter()
            .map(|&side| {
                side_partition_term(
                    g.count(side),
                    self.block_count(side),
                    self.blocks(side).map(|b| self.block_size[b]),
                )
            })
            .sum();

        let degrees = self
            .active
            .iter()
            .flatten()
            .map(|&b| ln_multiset(self.block_size[b] as u64, self.block_degree[b]))
            .sum();

        let pairs = (self.block_count(Side::Doc) * self.block_count(Side::Word)) as u64;
        let edges = ln_multiset(pairs, e_total);

        DescriptionLength::new(entropy, partition, degrees, edges)
    }

    /// Edge multiplicity from `v` into each block, sorted by block id.
    pub(crate) fn neighbor_blocks(&self, v: usize) -> Vec<(usize, u64)> {
        let mut acc: BTreeMap<usize, u64> = BTreeMap::new();
        for &(u, m) in self.graph.neighbors(v) {
            *acc.entry(self.assignment[u]).or_insert(0) += m;
        }
        acc.into_iter().collect()
    }

    fn check_target(&self, side: Side, target: MoveTarget) -> Result<(), BlockModelError> {
        if let MoveTarget::Block(s) = target {
            if !self.is_active(s) {
                return Err(BlockModelError::UnknownBlock(s));
            }
            if self.block_side[s] != side {
                return Err(BlockModelError::WrongSide { block: s });
            }
        }
        Ok(())
    }

    /// DL(after) − DL(before) for moving `v` to `target`. Does not mutate.
    pub fn delta_dl_move(&self, v: usize, target: MoveTarget) -> Result<f64, BlockModelError> {
        let side = self.graph.side(v);
        self.check_target(side, target)?;
        let nb = self.neighbor_blocks(v);
        Ok(self.delta_move_with(v, &nb, target))
    }

    pub(crate) fn delta_move_with(&self, v: usize, nb: &[(usize, u64)], target: MoveTarget) -> f64 {
        let r = self.assignment[v];
        if target == MoveTarget::Block(r) {
            return 0.0;
        }
        if target == MoveTarget::NewBlock && self.block_size[r] == 1 {
            return 0.0;
        }
        self.delta_transfer(r, 1, self.graph.degree(v), nb, target)
    }

    /// DL change for folding block `r` into block `s` (same side).
    pub fn delta_dl_merge(&self, r: usize, s: usize) -> Result<f64, BlockModelError> {
        if !self.is_active(r) {
            return Err(BlockModelError::UnknownBlock(r));
        }
        self.check_target(self.block_side[r], MoveTarget::Block(s))?;
        if r == s {
            return Ok(0.0);
        }
        Ok(self.delta_merge_unchecked(r, s))
    }

    pub(crate) fn delta_merge_unchecked(&self, r: usize, s: usize) -> f64 {
        let nb: Vec<(usize, u64)> = self.block_edges[r].iter().map(|(&t, &m)| (t, m)).collect();
        self.delta_transfer(r, self.block_size[r], self.block_degree[r], &nb, MoveTarget::Block(s))
    }

    /// Moving `count` nodes of total degree `k` with block-neighbour counts
    /// `nb` out of `r` and into `target`.
    fn delta_transfer(&self, r: usize, count: usize, k: u64, nb: &[(usize, u64)], target: MoveTarget) -> f64 {
        let side = self.block_side[r];
        let (s, ns, es) = match target {
            MoveTarget::Block(s) => (Some(s), self.block_size[s], self.block_degree[s]),
            MoveTarget::NewBlock => (None, 0, 0),
        };
        let nr = self.block_size[r];
        let er = self.block_degree[r];

        // entropy: -Σ_pairs xlnx(e_rs) + Σ_blocks xlnx(e_r)
        let mut d_entropy = 0.0;
        for &(t, m) in nb {
            let ert = self.block_edge_count(r, t);
            let est = s.map_or(0, |s| self.block_edge_count(s, t));
            d_entropy -= xlnx(ert - m) - xlnx(ert) + xlnx(est + m) - xlnx(est);
        }
        d_entropy += xlnx(er - k) - xlnx(er) + xlnx(es + k) - xlnx(es);

        let b_old = self.block_count(side);
        let b_new = b_old - usize::from(count == nr) + usize::from(s.is_none());
        let n_side = self.graph.count(side) as u64;

        let mut d_partition = -(ln_factorial((nr - count) as u64) - ln_factorial(nr as u64))
            - (ln_factorial((ns + count) as u64) - ln_factorial(ns as u64));
        if b_new != b_old {
            d_partition += ln_binomial(n_side - 1, b_new as u64 - 1)
                - ln_binomial(n_side - 1, b_old as u64 - 1);
        }

        let d_degrees = ln_multiset((nr - count) as u64, er - k) - ln_multiset(nr as u64, er)
            + ln_multiset((ns + count) as u64, es + k)
            - ln_multiset(ns as u64, es);

        let mut d_edges = 0.0;
        if b_new != b_old {
            let other = self.block_count(side.other());
            let e = self.graph.total();
            d_edges = ln_multiset((b_new * other) as u64, e) - ln_multiset((b_old * other) as u64, e);
        }

        d_entropy + d_partition + d_degrees + d_edges
    }

    fn allocate_block(&mut self, side: Side) -> usize {
        let b = match self.free.pop_first() {
            Some(b) => b,
            None => {
                self.block_side.push(side);
                self.block_size.push(0);
                self.block_degree.push(0);
                self.block_edges.push(BTreeMap::new());
                self.block_side.len() - 1
            }
        };
        self.block_side[b] = side;
        self.active[side.index()].insert(b);
        b
    }

    fn release_if_empty(&mut self, b: usize) {
        if self.block_size[b] == 0 {
            debug_assert!(self.block_edges[b].is_empty());
            self.active[self.block_side[b].index()].remove(&b);
            self.free.insert(b);
        }
    }

    fn shift_edges(&mut self, from: usize, to: usize, t: usize, m: u64) {
        for (a, b) in [(from, t), (t, from)] {
            let row = &mut self.block_edges[a];
            let e = row.get_mut(&b).expect("edge count present");
            *e -= m;
            if *e == 0 {
                row.remove(&b);
            }
        }
        *self.block_edges[to].entry(t).or_insert(0) += m;
        *self.block_edges[t].entry(to).or_insert(0) += m;
    }

    /// Moves `v`; returns the block it landed in.
    pub fn apply_move(&mut self, v: usize, target: MoveTarget) -> Result<usize, BlockModelError> {
        let side = self.graph.side(v);
        self.check_target(side, target)?;
        let r = self.assignment[v];
        let s = match target {
            MoveTarget::Block(s) if s == r => return Ok(r),
            MoveTarget::Block(s) => s,
            MoveTarget::NewBlock if self.block_size[r] == 1 => return Ok(r),
            MoveTarget::NewBlock => self.allocate_block(side),
        };
        let k = self.graph.degree(v);
        for (t, m) in self.neighbor_blocks(v) {
            self.shift_edges(r, s, t, m);
        }
        self.assignment[v] = s;
        self.block_size[r] -= 1;
        self.block_size[s] += 1;
        self.block_degree[r] -= k;
        self.block_degree[s] += k;
        self.release_if_empty(r);
        Ok(s)
    }

    /// Folds block `r` into `s`.
    pub fn merge_blocks(&mut self, r: usize, s: usize) -> Result<(), BlockModelError> {
        if !self.is_active(r) {
            return Err(BlockModelError::UnknownBlock(r));
        }
        self.check_target(self.block_side[r], MoveTarget::Block(s))?;
        if r == s {
            return Ok(());
        }
        let row: Vec<(usize, u64)> = self.block_edges[r].iter().map(|(&t, &m)| (t, m)).collect();
        for (t, m) in row {
            self.shift_edges(r, s, t, m);
        }
        for b in self.assignment.iter_mut() {
            if *b == r {
                *b = s;
            }
        }
        self.block_size[s] += self.block_size[r];
        self.block_degree[s] += self.block_degree[r];
        self.block_size[r] = 0;
        self.block_degree[r] = 0;
        self.release_if_empty(r);
        Ok(())
    }

    /// Checks the cached matrices against a rebuild from the assignment.
    pub fn is_consistent(&self) -> bool {
        let fresh = Self::build(self.graph, self.assignment.clone());
        let active_match = (0..2).all(|i| self.active[i] == fresh.active[i]);
        active_match
            && self.active.iter().flatten().all(|&b| {
                self.block_size[b] == fresh.block_size[b]
                    && self.block_degree[b] == fresh.block_degree[b]
                    && self.block_edges[b] == fresh.block_edges[b]
                    && self.block_side[b] == fresh.block_side[b]
            })
    }
}
