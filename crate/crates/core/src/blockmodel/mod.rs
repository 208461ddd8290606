//! Nested degree-corrected stochastic block model for bipartite multigraphs.
//!
//! Inference is zero-temperature: greedy node moves and sampled agglomerative
//! block merges, both minimising the description length in [`state`]. The
//! number of blocks per side is found by a bracketing search over the total
//! block count rather than fixed in advance. Upper hierarchy levels come from
//! fitting the block multigraph of the level below, until each side is a
//! single block.

mod fit;
mod graph;
mod merge;
mod state;
mod sweep;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fit::{fit, fit_graph, FitConfig, FitResult};
pub use graph::{Multigraph, Side};
pub use merge::{agglomerative_merge, MergeConfig};
pub use state::{BlockState, DescriptionLength, MoveTarget};
pub use sweep::{greedy_sweep, sweep_until_stable, SweepConfig, ACCEPT_EPS};

#[derive(Debug, Error)]
pub enum BlockModelError {
    #[error("empty network")]
    EmptyNetwork,
    #[error("block {block} is on the other side of the graph")]
    WrongSide { block: usize },
    #[error("block {0} does not exist")]
    UnknownBlock(usize),
    #[error("block {0} mixes doc and word nodes")]
    MixedBlock(usize),
    #[error("assignment has {got} entries for {expected} nodes")]
    AssignmentLength { expected: usize, got: usize },
    #[error("invalid target: {0}")]
    InvalidTarget(String),
    #[error("level {level} out of range (hierarchy has {levels})")]
    InvalidLevel { level: usize, levels: usize },
}

/// Compact side-pure partition: doc blocks are `0..doc_blocks`, word blocks
/// `doc_blocks..doc_blocks + word_blocks`. Nodes `0..doc_nodes` are docs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub assignment: Vec<usize>,
    pub doc_nodes: usize,
    pub doc_blocks: usize,
    pub word_blocks: usize,
}

impl Partition {
    pub fn node_count(&self) -> usize {
        self.assignment.len()
    }

    pub fn block_count(&self) -> usize {
        self.doc_blocks + self.word_blocks
    }

    pub fn node_side(&self, v: usize) -> Side {
        if v < self.doc_nodes {
            Side::Doc
        } else {
            Side::Word
        }
    }

    pub fn block_side(&self, b: usize) -> Side {
        if b < self.doc_blocks {
            Side::Doc
        } else {
            Side::Word
        }
    }

    /// Blocks are side-pure, labels are compact and every block is used.
    pub fn is_valid(&self) -> bool {
        let mut used = vec![false; self.block_count()];
        for (v, &b) in self.assignment.iter().enumerate() {
            if b >= used.len() || self.block_side(b) != self.node_side(v) {
                return false;
            }
            used[b] = true;
        }
        used.into_iter().all(|u| u)
    }
}

/// Level 0 partitions the network's nodes; level `l + 1` partitions the
/// blocks of level `l`, which are its nodes in block-id order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hierarchy {
    pub levels: Vec<Partition>,
}

impl Hierarchy {
    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn check_level(&self, level: usize) -> Result<(), BlockModelError> {
        if level < self.levels.len() {
            Ok(())
        } else {
            Err(BlockModelError::InvalidLevel { level, levels: self.levels.len() })
        }
    }

    /// Block of every original node at `level`.
    pub fn node_blocks(&self, level: usize) -> Result<Vec<usize>, BlockModelError> {
        self.check_level(level)?;
        let mut blocks = self.levels[0].assignment.clone();
        for upper in &self.levels[1..=level] {
            for b in blocks.iter_mut() {
                *b = upper.assignment[*b];
            }
        }
        Ok(blocks)
    }

    /// `(doc_blocks, word_blocks)` at `level`.
    pub fn block_counts(&self, level: usize) -> Result<(usize, usize), BlockModelError> {
        self.check_level(level)?;
        let p = &self.levels[level];
        Ok((p.doc_blocks, p.word_blocks))
    }

    /// Each level is valid, partitions exactly the blocks below it, and the
    /// top has at most one block per side.
    pub fn is_valid(&self) -> bool {
        let Some(top) = self.levels.last() else {
            return false;
        };
        let chained = self.levels.windows(2).all(|w| {
            w[1].assignment.len() == w[0].block_count() && w[1].doc_nodes == w[0].doc_blocks
        });
        chained
            && self.levels.iter().all(Partition::is_valid)
            && top.doc_blocks <= 1
            && top.word_blocks <= 1
    }
}
