//! Turn–word bipartite multigraph.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blockmodel::Multigraph;
use crate::corpus::{Corpus, Eligibility, TokenBag};

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("empty network: no eligible turns")]
    Empty,
    #[error("token bags do not line up with corpus turns (at turn {0:?})")]
    BagMismatch(String),
    #[error("{bags} token bags and {elig} eligibility results for {turns} turns")]
    LengthMismatch { turns: usize, bags: usize, elig: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Count each distinct word once per turn.
    pub binarize: bool,
    /// Leave moderator turns out of the doc side.
    pub exclude_moderators: bool,
}

/// Doc nodes are eligible turns in corpus order; word nodes are the
/// vocabulary in lexicographic order. Every edge joins a doc and a word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BipartiteNetwork {
    doc_ids: Vec<String>,
    words: Vec<String>,
    /// Per doc: (word index, multiplicity), sorted by word index.
    doc_edges: Vec<Vec<(usize, u64)>>,
    doc_degree: Vec<u64>,
    word_degree: Vec<u64>,
    total: u64,
}

impl BipartiteNetwork {
    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn doc_edges(&self, doc: usize) -> &[(usize, u64)] {
        &self.doc_edges[doc]
    }

    pub fn doc_degree(&self, doc: usize) -> u64 {
        self.doc_degree[doc]
    }

    pub fn word_degree(&self, word: usize) -> u64 {
        self.word_degree[word]
    }

    /// Total edge multiplicity E.
    pub fn total_multiplicity(&self) -> u64 {
        self.total
    }

    pub fn doc_index(&self, turn_id: &str) -> Option<usize> {
        self.doc_ids.iter().position(|d| d == turn_id)
    }

    /// Node numbering used by the block model: docs first, then words.
    pub fn to_multigraph(&self) -> Multigraph {
        let edges = self
            .doc_edges
            .iter()
            .enumerate()
            .flat_map(|(d, es)| es.iter().map(move |&(w, m)| (d, w, m)));
        Multigraph::from_edges(self.doc_count(), self.word_count(), edges)
    }

    /// Tab-separated `doc_id`, `word`, `multiplicity` lines.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> Result<(), NetworkError> {
        for (d, edges) in self.doc_edges.iter().enumerate() {
            for &(w, m) in edges {
                writeln!(out, "{}\t{}\t{}", self.doc_ids[d], self.words[w], m)?;
            }
        }
        Ok(())
    }
}

/// `bags` and `elig` are in corpus turn order (`Corpus::turns`).
pub fn build_network(
    corpus: &Corpus,
    bags: &[TokenBag],
    elig: &[Eligibility],
    cfg: &NetworkConfig,
) -> Result<BipartiteNetwork, NetworkError> {
    let turns = corpus.turn_count();
    if bags.len() != turns || elig.len() != turns {
        return Err(NetworkError::LengthMismatch { turns, bags: bags.len(), elig: elig.len() });
    }
    let mut selected = Vec::new();
    for ((turn, bag), e) in corpus.turns().zip(bags).zip(elig) {
        if bag.turn_id != turn.turn_id {
            return Err(NetworkError::BagMismatch(turn.turn_id.clone()));
        }
        if e.is_eligible() && !(cfg.exclude_moderators && turn.is_moderator()) {
            selected.push(bag);
        }
    }
    if selected.is_empty() {
        return Err(NetworkError::Empty);
    }

    let mut vocab: BTreeMap<&str, usize> = BTreeMap::new();
    for bag in &selected {
        for word in bag.tokens.keys() {
            vocab.insert(word.as_str(), 0);
        }
    }
    for (i, slot) in vocab.values_mut().enumerate() {
        *slot = i;
    }
    let words: Vec<String> = vocab.keys().map(|w| w.to_string()).collect();

    let mut doc_edges = Vec::with_capacity(selected.len());
    let mut doc_degree = Vec::with_capacity(selected.len());
    let mut word_degree = vec![0u64; words.len()];
    let mut total = 0;
    for bag in &selected {
        // BTreeMap iteration keeps word indices sorted
        let edges: Vec<(usize, u64)> = bag
            .tokens
            .iter()
            .map(|(w, &c)| (vocab[w.as_str()], if cfg.binarize { 1 } else { c as u64 }))
            .collect();
        let k: u64 = edges.iter().map(|e| e.1).sum();
        for &(w, m) in &edges {
            word_degree[w] += m;
        }
        total += k;
        doc_degree.push(k);
        doc_edges.push(edges);
    }
    if total == 0 {
        return Err(NetworkError::Empty);
    }
    Ok(BipartiteNetwork {
        doc_ids: selected.iter().map(|b| b.turn_id.clone()).collect(),
        words,
        doc_edges,
        doc_degree,
        word_degree,
        total,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkStats {
    pub doc_nodes: usize,
    pub word_nodes: usize,
    pub total_multiplicity: u64,
    pub distinct_edges: usize,
    /// degree → number of nodes with that degree
    pub doc_degree_histogram: BTreeMap<u64, usize>,
    pub word_degree_histogram: BTreeMap<u64, usize>,
}

pub fn network_stats(net: &BipartiteNetwork) -> NetworkStats {
    let hist = |degrees: &[u64]| {
        let mut h = BTreeMap::new();
        for &k in degrees {
            *h.entry(k).or_insert(0) += 1;
        }
        h
    };
    NetworkStats {
        doc_nodes: net.doc_count(),
        word_nodes: net.word_count(),
        total_multiplicity: net.total,
        distinct_edges: net.doc_edges.iter().map(Vec::len).sum(),
        doc_degree_histogram: hist(&net.doc_degree),
        word_degree_histogram: hist(&net.word_degree),
    }
}
