use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Doc,
    Word,
}

impl Side {
    pub fn index(self) -> usize {
        match self {
            Side::Doc => 0,
            Side::Word => 1,
        }
    }

    pub fn other(self) -> Side {
        match self {
            Side::Doc => Side::Word,
            Side::Word => Side::Doc,
        }
    }

    pub const BOTH: [Side; 2] = [Side::Doc, Side::Word];
}

/// Undirected bipartite multigraph. Nodes `0..n_doc` are docs, the rest words.
#[derive(Debug, Clone, PartialEq)]
pub struct Multigraph {
    n_doc: usize,
    n_word: usize,
    adj: Vec<Vec<(usize, u64)>>,
    degree: Vec<u64>,
    total: u64,
    ln_degree_factorials: f64,
}

impl Multigraph {
    /// `edges` yields `(doc, word, multiplicity)` with side-local indices.
    /// Repeated pairs accumulate; zero multiplicities are dropped.
    pub fn from_edges<I>(n_doc: usize, n_word: usize, edges: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize, u64)>,
    {
        let n = n_doc + n_word;
        let mut rows: Vec<BTreeMap<usize, u64>> = vec![BTreeMap::new(); n];
        for (d, w, m) in edges {
            assert!(d < n_doc && w < n_word, "edge ({d}, {w}) out of range");
            if m == 0 {
                continue;
            }
            let wv = n_doc + w;
            *rows[d].entry(wv).or_default() += m;
            *rows[wv].entry(d).or_default() += m;
        }
        let adj: Vec<Vec<(usize, u64)>> =
            rows.into_iter().map(|r| r.into_iter().collect()).collect();
        let degree: Vec<u64> = adj.iter().map(|r| r.iter().map(|e| e.1).sum()).collect();
        let total = degree[..n_doc].iter().sum();
        let ln_degree_factorials = degree.iter().map(|&k| ln_factorial(k)).sum();
        Self { n_doc, n_word, adj, degree, total, ln_degree_factorials }
    }

    pub fn node_count(&self) -> usize {
        self.n_doc + self.n_word
    }

    pub fn count(&self, side: Side) -> usize {
        match side {
            Side::Doc => self.n_doc,
            Side::Word => self.n_word,
        }
    }

    pub fn nodes(&self, side: Side) -> Range<usize> {
        match side {
            Side::Doc => 0..self.n_doc,
            Side::Word => self.n_doc..self.n_doc + self.n_word,
        }
    }

    pub fn side(&self, v: usize) -> Side {
        if v < self.n_doc {
            Side::Doc
        } else {
            Side::Word
        }
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, u64)] {
        &self.adj[v]
    }

    pub fn degree(&self, v: usize) -> u64 {
        self.degree[v]
    }

    /// Total edge multiplicity E.
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Σ_v ln k_v!
    pub fn ln_degree_factorials(&self) -> f64 {
        self.ln_degree_factorials
    }

    pub fn connected_components(&self) -> usize {
        let n = self.node_count();
        let mut seen = vec![false; n];
        let mut components = 0;
        for start in 0..n {
            if seen[start] {
                continue;
            }
            components += 1;
            seen[start] = true;
            let mut stack = vec![start];
            while let Some(v) = stack.pop() {
                for &(u, _) in &self.adj[v] {
                    if !seen[u] {
                        seen[u] = true;
                        stack.push(u);
                    }
                }
            }
        }
        components
    }
}
