//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use replyscope::blockmodel::Multigraph;

pub struct SmallGraph {
    pub n_doc: usize,
    pub n_word: usize,
    pub edges: Vec<(usize, usize, u64)>,
}

impl SmallGraph {
    pub fn multigraph(&self) -> Multigraph {
        Multigraph::from_edges(self.n_doc, self.n_word, self.edges.iter().copied())
    }

    pub fn node_count(&self) -> usize {
        self.n_doc + self.n_word
    }
}

/// Random bipartite multigraph where every node has at least one edge.
pub fn random_graph(rng: &mut ChaCha8Rng, n_doc: usize, n_word: usize, density: f64) -> SmallGraph {
    loop {
        let mut edges = Vec::new();
        for d in 0..n_doc {
            for w in 0..n_word {
                if rng.random_bool(density) {
                    edges.push((d, w, rng.random_range(1..=3)));
                }
            }
        }
        let mut touched = vec![false; n_doc + n_word];
        for &(d, w, _) in &edges {
            touched[d] = true;
            touched[n_doc + w] = true;
        }
        if touched.iter().all(|&t| t) {
            return SmallGraph { n_doc, n_word, edges };
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn ln_fact(n: u64) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

fn ln_choose(n: u64, k: u64) -> f64 {
    ln_fact(n) - ln_fact(k) - ln_fact(n - k)
}

fn ln_multichoose(n: u64, k: u64) -> f64 {
    if k == 0 {
        0.0
    } else {
        ln_choose(n + k - 1, k)
    }
}

/// Microcanonical degree-corrected description length (nats), from a dense
/// block matrix. `doc_block` and `word_block` use compact labels.
pub fn dense_dl(g: &SmallGraph, doc_block: &[usize], word_block: &[usize]) -> f64 {
    let bd = doc_block.iter().max().map_or(0, |m| m + 1);
    let bw = word_block.iter().max().map_or(0, |m| m + 1);
    let mut ers = vec![vec![0u64; bw]; bd];
    let mut k = vec![0u64; g.node_count()];
    for &(d, w, m) in &g.edges {
        ers[doc_block[d]][word_block[w]] += m;
        k[d] += m;
        k[g.n_doc + w] += m;
    }
    let e: u64 = g.edges.iter().map(|e| e.2).sum();
    let er: Vec<u64> = ers.iter().map(|r| r.iter().sum()).collect();
    let es: Vec<u64> = (0..bw).map(|s| ers.iter().map(|r| r[s]).sum()).collect();

    let mut entropy = -(e as f64) - k.iter().map(|&x| ln_fact(x)).sum::<f64>();
    for r in 0..bd {
        for s in 0..bw {
            let x = ers[r][s];
            if x > 0 {
                entropy -= x as f64 * (x as f64 / (er[r] as f64 * es[s] as f64)).ln();
            }
        }
    }

    let side = |labels: &[usize], blocks: usize| -> (f64, Vec<u64>) {
        let mut sizes = vec![0u64; blocks];
        for &b in labels {
            sizes[b] += 1;
        }
        let n = labels.len() as u64;
        let term = ln_choose(n - 1, blocks as u64 - 1) + ln_fact(n)
            - sizes.iter().map(|&s| ln_fact(s)).sum::<f64>()
            + (n as f64).ln();
        (term, sizes)
    };
    let (pd, nd) = side(doc_block, bd);
    let (pw, nw) = side(word_block, bw);

    let degrees: f64 = nd.iter().zip(&er).chain(nw.iter().zip(&es)).map(|(&n, &e)| ln_multichoose(n, e)).sum();
    let edges = ln_multichoose((bd * bw) as u64, e);
    entropy + pd + pw + degrees + edges
}

/// Dense DL of a node assignment with arbitrary side-pure labels.
pub fn dense_dl_of(g: &SmallGraph, assignment: &[usize]) -> f64 {
    let compact = |labels: &[usize]| -> Vec<usize> {
        let mut seen: Vec<usize> = Vec::new();
        labels
            .iter()
            .map(|b| match seen.iter().position(|x| x == b) {
                Some(i) => i,
                None => {
                    seen.push(*b);
                    seen.len() - 1
                }
            })
            .collect()
    };
    dense_dl(g, &compact(&assignment[..g.n_doc]), &compact(&assignment[g.n_doc..]))
}

/// Every set partition of `n` items as a restricted growth string.
pub fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    fn go(cur: &mut Vec<usize>, n: usize, max: usize, out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for b in 0..=max + 1 {
            cur.push(b);
            go(cur, n, max.max(b), out);
            cur.pop();
        }
    }
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    go(&mut vec![0], n, 0, &mut out);
    out
}

/// Minimum dense DL over all side-pure partitions.
pub fn exhaustive_min_dl(g: &SmallGraph) -> f64 {
    let docs = set_partitions(g.n_doc);
    let words = set_partitions(g.n_word);
    let mut best = f64::INFINITY;
    for d in &docs {
        for w in &words {
            best = best.min(dense_dl(g, d, w));
        }
    }
    best
}

#[derive(Clone, Copy, Debug)]
pub enum RefLinkage {
    Average,
    Complete,
    Single,
}

/// A reference merge: the two leaf sets joined and their distance.
#[derive(Debug)]
pub struct RefMerge {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub height: f64,
}

/// Naive agglomeration that recomputes every cluster distance from the
/// original matrix. Ties go to the pair of clusters with the smallest
/// (min leaf, min leaf) key; the left side holds the smaller leaf.
pub fn brute_linkage(d: &[Vec<f64>], method: RefLinkage) -> Vec<RefMerge> {
    let n = d.len();
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut out = Vec::new();
    while clusters.len() > 1 {
        let dist = |a: &[usize], b: &[usize]| -> f64 {
            let all = a.iter().flat_map(|&i| b.iter().map(move |&j| d[i][j]));
            match method {
                RefLinkage::Average => all.sum::<f64>() / (a.len() * b.len()) as f64,
                RefLinkage::Complete => all.fold(f64::NEG_INFINITY, f64::max),
                RefLinkage::Single => all.fold(f64::INFINITY, f64::min),
            }
        };
        let mut best: Option<(f64, (usize, usize), usize, usize)> = None;
        for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                let h = dist(&clusters[i], &clusters[j]);
                let (ki, kj) = (clusters[i][0], clusters[j][0]);
                let key = (ki.min(kj), ki.max(kj));
                if best.as_ref().is_none_or(|b| h < b.0 || (h == b.0 && key < b.1)) {
                    best = Some((h, key, i, j));
                }
            }
        }
        let (height, _, i, j) = best.unwrap();
        let b = clusters.remove(j);
        let a = clusters.remove(i);
        let (left, right) = if a[0] < b[0] { (a, b) } else { (b, a) };
        let mut joined: Vec<usize> = left.iter().chain(&right).copied().collect();
        joined.sort_unstable();
        out.push(RefMerge { left, right, height });
        clusters.push(joined);
    }
    out
}

/// Symmetric zero-diagonal matrix. With `grid`, entries come from a small set
/// of values so ties are common.
#[allow(clippy::needless_range_loop)]
pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize, grid: bool) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..i {
            let v = if grid { rng.random_range(1..=4) as f64 * 0.25 } else { rng.random_range(0.01..1.0) };
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    m
}

pub struct PlantedFit {
    pub nmi: f64,
    pub seconds: f64,
    pub docs: usize,
}

/// Two disjoint vocabularies with `noise` leakage; NMI of the level-0 doc
/// partition against the planted topics.
pub fn planted_fit(docs: usize, words: usize, noise: f64, seed: u64) -> PlantedFit {
    use replyscope::blockmodel::{fit, FitConfig};
    use replyscope::corpus::{eligibility, tokenize, EligibilityConfig, TokenizerConfig};
    use replyscope::network::{build_network, NetworkConfig};
    use replyscope::synth::{generate, ScenarioSpec};

    let g = generate(&ScenarioSpec::two_topics(docs, words, noise, seed)).unwrap();
    let tok = TokenizerConfig::default();
    let bags: Vec<_> = g.corpus.turns().map(|t| tokenize(t, &tok)).collect();
    let elig: Vec<_> = bags.iter().map(|b| eligibility(b, &EligibilityConfig::default())).collect();
    let net = build_network(&g.corpus, &bags, &elig, &NetworkConfig::default()).unwrap();
    let start = std::time::Instant::now();
    let result = fit(&net, seed, &FitConfig::default()).unwrap();
    let seconds = start.elapsed().as_secs_f64();
    let level0 = &result.hierarchy.levels[0].assignment;
    let (mut found, mut planted) = (Vec::new(), Vec::new());
    for (i, id) in net.doc_ids().iter().enumerate() {
        found.push(level0[i]);
        planted.push(g.truth.doc_topics[id]);
    }
    PlantedFit { nmi: replyscope::score::nmi(&found, &planted), seconds, docs: found.len() }
}
