//! Agglomerative clustering of debates and the threshold cut.
//!
//! Cluster distances are updated with the Lance-Williams recurrence. When
//! several pairs are at the same distance, the pair whose smallest member
//! indices are lowest (lexicographically) merges first.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::reply::DistanceMatrix;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("need at least 2 items to cluster, have {0}")]
    TooFewItems(usize),
    #[error("distance matrix is not square or not symmetric")]
    BadMatrix,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    #[default]
    Average,
    Complete,
    Single,
}

impl fmt::Display for Linkage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Linkage::Average => "average",
            Linkage::Complete => "complete",
            Linkage::Single => "single",
        })
    }
}

impl FromStr for Linkage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "average" => Ok(Linkage::Average),
            "complete" => Ok(Linkage::Complete),
            "single" => Ok(Linkage::Single),
            other => Err(format!("unknown linkage {other:?} (average | complete | single)")),
        }
    }
}

/// Nodes `0..n` are leaves; merge `i` creates node `n + i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Merge<T: Scalar> {
    /// The side holding the smaller leaf index.
    pub left: usize,
    pub right: usize,
    pub height: T,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Dendrogram<T: Scalar> {
    pub debate_ids: Vec<String>,
    pub linkage: Linkage,
    pub merges: Vec<Merge<T>>,
}

impl<T: Scalar> Dendrogram<T> {
    pub fn leaf_count(&self) -> usize {
        self.debate_ids.len()
    }

    pub fn root_height(&self) -> T {
        self.merges.last().map_or(T::zero(), |m| m.height)
    }

    /// Leaf indices under `node`, ascending.
    pub fn leaves(&self, node: usize) -> Vec<usize> {
        let n = self.leaf_count();
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(v) = stack.pop() {
            if v < n {
                out.push(v);
            } else {
                let m = &self.merges[v - n];
                stack.push(m.left);
                stack.push(m.right);
            }
        }
        out.sort_unstable();
        out
    }
}

fn check_matrix<T: Scalar>(m: &DistanceMatrix<T>) -> Result<(), ClusterError> {
    let n = m.len();
    if n < 2 {
        return Err(ClusterError::TooFewItems(n));
    }
    if m.distance.len() != n || m.distance.iter().any(|r| r.len() != n) {
        return Err(ClusterError::BadMatrix);
    }
    for i in 0..n {
        for j in 0..i {
            if m.distance[i][j] != m.distance[j][i] || m.distance[i][j].is_nan() {
                return Err(ClusterError::BadMatrix);
            }
        }
    }
    Ok(())
}

pub fn linkage<T: Scalar>(m: &DistanceMatrix<T>, method: Linkage) -> Result<Dendrogram<T>, ClusterError> {
    check_matrix(m)?;
    let n = m.len();
    let mut d: Vec<Vec<T>> = m.distance.clone();
    // per active slot: dendrogram node, size, smallest leaf
    let mut node: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; n];
    let mut key: Vec<usize> = (0..n).collect();
    let mut active = vec![true; n];
    let mut merges = Vec::with_capacity(n - 1);

    for step in 0..n - 1 {
        let mut best: Option<(T, (usize, usize), usize, usize)> = None;
        for i in (0..n).filter(|&i| active[i]) {
            for j in (i + 1..n).filter(|&j| active[j]) {
                let pair = (key[i].min(key[j]), key[i].max(key[j]));
                let better = match &best {
                    None => true,
                    Some((h, p, _, _)) => d[i][j] < *h || (d[i][j] == *h && pair < *p),
                };
                if better {
                    best = Some((d[i][j], pair, i, j));
                }
            }
        }
        let (height, _, a, b) = best.expect("two active clusters remain");
        let (keep, gone) = if key[a] < key[b] { (a, b) } else { (b, a) };
        let (na, nb) = (T::from_usize_lossy(size[keep]), T::from_usize_lossy(size[gone]));
        for k in (0..n).filter(|&k| active[k] && k != keep && k != gone) {
            let (dk_a, dk_b) = (d[k][keep], d[k][gone]);
            let v = match method {
                Linkage::Average => (na * dk_a + nb * dk_b) / (na + nb),
                Linkage::Complete => dk_a.max(dk_b),
                Linkage::Single => dk_a.min(dk_b),
            };
            d[k][keep] = v;
            d[keep][k] = v;
        }
        merges.push(Merge { left: node[keep], right: node[gone], height, size: size[keep] + size[gone] });
        active[gone] = false;
        size[keep] += size[gone];
        node[keep] = n + step;
        key[keep] = key[keep].min(key[gone]);
    }
    Ok(Dendrogram { debate_ids: m.debate_ids.clone(), linkage: method, merges })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DebateCluster {
    pub cluster_id: usize,
    pub debate_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DebateClusters {
    /// Components of two or more debates, ordered by their first member.
    pub clusters: Vec<DebateCluster>,
    /// Debates left on their own by the cut.
    pub unassigned: Vec<String>,
}

impl DebateClusters {
    /// Cluster id per debate; `None` for unassigned ones.
    pub fn assignment(&self) -> BTreeMap<&str, Option<usize>> {
        let mut out: BTreeMap<&str, Option<usize>> = self.unassigned.iter().map(|d| (d.as_str(), None)).collect();
        for c in &self.clusters {
            for d in &c.debate_ids {
                out.insert(d.as_str(), Some(c.cluster_id));
            }
        }
        out
    }
}

/// Connected components of the merges strictly below `threshold`.
pub fn cut<T: Scalar>(dendro: &Dendrogram<T>, threshold: T) -> DebateClusters {
    let n = dendro.leaf_count();
    let mut parent: Vec<usize> = (0..2 * n).collect();
    fn find(parent: &mut [usize], mut v: usize) -> usize {
        while parent[v] != v {
            parent[v] = parent[parent[v]];
            v = parent[v];
        }
        v
    }
    for (i, m) in dendro.merges.iter().enumerate() {
        if m.height < threshold {
            let (a, b) = (find(&mut parent, m.left), find(&mut parent, m.right));
            parent[a] = n + i;
            parent[b] = n + i;
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for leaf in 0..n {
        groups.entry(find(&mut parent, leaf)).or_default().push(leaf);
    }
    let mut groups: Vec<Vec<usize>> = groups.into_values().collect();
    groups.sort_by_key(|g| g[0]);
    let mut clusters = Vec::new();
    let mut unassigned = Vec::new();
    for g in groups {
        if g.len() == 1 {
            unassigned.push(dendro.debate_ids[g[0]].clone());
        } else {
            clusters.push(DebateCluster {
                cluster_id: clusters.len(),
                debate_ids: g.into_iter().map(|i| dendro.debate_ids[i].clone()).collect(),
            });
        }
    }
    DebateClusters { clusters, unassigned }
}

fn nested<T: Scalar>(d: &Dendrogram<T>, v: usize) -> Value {
    let n = d.leaf_count();
    if v < n {
        return json!({ "debate_id": d.debate_ids[v] });
    }
    let m = &d.merges[v - n];
    json!({
        "height": m.height.as_f64(),
        "size": m.size,
        "children": [nested(d, m.left), nested(d, m.right)],
    })
}

/// Nested JSON tree, root first.
pub fn write_dendrogram<T: Scalar, W: Write>(d: &Dendrogram<T>, out: W) -> Result<(), ClusterError> {
    let root = d.leaf_count() + d.merges.len() - 1;
    let doc = json!({ "linkage": d.linkage, "tree": nested(d, root) });
    serde_json::to_writer_pretty(out, &doc).map_err(std::io::Error::from)?;
    Ok(())
}

pub fn write_clusters<W: Write>(clusters: &DebateClusters, threshold: f64, out: W) -> Result<(), ClusterError> {
    let doc = json!({
        "threshold": threshold,
        "clusters": clusters.clusters,
        "unassigned": clusters.unassigned,
    });
    serde_json::to_writer_pretty(out, &doc).map_err(std::io::Error::from)?;
    Ok(())
}

/// Plot geometry: leaves at x = 0, 1, ... in tree order, and one
/// `[[x, y]; 4]` bracket per merge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DendrogramCoords {
    pub leaf_order: Vec<String>,
    pub links: Vec<[[f64; 2]; 4]>,
}

pub fn dendrogram_coordinates<T: Scalar>(d: &Dendrogram<T>) -> DendrogramCoords {
    let n = d.leaf_count();
    let mut x = vec![0.0; n + d.merges.len()];
    let mut y = vec![0.0; n + d.merges.len()];
    let mut order = Vec::with_capacity(n);
    let root = n + d.merges.len() - 1;
    let mut stack = vec![root];
    while let Some(v) = stack.pop() {
        if v < n {
            x[v] = order.len() as f64;
            order.push(v);
        } else {
            let m = &d.merges[v - n];
            stack.push(m.right);
            stack.push(m.left);
        }
    }
    let mut links = Vec::with_capacity(d.merges.len());
    for (i, m) in d.merges.iter().enumerate() {
        let h = m.height.as_f64();
        x[n + i] = (x[m.left] + x[m.right]) / 2.0;
        y[n + i] = h;
        links.push([[x[m.left], y[m.left]], [x[m.left], h], [x[m.right], h], [x[m.right], y[m.right]]]);
    }
    DendrogramCoords { leaf_order: order.into_iter().map(|i| d.debate_ids[i].clone()).collect(), links }
}
