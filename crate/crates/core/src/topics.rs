//! Topics (word blocks) and topic-mixture document clusters (doc blocks)
//! read off a fitted hierarchy.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blockmodel::{BlockModelError, Hierarchy};
use crate::network::BipartiteNetwork;

#[derive(Debug, Error)]
pub enum TopicError {
    #[error(transparent)]
    Level(#[from] BlockModelError),
    #[error("hierarchy covers {hierarchy} nodes but the network has {network}")]
    Mismatch { hierarchy: usize, network: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topic {
    pub topic_id: usize,
    /// P(word | topic), heaviest first; ties in word order.
    pub word_weights: Vec<(String, f64)>,
}

impl Topic {
    pub fn top_words(&self, k: usize) -> &[(String, f64)] {
        &self.word_weights[..k.min(self.word_weights.len())]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicMixture {
    pub doc_id: String,
    /// P(topic | doc), indexed by topic id.
    pub mixture: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocCluster {
    pub cluster_id: usize,
    pub doc_ids: Vec<String>,
}

struct LevelView {
    blocks: Vec<usize>,
    doc_blocks: usize,
    word_blocks: usize,
}

fn view(hier: &Hierarchy, net: &BipartiteNetwork, level: usize) -> Result<LevelView, TopicError> {
    let network = net.doc_count() + net.word_count();
    let hierarchy = hier.levels.first().map_or(0, |p| p.node_count());
    if hierarchy != network {
        return Err(TopicError::Mismatch { hierarchy, network });
    }
    let blocks = hier.node_blocks(level)?;
    let (doc_blocks, word_blocks) = hier.block_counts(level)?;
    Ok(LevelView { blocks, doc_blocks, word_blocks })
}

/// One topic per word block at `level`, weights proportional to word degree.
pub fn extract_topics(hier: &Hierarchy, net: &BipartiteNetwork, level: usize) -> Result<Vec<Topic>, TopicError> {
    let v = view(hier, net, level)?;
    let n_doc = net.doc_count();
    let mut topics: Vec<Vec<(String, u64)>> = vec![Vec::new(); v.word_blocks];
    for w in 0..net.word_count() {
        let t = v.blocks[n_doc + w] - v.doc_blocks;
        topics[t].push((net.words()[w].clone(), net.word_degree(w)));
    }
    Ok(topics
        .into_iter()
        .enumerate()
        .map(|(topic_id, mut words)| {
            let mass: u64 = words.iter().map(|w| w.1).sum();
            words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            let word_weights = words
                .into_iter()
                .map(|(w, k)| (w, k as f64 / mass as f64))
                .collect();
            Topic { topic_id, word_weights }
        })
        .collect())
}

/// Fraction of each doc's token mass on the words of each topic.
pub fn doc_mixtures(hier: &Hierarchy, net: &BipartiteNetwork, level: usize) -> Result<Vec<TopicMixture>, TopicError> {
    let v = view(hier, net, level)?;
    let n_doc = net.doc_count();
    Ok((0..n_doc)
        .map(|d| {
            let mut mass = vec![0u64; v.word_blocks];
            for &(w, m) in net.doc_edges(d) {
                mass[v.blocks[n_doc + w] - v.doc_blocks] += m;
            }
            let k = net.doc_degree(d) as f64;
            TopicMixture {
                doc_id: net.doc_ids()[d].clone(),
                mixture: mass.into_iter().map(|m| m as f64 / k).collect(),
            }
        })
        .collect())
}

/// Doc blocks at `level`, members in network order.
pub fn doc_clusters(hier: &Hierarchy, net: &BipartiteNetwork, level: usize) -> Result<Vec<DocCluster>, TopicError> {
    let v = view(hier, net, level)?;
    let mut clusters: Vec<DocCluster> = (0..v.doc_blocks)
        .map(|cluster_id| DocCluster { cluster_id, doc_ids: Vec::new() })
        .collect();
    for (d, id) in net.doc_ids().iter().enumerate() {
        clusters[v.blocks[d]].doc_ids.push(id.clone());
    }
    Ok(clusters)
}

#[derive(Serialize)]
struct TopicExport<'a> {
    topic_id: usize,
    size: usize,
    top_words: &'a [(String, f64)],
}

/// JSON list of topics with their `k` heaviest words.
pub fn write_topics<W: Write>(topics: &[Topic], k: usize, out: W) -> Result<(), TopicError> {
    let export: Vec<TopicExport<'_>> = topics
        .iter()
        .map(|t| TopicExport { topic_id: t.topic_id, size: t.word_weights.len(), top_words: t.top_words(k) })
        .collect();
    serde_json::to_writer_pretty(out, &export).map_err(std::io::Error::from)?;
    Ok(())
}

/// `doc_id,topic_0,topic_1,...` rows.
pub fn write_mixtures_csv<W: Write>(mixtures: &[TopicMixture], mut out: W) -> Result<(), TopicError> {
    let width = mixtures.first().map_or(0, |m| m.mixture.len());
    let header: Vec<String> = (0..width).map(|t| format!("topic_{t}")).collect();
    writeln!(out, "doc_id,{}", header.join(","))?;
    for m in mixtures {
        let row: Vec<String> = m.mixture.iter().map(|x| x.to_string()).collect();
        writeln!(out, "{},{}", m.doc_id, row.join(","))?;
    }
    Ok(())
}
