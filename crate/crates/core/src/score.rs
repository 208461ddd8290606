//! Comparison of pipeline outputs with a synthetic scenario's ground truth.
//!
//! NMI uses the arithmetic-mean normalisation `2 I(A;B) / (H(A) + H(B))`,
//! defined as 1 when both partitions are a single block. Unassigned debates
//! count as singleton clusters.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::DebateClusters;
use crate::labels::Labeling;
use crate::reply::LabelDistribution;
use crate::scalar::Scalar;
use crate::synth::GroundTruth;
use crate::topics::{DocCluster, Topic};

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("outputs and ground truth disagree: {0}")]
    Mismatch(String),
}

/// Normalised mutual information of two labelings of the same items.
pub fn nmi<A: Ord, B: Ord>(a: &[A], b: &[B]) -> f64 {
    assert_eq!(a.len(), b.len(), "partitions of different item sets");
    let n = a.len() as f64;
    if a.is_empty() {
        return 1.0;
    }
    // ordered maps keep the summation order, and so the result, reproducible
    let mut joint: BTreeMap<(&A, &B), f64> = BTreeMap::new();
    let mut ca: BTreeMap<&A, f64> = BTreeMap::new();
    let mut cb: BTreeMap<&B, f64> = BTreeMap::new();
    for (x, y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1.0;
        *ca.entry(x).or_default() += 1.0;
        *cb.entry(y).or_default() += 1.0;
    }
    let entropy = |c: &mut dyn Iterator<Item = f64>| -> f64 { c.map(|k| -(k / n) * (k / n).ln()).sum() };
    let ha = entropy(&mut ca.values().copied());
    let hb = entropy(&mut cb.values().copied());
    if ha == 0.0 && hb == 0.0 {
        return 1.0;
    }
    let mi: f64 = joint.iter().map(|(&(x, y), &k)| (k / n) * (k * n / (ca[x] * cb[y])).ln()).sum();
    (2.0 * mi / (ha + hb)).clamp(0.0, 1.0)
}

/// NMI over the items both maps know; fails if they share none.
fn keyed_nmi<K: Ord + Clone, A: Ord, B: Ord>(
    pred: &BTreeMap<K, A>,
    truth: &BTreeMap<K, B>,
    what: &str,
) -> Result<f64, ScoreError> {
    let (a, b): (Vec<&A>, Vec<&B>) = pred.iter().filter_map(|(k, x)| truth.get(k).map(|y| (x, y))).unzip();
    if a.is_empty() {
        return Err(ScoreError::Mismatch(format!("no {what} in common")));
    }
    Ok(nmi(&a, &b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelAccuracy {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

pub fn label_accuracy(labeling: &Labeling, truth: &GroundTruth) -> Result<LabelAccuracy, ScoreError> {
    let mut correct = 0;
    for t in &labeling.turns {
        let expected = truth
            .labels
            .get(&t.turn_id)
            .ok_or_else(|| ScoreError::Mismatch(format!("turn {} has no true label", t.turn_id)))?;
        correct += usize::from(*expected == t.label);
    }
    let total = labeling.turns.len();
    if total != truth.labels.len() {
        return Err(ScoreError::Mismatch(format!("{total} labelled turns, {} in truth", truth.labels.len())));
    }
    let accuracy = if total == 0 { 1.0 } else { correct as f64 / total as f64 };
    Ok(LabelAccuracy { correct, total, accuracy })
}

/// Mean over debates of the L1 distance between distributions.
pub fn distribution_l1<T: Scalar>(pred: &[LabelDistribution<T>], truth: &GroundTruth) -> Result<f64, ScoreError> {
    let expected: BTreeMap<&str, &LabelDistribution<f64>> =
        truth.distributions.iter().map(|d| (d.debate_id.as_str(), d)).collect();
    if pred.is_empty() {
        return Err(ScoreError::Mismatch("no distributions".into()));
    }
    let mut total = 0.0;
    for p in pred {
        let e = expected
            .get(p.debate_id.as_str())
            .ok_or_else(|| ScoreError::Mismatch(format!("debate {} not in truth", p.debate_id)))?;
        total += p.probabilities.iter().zip(&e.probabilities).map(|(&x, &y)| (x.as_f64() - y).abs()).sum::<f64>();
    }
    Ok(total / pred.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAgreement {
    pub nmi: f64,
    /// Same clusters and the same unassigned debates.
    pub exact: bool,
}

pub fn cluster_agreement(clusters: &DebateClusters, truth: &GroundTruth) -> Result<ClusterAgreement, ScoreError> {
    let (exp_clusters, exp_alone) = truth.expected_clusters();
    let mut pred: BTreeMap<String, String> = BTreeMap::new();
    for c in &clusters.clusters {
        for d in &c.debate_ids {
            pred.insert(d.clone(), format!("c{}", c.cluster_id));
        }
    }
    for d in &clusters.unassigned {
        pred.insert(d.clone(), format!("alone:{d}"));
    }
    let mut expected: BTreeMap<String, String> = BTreeMap::new();
    for (i, c) in exp_clusters.iter().enumerate() {
        for d in c {
            expected.insert(d.clone(), format!("c{i}"));
        }
    }
    for d in &exp_alone {
        expected.insert(d.clone(), format!("alone:{d}"));
    }
    // debates excluded before clustering take no part
    expected.retain(|d, _| pred.contains_key(d));
    let nmi = keyed_nmi(&pred, &expected, "debates")?;

    let as_sets = |cs: Vec<Vec<String>>| -> BTreeSet<BTreeSet<String>> {
        cs.into_iter().map(|c| c.into_iter().filter(|d| expected.contains_key(d)).collect::<BTreeSet<_>>()).filter(|c| !c.is_empty()).collect()
    };
    let got = as_sets(clusters.clusters.iter().map(|c| c.debate_ids.clone()).collect());
    let want = as_sets(exp_clusters);
    let got_alone: BTreeSet<&String> = clusters.unassigned.iter().collect();
    let want_alone: BTreeSet<&String> = exp_alone.iter().filter(|d| expected.contains_key(*d)).collect();
    Ok(ClusterAgreement { nmi, exact: got == want && got_alone == want_alone })
}

/// Whatever stage outputs are available.
#[derive(Debug, Clone, Copy, Default)]
pub struct PipelineOutputs<'a> {
    pub doc_clusters: Option<&'a [DocCluster]>,
    pub topics: Option<&'a [Topic]>,
    pub labeling: Option<&'a Labeling>,
    pub distributions: Option<&'a [LabelDistribution<f64>]>,
    pub clusters: Option<&'a DebateClusters>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ScoreReport {
    pub doc_partition_nmi: Option<f64>,
    pub word_partition_nmi: Option<f64>,
    pub label_accuracy: Option<LabelAccuracy>,
    pub distribution_l1: Option<f64>,
    pub cluster_agreement: Option<ClusterAgreement>,
}

pub fn score(out: &PipelineOutputs<'_>, truth: &GroundTruth) -> Result<ScoreReport, ScoreError> {
    let mut report = ScoreReport::default();
    if let Some(clusters) = out.doc_clusters {
        let pred: BTreeMap<String, usize> =
            clusters.iter().flat_map(|c| c.doc_ids.iter().map(move |d| (d.clone(), c.cluster_id))).collect();
        report.doc_partition_nmi = Some(keyed_nmi(&pred, &truth.doc_topics, "documents")?);
    }
    if let Some(topics) = out.topics {
        let pred: BTreeMap<String, usize> =
            topics.iter().flat_map(|t| t.word_weights.iter().map(move |(w, _)| (w.clone(), t.topic_id))).collect();
        report.word_partition_nmi = Some(keyed_nmi(&pred, &truth.word_topics, "words")?);
    }
    if let Some(l) = out.labeling {
        report.label_accuracy = Some(label_accuracy(l, truth)?);
    }
    if let Some(d) = out.distributions {
        report.distribution_l1 = Some(distribution_l1(d, truth)?);
    }
    if let Some(c) = out.clusters {
        report.cluster_agreement = Some(cluster_agreement(c, truth)?);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::DebateCluster;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn nmi_basics() {
        assert_eq!(nmi(&[0, 0, 1, 1], &[5, 5, 7, 7]), 1.0);
        assert_eq!(nmi(&[0, 0, 0], &[1, 1, 1]), 1.0);
        assert_eq!(nmi(&[0, 0, 0, 0], &[0, 1, 0, 1]), 0.0);
        // oracle: entropies and mutual information summed by hand
        let v = nmi(&[0, 0, 1, 1], &[0, 1, 1, 1]);
        let (h_a, h_b) = (2f64.ln(), -(0.25f64 * 0.25f64.ln() + 0.75 * 0.75f64.ln()));
        let mi = 0.25 * (0.25f64 / (0.5 * 0.25)).ln() + 0.25 * (0.25f64 / (0.5 * 0.75)).ln() + 0.5 * (0.5f64 / (0.5 * 0.75)).ln();
        assert!((v - 2.0 * mi / (h_a + h_b)).abs() < 1e-12);
    }

    #[test]
    fn independent_partitions_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 20_000;
        let a: Vec<u8> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let b: Vec<u8> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let v = nmi(&a, &b);
        // expected MI under independence is about (ka-1)(kb-1)/(2n) nats
        assert!(v < 10.0 * 9.0 / (2.0 * n as f64) / 4f64.ln(), "{v}");
    }

    fn truth() -> GroundTruth {
        let mut t = GroundTruth {
            debate_profiles: BTreeMap::new(),
            labels: BTreeMap::new(),
            doc_topics: BTreeMap::new(),
            word_topics: BTreeMap::new(),
            topic_names: vec![],
            distributions: vec![
                LabelDistribution::from_counts("a", &[1, 0, 0, 0, 0, 0, 0], None).unwrap(),
                LabelDistribution::from_counts("b", &[1, 1, 0, 0, 0, 0, 0], None).unwrap(),
            ],
        };
        for (d, p) in [("a", "x"), ("b", "x"), ("c", "y"), ("d", "y"), ("e", "z")] {
            t.debate_profiles.insert(d.into(), p.into());
        }
        t
    }

    #[test]
    fn cluster_agreement_exact() {
        let c = DebateClusters {
            clusters: vec![
                DebateCluster { cluster_id: 0, debate_ids: vec!["a".into(), "b".into()] },
                DebateCluster { cluster_id: 1, debate_ids: vec!["c".into(), "d".into()] },
            ],
            unassigned: vec!["e".into()],
        };
        let r = cluster_agreement(&c, &truth()).unwrap();
        assert!(r.exact);
        assert_eq!(r.nmi, 1.0);
        let wrong = DebateClusters {
            clusters: vec![DebateCluster { cluster_id: 0, debate_ids: vec!["a".into(), "b".into(), "e".into()] }],
            unassigned: vec!["c".into(), "d".into()],
        };
        let r = cluster_agreement(&wrong, &truth()).unwrap();
        assert!(!r.exact);
        assert!(r.nmi < 1.0);
    }

    #[test]
    fn l1_zero_when_equal() {
        let t = truth();
        assert_eq!(distribution_l1(&t.distributions, &t).unwrap(), 0.0);
        let other = vec![LabelDistribution::<f64>::from_counts("a", &[0, 1, 0, 0, 0, 0, 0], None).unwrap()];
        assert_eq!(distribution_l1(&other, &t).unwrap(), 2.0);
        let missing = vec![LabelDistribution::<f64>::from_counts("zz", &[1, 0, 0, 0, 0, 0, 0], None).unwrap()];
        assert!(distribution_l1(&missing, &t).is_err());
    }
}
