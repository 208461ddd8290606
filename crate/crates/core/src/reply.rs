//! Per-debate reply-label distributions and the Jensen-Shannon comparison
//! between debates.
//!
//! All divergences are in bits, so they lie in `[0, 1]`. The similarity is
//! `1 - sqrt(JSD)` and the clustering distance is `sqrt(JSD)`, which is a
//! metric; both put the boundary of a 0.5 cut-off in the same place.

use std::collections::HashMap;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Debate};
use crate::labels::{Labeling, TurnLabel};
use crate::scalar::Scalar;

pub const LABEL_COUNT: usize = TurnLabel::ALL.len();

#[derive(Debug, Error)]
pub enum ReplyError {
    #[error("distributions have {0} and {1} entries")]
    SupportMismatch(usize, usize),
    #[error("not a probability distribution (sum {sum}, or a negative entry)")]
    NotNormalized { sum: f64 },
    #[error("turn {0:?} has no label")]
    MissingLabel(String),
    #[error("need at least 2 usable debates, have {usable} ({excluded} excluded as degenerate)")]
    TooFewDebates { usable: usize, excluded: usize },
    #[error("smoothing must be finite and non-negative, got {0}")]
    Smoothing(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which label a counted reply contributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelSource {
    #[default]
    OwnLabel,
    ParentLabel,
}

impl FromStr for LabelSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "own-label" => Ok(LabelSource::OwnLabel),
            "parent-label" => Ok(LabelSource::ParentLabel),
            other => Err(format!("unknown scope {other:?} (own-label | parent-label)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScopeConfig {
    pub label_source: LabelSource,
    /// Count moderator replies too.
    pub include_moderators: bool,
    /// Additive pseudo-count per label; `None` keeps the empirical distribution.
    pub smoothing: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct LabelDistribution<T: Scalar> {
    pub debate_id: String,
    /// Indexed by [`TurnLabel::index`].
    pub probabilities: Vec<T>,
    /// Replies counted.
    pub support_count: usize,
}

impl<T: Scalar> LabelDistribution<T> {
    pub fn from_counts(
        debate_id: &str,
        counts: &[usize; LABEL_COUNT],
        smoothing: Option<f64>,
    ) -> Result<Self, ReplyError> {
        let support_count: usize = counts.iter().sum();
        let alpha = match smoothing {
            Some(a) if !(a.is_finite() && a >= 0.0) => return Err(ReplyError::Smoothing(a)),
            Some(a) => T::lit(a),
            None => T::zero(),
        };
        let probabilities = if support_count == 0 {
            vec![T::zero(); LABEL_COUNT]
        } else {
            let denom = T::from_usize_lossy(support_count) + alpha * T::from_usize_lossy(LABEL_COUNT);
            counts.iter().map(|&c| (T::from_usize_lossy(c) + alpha) / denom).collect()
        };
        Ok(Self { debate_id: debate_id.to_string(), probabilities, support_count })
    }

    /// No replies were counted.
    pub fn is_degenerate(&self) -> bool {
        self.support_count == 0
    }

    pub fn probability(&self, label: TurnLabel) -> T {
        self.probabilities[label.index()]
    }

    /// Pointwise mean of two distributions.
    pub fn mixture(&self, other: &Self) -> Self {
        let two = T::lit(2.0);
        Self {
            debate_id: format!("{}+{}", self.debate_id, other.debate_id),
            probabilities: self
                .probabilities
                .iter()
                .zip(&other.probabilities)
                .map(|(&p, &q)| (p + q) / two)
                .collect(),
            support_count: self.support_count + other.support_count,
        }
    }
}

/// Distribution of the replies in one debate over the seven labels.
pub fn reply_label_distribution<T: Scalar>(
    debate: &Debate,
    labels: &HashMap<&str, TurnLabel>,
    scope: &ScopeConfig,
) -> Result<LabelDistribution<T>, ReplyError> {
    let label_of = |id: &str| labels.get(id).copied().ok_or_else(|| ReplyError::MissingLabel(id.to_string()));
    let mut counts = [0usize; LABEL_COUNT];
    for turn in &debate.turns {
        let Some(parent) = &turn.reply_to else { continue };
        if turn.is_moderator() && !scope.include_moderators {
            continue;
        }
        let label = match scope.label_source {
            LabelSource::OwnLabel => label_of(&turn.turn_id)?,
            LabelSource::ParentLabel => label_of(parent)?,
        };
        counts[label.index()] += 1;
    }
    LabelDistribution::from_counts(&debate.debate_id, &counts, scope.smoothing)
}

/// One distribution per debate, in corpus order.
pub fn corpus_distributions<T: Scalar>(
    corpus: &Corpus,
    labeling: &Labeling,
    scope: &ScopeConfig,
) -> Result<Vec<LabelDistribution<T>>, ReplyError> {
    let labels = labeling.by_turn();
    corpus
        .debates
        .iter()
        .map(|d| {
            let dist = reply_label_distribution(d, &labels, scope)?;
            if dist.is_degenerate() {
                log::warn!("debate {} has no counted replies; it will not be clustered", d.debate_id);
            }
            Ok(dist)
        })
        .collect()
}

fn check_distribution<T: Scalar>(p: &[T]) -> Result<(), ReplyError> {
    let sum = p.iter().fold(T::zero(), |a, &x| a + x);
    let negative = p.iter().any(|&x| x < T::zero() || !x.is_finite());
    if negative || (sum - T::one()).abs() > T::normalization_tolerance() {
        return Err(ReplyError::NotNormalized { sum: sum.as_f64() });
    }
    Ok(())
}

/// Jensen-Shannon divergence in bits, with `0 log 0 = 0`.
pub fn js_divergence<T: Scalar>(p: &[T], q: &[T]) -> Result<T, ReplyError> {
    if p.len() != q.len() {
        return Err(ReplyError::SupportMismatch(p.len(), q.len()));
    }
    check_distribution(p)?;
    check_distribution(q)?;
    let half = T::lit(0.5);
    let term = |x: T, m: T| if x > T::zero() { x * (x / m).log2() } else { T::zero() };
    let mut total = T::zero();
    for (&a, &b) in p.iter().zip(q) {
        let m = (a + b) * half;
        // per-coordinate sum commutes, so the result is exactly symmetric
        total = total + (term(a, m) + term(b, m));
    }
    Ok((total * half).max(T::zero()).min(T::one()))
}

/// `1 - sqrt(JSD)`: 1 for identical distributions, 0 for disjoint ones.
pub fn js_similarity<T: Scalar>(p: &[T], q: &[T]) -> Result<T, ReplyError> {
    Ok(T::one() - js_divergence(p, q)?.sqrt())
}

/// `sqrt(JSD)`, a metric on distributions.
pub fn js_distance<T: Scalar>(p: &[T], q: &[T]) -> Result<T, ReplyError> {
    Ok(js_divergence(p, q)?.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct DistanceMatrix<T: Scalar> {
    pub debate_ids: Vec<String>,
    pub distance: Vec<Vec<T>>,
    pub similarity: Vec<Vec<T>>,
    /// Degenerate debates left out.
    pub excluded: Vec<String>,
}

impl<T: Scalar> DistanceMatrix<T> {
    pub fn len(&self) -> usize {
        self.debate_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.debate_ids.is_empty()
    }

    /// Builds a matrix from raw distances, e.g. for clustering arbitrary items.
    pub fn from_distances(debate_ids: Vec<String>, distance: Vec<Vec<T>>) -> Self {
        let similarity = distance.iter().map(|row| row.iter().map(|&d| T::one() - d).collect()).collect();
        Self { debate_ids, distance, similarity, excluded: Vec::new() }
    }
}

/// Pairwise distances between the non-degenerate distributions.
pub fn distance_matrix<T: Scalar>(dists: &[LabelDistribution<T>]) -> Result<DistanceMatrix<T>, ReplyError> {
    let (usable, degenerate): (Vec<_>, Vec<_>) = dists.iter().partition(|d| !d.is_degenerate());
    let excluded: Vec<String> = degenerate.iter().map(|d| d.debate_id.clone()).collect();
    if usable.len() < 2 {
        return Err(ReplyError::TooFewDebates { usable: usable.len(), excluded: excluded.len() });
    }
    let n = usable.len();
    let rows: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| match i.cmp(&j) {
                    std::cmp::Ordering::Equal => Ok(T::zero()),
                    // compute each pair once, with the lower index first
                    std::cmp::Ordering::Less => js_distance(&usable[i].probabilities, &usable[j].probabilities),
                    std::cmp::Ordering::Greater => js_distance(&usable[j].probabilities, &usable[i].probabilities),
                })
                .collect::<Result<Vec<T>, _>>()
        })
        .collect::<Result<_, _>>()?;
    let similarity = rows.iter().map(|row| row.iter().map(|&d| T::one() - d).collect()).collect();
    Ok(DistanceMatrix {
        debate_ids: usable.iter().map(|d| d.debate_id.clone()).collect(),
        distance: rows,
        similarity,
        excluded,
    })
}

/// `debate_id,G,S,A,I,MP,MQ,U,support` rows.
pub fn write_distributions_csv<T: Scalar, W: Write>(
    dists: &[LabelDistribution<T>],
    mut out: W,
) -> Result<(), ReplyError> {
    let header: Vec<&str> = TurnLabel::ALL.iter().map(|l| l.as_str()).collect();
    writeln!(out, "debate_id,{},support", header.join(","))?;
    for d in dists {
        let row: Vec<String> = d.probabilities.iter().map(|p| p.to_string()).collect();
        writeln!(out, "{},{},{}", d.debate_id, row.join(","), d.support_count)?;
    }
    Ok(())
}

/// Square matrix with a `debate_id` header row and column.
pub fn write_matrix_csv<T: Scalar, W: Write>(ids: &[String], matrix: &[Vec<T>], mut out: W) -> Result<(), ReplyError> {
    writeln!(out, "debate_id,{}", ids.join(","))?;
    for (id, row) in ids.iter().zip(matrix) {
        let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        writeln!(out, "{id},{}", cells.join(","))?;
    }
    Ok(())
}
