//! Functional labels for turns.
//!
//! Doc clusters get labels from an analyst-written map; the turn-level rules
//! then override them: moderator turns become `MP`/`MQ`, and turns too short
//! for the topic model become `U`.

mod validate;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Eligibility};
use crate::topics::DocCluster;

pub use validate::{
    cluster_exemplars, disagreements, parse_verdict, render_prompt, validate_labels,
    write_disagreement_report, ClusterExemplars, CompletionProvider, CompletionRequest,
    HttpProvider, ProviderConfig, ProviderError, ProviderKind, StubProvider, ValidationConfig,
    ValidationVerdict, Verdict,
};

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("label map line {line}: {message}")]
    MapSyntax { line: usize, message: String },
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("label map does not cover clusters {0:?}")]
    UncoveredClusters(Vec<usize>),
    #[error("eligible turn {0:?} is not in any cluster")]
    UnclusteredTurn(String),
    #[error("{turns} turns but {elig} eligibility results")]
    LengthMismatch { turns: usize, elig: usize },
    #[error("provider configuration: {0}")]
    Provider(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TurnLabel {
    /// General talk on the debate subject.
    G,
    /// A specific sub-topic.
    S,
    /// Alignment: agreeing or disagreeing without elaboration.
    A,
    /// Incoherent: off-topic or another language.
    I,
    /// Moderator prompt.
    MP,
    /// Moderator question.
    MQ,
    /// Not considered by the topic model.
    U,
}

impl TurnLabel {
    /// Fixed column order used by every export.
    pub const ALL: [TurnLabel; 7] = [
        TurnLabel::G,
        TurnLabel::S,
        TurnLabel::A,
        TurnLabel::I,
        TurnLabel::MP,
        TurnLabel::MQ,
        TurnLabel::U,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TurnLabel::G => "G",
            TurnLabel::S => "S",
            TurnLabel::A => "A",
            TurnLabel::I => "I",
            TurnLabel::MP => "MP",
            TurnLabel::MQ => "MQ",
            TurnLabel::U => "U",
        }
    }

    pub fn definition(self) -> &'static str {
        match self {
            TurnLabel::G => "general talk about the debate question as a whole",
            TurnLabel::S => "a specific sub-topic developed in some depth",
            TurnLabel::A => "alignment: agreeing or disagreeing with someone, without further elaboration",
            TurnLabel::I => "incoherent: off-topic remarks or text in another language",
            TurnLabel::MP => "a prompt or instruction written by the moderator",
            TurnLabel::MQ => "a question asked by the moderator",
            TurnLabel::U => "too short to be considered by the topic model",
        }
    }

    pub fn is_moderator(self) -> bool {
        matches!(self, TurnLabel::MP | TurnLabel::MQ)
    }
}

impl fmt::Display for TurnLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TurnLabel {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TurnLabel::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| LabelError::UnknownLabel(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Analyst,
    Heuristic,
    LlmValidated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    pub entries: BTreeMap<usize, TurnLabel>,
    pub provenance: Provenance,
}

impl LabelMap {
    pub fn get(&self, cluster_id: usize) -> Option<TurnLabel> {
        self.entries.get(&cluster_id).copied()
    }
}

/// `cluster_id<TAB>label` per line; blank lines and `#` comments skipped.
pub fn parse_label_map(text: &str, provenance: Provenance) -> Result<LabelMap, LabelError> {
    let mut entries = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let syntax = |message: String| LabelError::MapSyntax { line: line_no, message };
        let (id, label) = trimmed
            .split_once('\t')
            .ok_or_else(|| syntax("expected cluster_id<TAB>label".into()))?;
        let id: usize = id.trim().parse().map_err(|e| syntax(format!("cluster id: {e}")))?;
        let label: TurnLabel = label.parse().map_err(|_| syntax(format!("unknown label {label:?}")))?;
        if entries.insert(id, label).is_some() {
            return Err(syntax(format!("cluster {id} mapped twice")));
        }
    }
    Ok(LabelMap { entries, provenance })
}

pub fn write_label_map<W: Write>(map: &LabelMap, mut out: W) -> Result<(), LabelError> {
    for (id, label) in &map.entries {
        writeln!(out, "{id}\t{label}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledTurn {
    pub debate_id: String,
    pub turn_id: String,
    pub label: TurnLabel,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labeling {
    /// Corpus order.
    pub turns: Vec<LabeledTurn>,
    pub warnings: Vec<String>,
}

impl Labeling {
    pub fn by_turn(&self) -> HashMap<&str, TurnLabel> {
        self.turns.iter().map(|t| (t.turn_id.as_str(), t.label)).collect()
    }
}

/// Map giving each cluster the most common known label among its members;
/// ties go to the label listed first in [`TurnLabel::ALL`]. Clusters with no
/// known member get `G`.
pub fn majority_label_map(clusters: &[DocCluster], known: &BTreeMap<String, TurnLabel>) -> LabelMap {
    let entries = clusters
        .iter()
        .map(|c| {
            let mut votes = [0usize; 7];
            for l in c.doc_ids.iter().filter_map(|d| known.get(d)) {
                votes[l.index()] += 1;
            }
            let best = (0..votes.len()).max_by(|&a, &b| votes[a].cmp(&votes[b]).then(b.cmp(&a))).unwrap();
            let label = if votes[best] == 0 { TurnLabel::G } else { TurnLabel::ALL[best] };
            (c.cluster_id, label)
        })
        .collect();
    LabelMap { entries, provenance: Provenance::Heuristic }
}

/// Moderator turns whose trimmed text ends in `?` are questions.
pub fn moderator_label(text: &str) -> TurnLabel {
    if text.trim_end().ends_with('?') {
        TurnLabel::MQ
    } else {
        TurnLabel::MP
    }
}

/// Labels every turn of the corpus. `elig` is in corpus turn order.
pub fn apply_label_map(
    clusters: &[DocCluster],
    map: &LabelMap,
    corpus: &Corpus,
    elig: &[Eligibility],
) -> Result<Labeling, LabelError> {
    if elig.len() != corpus.turn_count() {
        return Err(LabelError::LengthMismatch { turns: corpus.turn_count(), elig: elig.len() });
    }
    let uncovered: Vec<usize> = clusters
        .iter()
        .map(|c| c.cluster_id)
        .filter(|id| !map.entries.contains_key(id))
        .collect();
    if !uncovered.is_empty() {
        return Err(LabelError::UncoveredClusters(uncovered));
    }

    let mut warnings = Vec::new();
    let known: BTreeSet<usize> = clusters.iter().map(|c| c.cluster_id).collect();
    for id in map.entries.keys().filter(|id| !known.contains(id)) {
        warnings.push(format!("label map entry for unknown cluster {id} ignored"));
    }

    let mut cluster_of: HashMap<&str, usize> = HashMap::new();
    for c in clusters {
        for d in &c.doc_ids {
            cluster_of.insert(d.as_str(), c.cluster_id);
        }
    }

    let student_clusters: BTreeSet<usize> = corpus
        .turns()
        .filter(|t| !t.is_moderator())
        .filter_map(|t| cluster_of.get(t.turn_id.as_str()).copied())
        .collect();
    for c in clusters {
        let label = map.entries[&c.cluster_id];
        if label.is_moderator() && student_clusters.contains(&c.cluster_id) {
            warnings.push(format!(
                "cluster {} mapped to {label} but contains student turns",
                c.cluster_id
            ));
        }
        if label == TurnLabel::U {
            warnings.push(format!("cluster {} mapped to U, which is reserved for short turns", c.cluster_id));
        }
    }

    let mut turns = Vec::with_capacity(corpus.turn_count());
    for (turn, e) in corpus.turns().zip(elig) {
        let label = if turn.is_moderator() {
            moderator_label(&turn.text)
        } else if !e.is_eligible() {
            TurnLabel::U
        } else {
            let cluster = cluster_of
                .get(turn.turn_id.as_str())
                .ok_or_else(|| LabelError::UnclusteredTurn(turn.turn_id.clone()))?;
            map.entries[cluster]
        };
        turns.push(LabeledTurn {
            debate_id: turn.debate_id.clone(),
            turn_id: turn.turn_id.clone(),
            label,
        });
    }
    Ok(Labeling { turns, warnings })
}

/// `debate_id<TAB>turn_id<TAB>label` per line, corpus order.
pub fn write_labels<W: Write>(labeling: &Labeling, mut out: W) -> Result<(), LabelError> {
    for t in &labeling.turns {
        writeln!(out, "{}\t{}\t{}", t.debate_id, t.turn_id, t.label)?;
    }
    Ok(())
}

/// Reads what [`write_labels`] wrote.
pub fn parse_labels(text: &str) -> Result<Labeling, LabelError> {
    let mut turns = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let syntax = |message: &str| LabelError::MapSyntax { line: i + 1, message: message.to_string() };
        let mut cols = line.split('\t');
        let (Some(debate_id), Some(turn_id), Some(label), None) = (cols.next(), cols.next(), cols.next(), cols.next()) else {
            return Err(syntax("expected debate_id<TAB>turn_id<TAB>label"));
        };
        let label = label.parse().map_err(|_| syntax("unknown label"))?;
        turns.push(LabeledTurn { debate_id: debate_id.to_string(), turn_id: turn_id.to_string(), label });
    }
    Ok(Labeling { turns, warnings: Vec::new() })
}
