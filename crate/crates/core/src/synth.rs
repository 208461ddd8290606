//! Synthetic debates with planted topics, reply rates and reply-label
//! profiles, plus the ground truth needed to score the pipeline on them.
//!
//! Every student label used by a profile has its own vocabulary; a turn draws
//! each word from its label's vocabulary, or with probability `noise` from
//! the union of all vocabularies. `U` turns get one or two words so they fall
//! under the eligibility threshold. Moderators have a vocabulary of their own.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Triangular};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AuthorRole, Corpus, CorpusError, Turn};
use crate::labels::{moderator_label, TurnLabel};
use crate::reply::{reply_label_distribution, LabelDistribution, ScopeConfig};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scenario: {field}: {message}")]
    InvalidSpec { field: &'static str, message: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn invalid(field: &'static str, message: impl Into<String>) -> SynthError {
    SynthError::InvalidSpec { field, message: message.into() }
}

/// Inclusive integer range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub min: usize,
    pub max: usize,
}

impl Span {
    pub const fn new(min: usize, max: usize) -> Self {
        Self { min, max }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTopic {
    pub label: TurnLabel,
    pub vocabulary: Vec<String>,
}

/// A group of debates sharing one target reply-label distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelProfile {
    pub name: String,
    pub debates: usize,
    pub distribution: BTreeMap<TurnLabel, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub participants: Span,
    /// Mode of the triangular participant-count distribution; uniform if absent.
    pub participants_mode: Option<f64>,
    pub turns: Span,
    pub words_per_turn: Span,
    pub reply_probability: f64,
    /// Per-debate reply probability is uniform within this distance of
    /// `reply_probability`.
    pub reply_probability_spread: f64,
    /// Fraction of turns written by the moderator; the first turn always is
    /// when this is positive.
    pub moderator_share: f64,
    pub topics: Vec<PlantedTopic>,
    pub moderator_vocabulary: Vec<String>,
    /// Probability that a word is drawn from all vocabularies instead of the
    /// turn's own.
    pub noise: f64,
    pub profiles: Vec<LabelProfile>,
    pub seed: u64,
}

fn vocabulary(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i:02}")).collect()
}

fn profile(name: &str, debates: usize, dist: &[(TurnLabel, f64)]) -> LabelProfile {
    LabelProfile { name: name.into(), debates, distribution: dist.iter().copied().collect() }
}

fn label_topics() -> Vec<PlantedTopic> {
    use TurnLabel::*;
    [(G, "gen"), (S, "spec"), (A, "align"), (I, "off")]
        .into_iter()
        .map(|(label, prefix)| PlantedTopic { label, vocabulary: vocabulary(prefix, 20) })
        .collect()
}

/// Alignment-heavy, chatter-heavy and mixed groups of 10, 8 and 5 debates,
/// plus two debates with profiles of their own.
fn three_profile_groups() -> Vec<LabelProfile> {
    use TurnLabel::*;
    vec![
        profile("alignment", 10, &[(A, 0.9), (I, 0.1)]),
        profile("chatter", 8, &[(G, 0.9), (S, 0.05), (U, 0.05)]),
        profile("mixed", 5, &[(G, 0.35), (S, 0.3), (A, 0.35)]),
        profile("specific-only", 1, &[(S, 1.0)]),
        profile("incoherent-only", 1, &[(I, 1.0)]),
    ]
}

impl ScenarioSpec {
    /// 25 debates of 6 to 27 participants (mean 14), replies on 45.6% of
    /// turns on average, three label profiles plus two outliers.
    pub fn paper_scale(seed: u64) -> Self {
        Self {
            participants: Span::new(6, 27),
            // triangular mean (min + max + mode) / 3 = 14
            participants_mode: Some(9.0),
            turns: Span::new(40, 120),
            words_per_turn: Span::new(5, 12),
            reply_probability: 0.456,
            reply_probability_spread: 0.2,
            moderator_share: 0.1,
            topics: label_topics(),
            moderator_vocabulary: vocabulary("mod", 15),
            noise: 0.05,
            profiles: three_profile_groups(),
            seed,
        }
    }

    /// The same profile groups on smaller debates, cheap enough for tests.
    pub fn three_profiles(seed: u64) -> Self {
        Self {
            participants: Span::new(6, 12),
            participants_mode: None,
            turns: Span::new(40, 60),
            words_per_turn: Span::new(6, 10),
            reply_probability: 0.5,
            reply_probability_spread: 0.0,
            ..Self::paper_scale(seed)
        }
    }

    /// One debate of `docs` student turns split evenly between two disjoint
    /// vocabularies of `words / 2` words each.
    pub fn two_topics(docs: usize, words: usize, noise: f64, seed: u64) -> Self {
        use TurnLabel::*;
        Self {
            participants: Span::new(1, 1),
            participants_mode: None,
            turns: Span::new(docs, docs),
            words_per_turn: Span::new(8, 12),
            reply_probability: 0.0,
            reply_probability_spread: 0.0,
            moderator_share: 0.0,
            topics: vec![
                PlantedTopic { label: G, vocabulary: vocabulary("gen", words / 2) },
                PlantedTopic { label: S, vocabulary: vocabulary("spec", words - words / 2) },
            ],
            moderator_vocabulary: Vec::new(),
            noise,
            profiles: vec![profile("even", 1, &[(G, 0.5), (S, 0.5)])],
            seed,
        }
    }

    pub fn debate_count(&self) -> usize {
        self.profiles.iter().map(|p| p.debates).sum()
    }

    fn moderator_turns(&self, turns: usize) -> usize {
        if self.moderator_share <= 0.0 {
            0
        } else {
            ((turns as f64 * self.moderator_share).round() as usize).clamp(1, turns)
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let prob = |field, x: f64| {
            if (0.0..=1.0).contains(&x) {
                Ok(())
            } else {
                Err(invalid(field, format!("{x} is not a probability")))
            }
        };
        prob("reply_probability", self.reply_probability)?;
        prob("moderator_share", self.moderator_share)?;
        if !(0.0..0.5).contains(&self.noise) {
            return Err(invalid("noise", format!("{} not in [0, 0.5)", self.noise)));
        }
        if self.reply_probability_spread.is_nan() || self.reply_probability_spread < 0.0 {
            return Err(invalid("reply_probability_spread", "must be non-negative"));
        }
        for (field, span) in [("participants", self.participants), ("turns", self.turns), ("words_per_turn", self.words_per_turn)] {
            if span.min == 0 || span.min > span.max {
                return Err(invalid(field, format!("need 1 <= min <= max, got {}..={}", span.min, span.max)));
            }
        }
        if let Some(mode) = self.participants_mode {
            if !(mode >= self.participants.min as f64 && mode <= self.participants.max as f64) {
                return Err(invalid("participants_mode", format!("{mode} outside the participant range")));
            }
        }
        let students = self.turns.min - self.moderator_turns(self.turns.min);
        if students < self.participants.max {
            return Err(invalid(
                "turns",
                format!("{} turns leave {students} student turns for up to {} participants", self.turns.min, self.participants.max),
            ));
        }
        if self.profiles.is_empty() || self.debate_count() == 0 {
            return Err(invalid("profiles", "no debates"));
        }
        let mut seen = BTreeMap::new();
        for t in &self.topics {
            if t.label.is_moderator() || t.label == TurnLabel::U {
                return Err(invalid("topics", format!("{} is not a student topic label", t.label)));
            }
            if t.vocabulary.is_empty() {
                return Err(invalid("topics", format!("{} has an empty vocabulary", t.label)));
            }
            if seen.insert(t.label, ()).is_some() {
                return Err(invalid("topics", format!("{} appears twice", t.label)));
            }
        }
        let mut words = BTreeMap::new();
        for w in self.topics.iter().flat_map(|t| &t.vocabulary).chain(&self.moderator_vocabulary) {
            if w.chars().count() < 2 || !w.chars().all(char::is_alphanumeric) || w.to_lowercase() != *w {
                return Err(invalid("topics", format!("word {w:?} would not survive tokenization")));
            }
            if words.insert(w, ()).is_some() {
                return Err(invalid("topics", format!("word {w:?} in two vocabularies")));
            }
        }
        if self.moderator_share > 0.0 && self.moderator_vocabulary.is_empty() {
            return Err(invalid("moderator_vocabulary", "empty while moderators write turns"));
        }
        for p in &self.profiles {
            let sum: f64 = p.distribution.values().sum();
            if (sum - 1.0).abs() > 1e-9 || p.distribution.values().any(|&x| x < 0.0) {
                return Err(invalid("profiles", format!("{}: probabilities sum to {sum}", p.name)));
            }
            for (&l, &x) in &p.distribution {
                if x > 0.0 && l != TurnLabel::U && !seen.contains_key(&l) {
                    return Err(invalid("profiles", format!("{}: no topic for label {l}", p.name)));
                }
                if l.is_moderator() {
                    return Err(invalid("profiles", format!("{}: {l} is a moderator label", p.name)));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Profile name per debate.
    pub debate_profiles: BTreeMap<String, String>,
    pub labels: BTreeMap<String, TurnLabel>,
    /// Planted topic per turn long enough to be modelled; indices into
    /// `topic_names`.
    pub doc_topics: BTreeMap<String, usize>,
    pub word_topics: BTreeMap<String, usize>,
    pub topic_names: Vec<String>,
    /// Reply-label distributions under the default scope, from the true labels.
    pub distributions: Vec<LabelDistribution<f64>>,
}

impl GroundTruth {
    /// Profile groups with two or more debates, and the debates alone in
    /// their profile.
    pub fn expected_clusters(&self) -> (Vec<Vec<String>>, Vec<String>) {
        let mut groups: BTreeMap<&str, Vec<String>> = BTreeMap::new();
        for (d, p) in &self.debate_profiles {
            groups.entry(p.as_str()).or_default().push(d.clone());
        }
        let (mut clusters, mut alone) = (Vec::new(), Vec::new());
        for members in groups.into_values() {
            if members.len() == 1 {
                alone.extend(members);
            } else {
                clusters.push(members);
            }
        }
        clusters.sort();
        alone.sort();
        (clusters, alone)
    }
}

pub struct Generated {
    pub corpus: Corpus,
    pub truth: GroundTruth,
}

/// Largest-remainder rounding of `total * p` over the labels.
fn quota(total: usize, dist: &BTreeMap<TurnLabel, f64>) -> Vec<TurnLabel> {
    let raw: Vec<(TurnLabel, f64)> = dist.iter().map(|(&l, &p)| (l, p * total as f64)).collect();
    let mut counts: Vec<(TurnLabel, usize, f64)> =
        raw.iter().map(|&(l, x)| (l, x.floor() as usize, x - x.floor())).collect();
    let assigned: usize = counts.iter().map(|c| c.1).sum();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| counts[b].2.total_cmp(&counts[a].2).then(a.cmp(&b)));
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i].1 += 1;
    }
    counts.into_iter().flat_map(|(l, c, _)| std::iter::repeat_n(l, c)).collect()
}

fn sample_label(rng: &mut ChaCha8Rng, dist: &BTreeMap<TurnLabel, f64>) -> TurnLabel {
    let x: f64 = rng.random();
    let mut acc = 0.0;
    for (&l, &p) in dist {
        acc += p;
        if x < acc {
            return l;
        }
    }
    *dist.iter().rev().find(|(_, &p)| p > 0.0).expect("profile has mass").0
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Vocab<'a> {
    by_label: BTreeMap<TurnLabel, &'a [String]>,
    moderator: &'a [String],
    all: Vec<&'a String>,
}

impl Vocab<'_> {
    fn text(&self, rng: &mut ChaCha8Rng, own: &[String], words: usize, noise: f64) -> String {
        (0..words)
            .map(|_| {
                if rng.random::<f64>() < noise {
                    self.all[rng.random_range(0..self.all.len())].as_str()
                } else {
                    own[rng.random_range(0..own.len())].as_str()
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn generate_debate(
    spec: &ScenarioSpec,
    vocab: &Vocab<'_>,
    debate_id: &str,
    profile: &LabelProfile,
    rng: &mut ChaCha8Rng,
) -> (Vec<Turn>, Vec<TurnLabel>) {
    let participants = match spec.participants_mode {
        Some(mode) if spec.participants.min < spec.participants.max => {
            let tri = Triangular::new(spec.participants.min as f64, spec.participants.max as f64, mode)
                .expect("validated triangular parameters");
            (tri.sample(rng).round() as usize).clamp(spec.participants.min, spec.participants.max)
        }
        _ => rng.random_range(spec.participants.min..=spec.participants.max),
    };
    let n = rng.random_range(spec.turns.min..=spec.turns.max);
    let n_mod = spec.moderator_turns(n);
    let mut is_mod = vec![false; n];
    if n_mod > 0 {
        is_mod[0] = true;
        let mut rest: Vec<usize> = (1..n).collect();
        rest.shuffle(rng);
        for &i in rest.iter().take(n_mod - 1) {
            is_mod[i] = true;
        }
    }
    let p = if spec.reply_probability_spread > 0.0 {
        let s = spec.reply_probability_spread;
        rng.random_range((spec.reply_probability - s).max(0.0)..=(spec.reply_probability + s).min(1.0))
    } else {
        spec.reply_probability
    };
    let parents: Vec<Option<usize>> =
        (0..n).map(|i| (i > 0 && rng.random::<f64>() < p).then(|| rng.random_range(0..i))).collect();

    // student labels: exact quota over replies, sampled elsewhere
    let student_replies = (0..n).filter(|&i| !is_mod[i] && parents[i].is_some()).count();
    let mut reply_labels = quota(student_replies, &profile.distribution);
    reply_labels.shuffle(rng);
    let mut reply_labels = reply_labels.into_iter();

    // every participant writes at least one turn
    let student_slots: Vec<usize> = (0..n).filter(|&i| !is_mod[i]).collect();
    let mut authors: Vec<usize> = (0..student_slots.len()).map(|k| if k < participants { k } else { rng.random_range(0..participants) }).collect();
    authors.shuffle(rng);
    let mut author_of = vec![0usize; n];
    for (&slot, &a) in student_slots.iter().zip(&authors) {
        author_of[slot] = a;
    }

    let mut turns = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let words = rng.random_range(spec.words_per_turn.min..=spec.words_per_turn.max);
        let (author_id, role, text, label) = if is_mod[i] {
            let question = rng.random_bool(0.5);
            let body = vocab.text(rng, vocab.moderator, words, spec.noise);
            let text = if question { format!("{body}?") } else { format!("{body}.") };
            let label = moderator_label(&text);
            (format!("{debate_id}-mod"), AuthorRole::Moderator, text, label)
        } else {
            let label = if parents[i].is_some() {
                reply_labels.next().expect("one quota label per student reply")
            } else {
                sample_label(rng, &profile.distribution)
            };
            let text = match label {
                TurnLabel::U => {
                    let own = vocab.all[rng.random_range(0..vocab.all.len())].clone();
                    if rng.random_bool(0.5) {
                        own
                    } else {
                        format!("{own} {}", vocab.all[rng.random_range(0..vocab.all.len())])
                    }
                }
                l => vocab.text(rng, vocab.by_label[&l], words, spec.noise),
            };
            (format!("{debate_id}-s{:02}", author_of[i]), AuthorRole::Student, text, label)
        };
        turns.push(Turn {
            debate_id: debate_id.to_string(),
            turn_id: format!("{debate_id}-t{i:03}"),
            author_id,
            author_role: role,
            timestamp_ms: 1_000 * i as i64,
            text,
            reply_to: parents[i].map(|j| format!("{debate_id}-t{j:03}")),
        });
        labels.push(label);
    }
    (turns, labels)
}

pub fn generate(spec: &ScenarioSpec) -> Result<Generated, SynthError> {
    spec.validate()?;
    let vocab = Vocab {
        by_label: spec.topics.iter().map(|t| (t.label, t.vocabulary.as_slice())).collect(),
        moderator: &spec.moderator_vocabulary,
        all: spec.topics.iter().flat_map(|t| &t.vocabulary).chain(&spec.moderator_vocabulary).collect(),
    };

    let total = spec.debate_count();
    let width = total.to_string().len().max(2);
    let mut groups: Vec<usize> = spec.profiles.iter().enumerate().flat_map(|(g, p)| std::iter::repeat_n(g, p.debates)).collect();
    groups.shuffle(&mut ChaCha8Rng::seed_from_u64(splitmix(spec.seed)));

    let mut topic_names: Vec<String> = spec.topics.iter().map(|t| t.label.to_string()).collect();
    let mut word_topics = BTreeMap::new();
    for (k, t) in spec.topics.iter().enumerate() {
        for w in &t.vocabulary {
            word_topics.insert(w.clone(), k);
        }
    }
    let moderator_topic = topic_names.len();
    if !spec.moderator_vocabulary.is_empty() {
        topic_names.push("moderator".into());
        for w in &spec.moderator_vocabulary {
            word_topics.insert(w.clone(), moderator_topic);
        }
    }
    let topic_of: BTreeMap<TurnLabel, usize> = spec.topics.iter().enumerate().map(|(k, t)| (t.label, k)).collect();

    let mut all_turns = Vec::new();
    let mut debate_profiles = BTreeMap::new();
    let mut labels = BTreeMap::new();
    let mut doc_topics = BTreeMap::new();
    for (d, &g) in groups.iter().enumerate() {
        let debate_id = format!("d{:0width$}", d + 1);
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix(spec.seed ^ splitmix(d as u64 + 1)));
        let (turns, turn_labels) = generate_debate(spec, &vocab, &debate_id, &spec.profiles[g], &mut rng);
        for (t, &l) in turns.iter().zip(&turn_labels) {
            labels.insert(t.turn_id.clone(), l);
            let topic = if l.is_moderator() { Some(moderator_topic) } else { topic_of.get(&l).copied() };
            if let Some(k) = topic {
                doc_topics.insert(t.turn_id.clone(), k);
            }
        }
        debate_profiles.insert(debate_id, spec.profiles[g].name.clone());
        all_turns.extend(turns);
    }
    let corpus = Corpus::from_turns(all_turns)?;
    let by_turn = labels.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    let distributions = corpus
        .debates
        .iter()
        .map(|d| reply_label_distribution(d, &by_turn, &ScopeConfig::default()))
        .collect::<Result<_, _>>()
        .expect("every generated turn is labelled");
    Ok(Generated {
        corpus,
        truth: GroundTruth { debate_profiles, labels, doc_topics, word_topics, topic_names, distributions },
    })
}

pub fn write_truth<W: Write>(truth: &GroundTruth, out: W) -> Result<(), SynthError> {
    serde_json::to_writer_pretty(out, truth).map_err(std::io::Error::from)?;
    Ok(())
}

pub fn read_truth(text: &str) -> Result<GroundTruth, SynthError> {
    serde_json::from_str(text).map_err(|e| invalid("truth", e.to_string()))
}
