//! Transcript records, debates and reply forests.
//!
//! A transcript is line-delimited JSON, one turn per line:
//!
//! ```text
//! {"debate_id":"d1","turn_id":"t1","author_id":"u7","author_role":"student","timestamp_ms":1000,"text":"I agree.","reply_to":null}
//! ```
//!
//! Parsing validates the whole stream before returning: turn ids are unique
//! corpus-wide, and every `reply_to` names an earlier turn of the same debate.
//! Turns with equal timestamps keep their file order.

mod forest;
mod tokenize;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use forest::{build_reply_forest, ReplyForest};
pub use tokenize::{
    eligibility, tokenize, Eligibility, EligibilityConfig, TokenBag, TokenizerConfig,
};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate turn_id {turn_id:?}")]
    DuplicateTurn { line: usize, turn_id: String },
    #[error("turn {turn_id:?} replies to itself")]
    SelfReply { turn_id: String },
    #[error("turn {turn_id:?} replies to unknown turn {reply_to:?}")]
    UnknownParent { turn_id: String, reply_to: String },
    #[error("turn {turn_id:?} replies to {reply_to:?} from another debate")]
    CrossDebateReply { turn_id: String, reply_to: String },
    #[error("turn {turn_id:?} replies to {reply_to:?}, which is not earlier in time")]
    ReplyToLater { turn_id: String, reply_to: String },
    #[error("debate {debate_id:?} has no student turns")]
    NoStudents { debate_id: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuthorRole {
    Student,
    Moderator,
}

/// One utterance in a debate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub debate_id: String,
    pub turn_id: String,
    pub author_id: String,
    pub author_role: AuthorRole,
    pub timestamp_ms: i64,
    pub text: String,
    #[serde(default)]
    pub reply_to: Option<String>,
}

impl Turn {
    pub fn is_reply(&self) -> bool {
        self.reply_to.is_some()
    }

    pub fn is_moderator(&self) -> bool {
        self.author_role == AuthorRole::Moderator
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Debate {
    pub debate_id: String,
    /// Sorted by timestamp; ties in file order.
    pub turns: Vec<Turn>,
    /// Distinct student authors.
    pub participant_count: usize,
}

impl Debate {
    pub fn reply_count(&self) -> usize {
        self.turns.iter().filter(|t| t.is_reply()).count()
    }

    pub fn position(&self, turn_id: &str) -> Option<usize> {
        self.turns.iter().position(|t| t.turn_id == turn_id)
    }
}

/// Debates sorted by `debate_id`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub debates: Vec<Debate>,
}

/// Position of a turn inside a [`Corpus`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TurnRef {
    pub debate: usize,
    pub turn: usize,
}

impl Corpus {
    /// Builds a corpus from already-deserialized turns, in file order.
    pub fn from_turns(turns: Vec<Turn>) -> Result<Self, CorpusError> {
        let lines: Vec<usize> = (1..=turns.len()).collect();
        validate_and_group(turns, &lines)
    }

    pub fn turns(&self) -> impl Iterator<Item = &Turn> {
        self.debates.iter().flat_map(|d| d.turns.iter())
    }

    pub fn turn_count(&self) -> usize {
        self.debates.iter().map(|d| d.turns.len()).sum()
    }

    pub fn turn_index(&self) -> HashMap<&str, TurnRef> {
        let mut index = HashMap::with_capacity(self.turn_count());
        for (di, debate) in self.debates.iter().enumerate() {
            for (ti, turn) in debate.turns.iter().enumerate() {
                index.insert(turn.turn_id.as_str(), TurnRef { debate: di, turn: ti });
            }
        }
        index
    }

    pub fn debate(&self, debate_id: &str) -> Option<&Debate> {
        self.debates
            .binary_search_by(|d| d.debate_id.as_str().cmp(debate_id))
            .ok()
            .map(|i| &self.debates[i])
    }
}

/// Parses a line-delimited transcript. Blank lines are skipped.
pub fn parse_corpus<R: BufRead>(reader: R) -> Result<Corpus, CorpusError> {
    let mut turns = Vec::new();
    let mut lines = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let turn: Turn = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        turns.push(turn);
        lines.push(i + 1);
    }
    validate_and_group(turns, &lines)
}

pub fn parse_corpus_str(text: &str) -> Result<Corpus, CorpusError> {
    parse_corpus(text.as_bytes())
}

/// Writes the corpus back as line-delimited records, debate by debate.
pub fn write_corpus<W: Write>(corpus: &Corpus, mut out: W) -> Result<(), CorpusError> {
    for turn in corpus.turns() {
        serde_json::to_writer(&mut out, turn).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn validate_and_group(turns: Vec<Turn>, lines: &[usize]) -> Result<Corpus, CorpusError> {
    let mut by_id: HashMap<&str, usize> = HashMap::with_capacity(turns.len());
    for (i, turn) in turns.iter().enumerate() {
        if by_id.insert(turn.turn_id.as_str(), i).is_some() {
            return Err(CorpusError::DuplicateTurn {
                line: lines[i],
                turn_id: turn.turn_id.clone(),
            });
        }
    }
    for (i, turn) in turns.iter().enumerate() {
        let Some(parent_id) = turn.reply_to.as_deref() else {
            continue;
        };
        let err_ids = || (turn.turn_id.clone(), parent_id.to_string());
        if parent_id == turn.turn_id {
            return Err(CorpusError::SelfReply { turn_id: turn.turn_id.clone() });
        }
        let Some(&p) = by_id.get(parent_id) else {
            let (turn_id, reply_to) = err_ids();
            return Err(CorpusError::UnknownParent { turn_id, reply_to });
        };
        let parent = &turns[p];
        if parent.debate_id != turn.debate_id {
            let (turn_id, reply_to) = err_ids();
            return Err(CorpusError::CrossDebateReply { turn_id, reply_to });
        }
        let earlier = parent.timestamp_ms < turn.timestamp_ms
            || (parent.timestamp_ms == turn.timestamp_ms && p < i);
        if !earlier {
            let (turn_id, reply_to) = err_ids();
            return Err(CorpusError::ReplyToLater { turn_id, reply_to });
        }
    }
    drop(by_id);

    let mut grouped: BTreeMap<String, Vec<Turn>> = BTreeMap::new();
    for turn in turns {
        grouped.entry(turn.debate_id.clone()).or_default().push(turn);
    }
    let mut debates = Vec::with_capacity(grouped.len());
    for (debate_id, mut turns) in grouped {
        // stable: equal timestamps keep file order
        turns.sort_by_key(|t| t.timestamp_ms);
        let participant_count = turns
            .iter()
            .filter(|t| t.author_role == AuthorRole::Student)
            .map(|t| t.author_id.as_str())
            .collect::<BTreeSet<_>>()
            .len();
        if participant_count == 0 {
            return Err(CorpusError::NoStudents { debate_id });
        }
        debates.push(Debate { debate_id, turns, participant_count });
    }
    Ok(Corpus { debates })
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn turn(debate: &str, id: &str, ts: i64, text: &str, reply_to: Option<&str>) -> Turn {
        Turn {
            debate_id: debate.into(),
            turn_id: id.into(),
            author_id: format!("a-{id}"),
            author_role: AuthorRole::Student,
            timestamp_ms: ts,
            text: text.into(),
            reply_to: reply_to.map(Into::into),
        }
    }

    pub fn to_jsonl(turns: &[Turn]) -> String {
        turns
            .iter()
            .map(|t| serde_json::to_string(t).unwrap() + "\n")
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn empty_stream() {
        let corpus = parse_corpus_str("").unwrap();
        assert!(corpus.debates.is_empty());
    }

    #[test]
    fn reply_pair() {
        let text = to_jsonl(&[
            turn("d", "A", 1, "hello there", None),
            turn("d", "B", 2, "hi back", Some("A")),
        ]);
        let corpus = parse_corpus_str(&text).unwrap();
        assert_eq!(corpus.debates.len(), 1);
        let forest = build_reply_forest(&corpus.debates[0]);
        assert_eq!(forest.tree_count(), 1);
        assert_eq!(forest.children(0), &[1]);
    }

    #[test]
    fn missing_parent_names_turn() {
        let text = to_jsonl(&[turn("d", "A", 1, "x", Some("missing"))]);
        let err = parse_corpus_str(&text).unwrap_err();
        assert!(matches!(err, CorpusError::UnknownParent { ref turn_id, .. } if turn_id == "A"));
        assert!(err.to_string().contains("\"A\""));
    }

    #[test]
    fn rejects_bad_links() {
        let dup = to_jsonl(&[turn("d", "A", 1, "x", None), turn("d", "A", 2, "y", None)]);
        assert!(matches!(
            parse_corpus_str(&dup),
            Err(CorpusError::DuplicateTurn { line: 2, .. })
        ));

        let later = to_jsonl(&[turn("d", "A", 5, "x", Some("B")), turn("d", "B", 9, "y", None)]);
        assert!(matches!(parse_corpus_str(&later), Err(CorpusError::ReplyToLater { .. })));

        let cross = to_jsonl(&[turn("d1", "A", 1, "x", None), turn("d2", "B", 2, "y", Some("A"))]);
        assert!(matches!(parse_corpus_str(&cross), Err(CorpusError::CrossDebateReply { .. })));

        let own = to_jsonl(&[turn("d", "A", 1, "x", Some("A"))]);
        assert!(matches!(parse_corpus_str(&own), Err(CorpusError::SelfReply { .. })));
    }

    #[test]
    fn equal_timestamps_follow_file_order() {
        let ok = to_jsonl(&[turn("d", "A", 3, "x", None), turn("d", "B", 3, "y", Some("A"))]);
        let corpus = parse_corpus_str(&ok).unwrap();
        assert_eq!(corpus.debates[0].turns[0].turn_id, "A");

        let bad = to_jsonl(&[turn("d", "B", 3, "y", Some("A")), turn("d", "A", 3, "x", None)]);
        assert!(matches!(parse_corpus_str(&bad), Err(CorpusError::ReplyToLater { .. })));
    }

    #[test]
    fn malformed_reports_line() {
        let text = format!("{}\n\nnot json\n", to_jsonl(&[turn("d", "A", 1, "x", None)]).trim());
        match parse_corpus_str(&text) {
            Err(CorpusError::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn groups_and_sorts() {
        let text = to_jsonl(&[
            turn("z", "z1", 10, "x", None),
            turn("a", "a2", 20, "x", None),
            turn("a", "a1", 5, "x", None),
        ]);
        let corpus = parse_corpus_str(&text).unwrap();
        let ids: Vec<_> = corpus.debates.iter().map(|d| d.debate_id.as_str()).collect();
        assert_eq!(ids, ["a", "z"]);
        assert_eq!(corpus.debates[0].turns[0].turn_id, "a1");
        assert_eq!(corpus.debates[0].participant_count, 2);
    }

    #[test]
    fn reply_to_may_be_omitted() {
        let line = r#"{"debate_id":"d","turn_id":"t","author_id":"u","author_role":"moderator","timestamp_ms":0,"text":"Is love a disease?"}"#;
        let student = r#"{"debate_id":"d","turn_id":"s","author_id":"v","author_role":"student","timestamp_ms":1,"text":"yes","reply_to":"t"}"#;
        let corpus = parse_corpus_str(&format!("{line}\n{student}\n")).unwrap();
        assert!(corpus.debates[0].turns[0].is_moderator());
        assert_eq!(corpus.debates[0].participant_count, 1);
    }

    #[test]
    fn moderator_only_debate_rejected() {
        let mut t = turn("d", "A", 1, "x", None);
        t.author_role = AuthorRole::Moderator;
        assert!(matches!(
            Corpus::from_turns(vec![t]),
            Err(CorpusError::NoStudents { .. })
        ));
    }
}
