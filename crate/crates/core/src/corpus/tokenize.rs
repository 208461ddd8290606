use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use unicode_segmentation::UnicodeSegmentation;

use super::Turn;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    pub lowercase: bool,
    pub strip_non_alphanumeric: bool,
    /// In chars, after stripping.
    pub min_token_len: usize,
    /// Empty unless a stopword list is supplied.
    #[serde(default)]
    pub stopwords: BTreeSet<String>,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            lowercase: true,
            strip_non_alphanumeric: true,
            min_token_len: 2,
            stopwords: BTreeSet::new(),
        }
    }
}

impl TokenizerConfig {
    /// Loads stopwords, one per line; `#` starts a comment line.
    pub fn with_stopwords(mut self, list: &str) -> Self {
        self.stopwords = list
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|w| if self.lowercase { w.to_lowercase() } else { w.to_string() })
            .collect();
        self
    }
}

/// Multiset of normalized words of one turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenBag {
    pub turn_id: String,
    pub tokens: BTreeMap<String, u32>,
    pub token_count: usize,
}

impl TokenBag {
    pub fn count(&self, word: &str) -> u32 {
        self.tokens.get(word).copied().unwrap_or(0)
    }

    /// One token per line, in lexicographic order. Line breaks keep
    /// combining marks at the start of a token from attaching to the
    /// previous one when the text is segmented again.
    pub fn render(&self) -> String {
        let mut out = Vec::with_capacity(self.token_count);
        for (w, &c) in &self.tokens {
            for _ in 0..c {
                out.push(w.as_str());
            }
        }
        out.join("\n")
    }
}

pub fn tokenize(turn: &Turn, cfg: &TokenizerConfig) -> TokenBag {
    tokenize_text(&turn.turn_id, &turn.text, cfg)
}

pub(crate) fn tokenize_text(turn_id: &str, text: &str, cfg: &TokenizerConfig) -> TokenBag {
    let mut tokens: BTreeMap<String, u32> = BTreeMap::new();
    let words: Box<dyn Iterator<Item = &str>> = if cfg.strip_non_alphanumeric {
        Box::new(text.unicode_words())
    } else {
        Box::new(text.split_word_bounds().filter(|s| !s.trim().is_empty()))
    };
    let mut kept = Vec::new();
    for raw in words {
        normalize(raw, cfg, 0, &mut kept);
    }
    for word in kept {
        if word.chars().count() < cfg.min_token_len || cfg.stopwords.contains(&word) {
            continue;
        }
        *tokens.entry(word).or_default() += 1;
    }
    let token_count = tokens.values().map(|&c| c as usize).sum();
    TokenBag { turn_id: turn_id.to_string(), tokens, token_count }
}

/// Folds and strips one segment. Stripping can leave a word that segments
/// differently on its own; such words are split again so every token is a
/// single segment of itself.
fn normalize(raw: &str, cfg: &TokenizerConfig, depth: usize, out: &mut Vec<String>) {
    let folded = if cfg.lowercase { raw.to_lowercase() } else { raw.to_string() };
    if !cfg.strip_non_alphanumeric {
        out.push(folded);
        return;
    }
    let word: String = folded.chars().filter(|c| c.is_alphanumeric()).collect();
    if word.is_empty() {
        return;
    }
    let pieces: Vec<&str> = word.unicode_words().collect();
    if pieces.len() == 1 && pieces[0] == word {
        out.push(word);
    } else if depth < 4 {
        for p in pieces {
            normalize(p, cfg, depth + 1, out);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EligibilityConfig {
    pub min_tokens: usize,
}

impl Default for EligibilityConfig {
    fn default() -> Self {
        Self { min_tokens: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Eligibility {
    Eligible,
    TooShort,
}

impl Eligibility {
    pub fn is_eligible(self) -> bool {
        self == Eligibility::Eligible
    }
}

pub fn eligibility(bag: &TokenBag, cfg: &EligibilityConfig) -> Eligibility {
    debug_assert!(cfg.min_tokens >= 1);
    if bag.token_count < cfg.min_tokens {
        Eligibility::TooShort
    } else {
        Eligibility::Eligible
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn bag(text: &str) -> TokenBag {
        tokenize_text("t", text, &TokenizerConfig::default())
    }

    #[test]
    fn agree() {
        let b = bag("I agree!!");
        assert_eq!(b.tokens.len(), 1);
        assert_eq!(b.count("agree"), 1);
        assert_eq!(b.token_count, 1);
    }

    #[test]
    fn empty_text() {
        let b = bag("");
        assert!(b.tokens.is_empty());
        assert_eq!(b.token_count, 0);
    }

    #[test]
    fn case_folding_counts() {
        let b = bag("Love love DISEASE");
        assert_eq!(b.count("love"), 2);
        assert_eq!(b.count("disease"), 1);
        assert_eq!(b.token_count, 3);
    }

    #[test]
    fn unicode_words() {
        let b = bag("O amor é uma doença, não é?");
        assert_eq!(b.count("doença"), 1);
        assert_eq!(b.count("não"), 1);
        assert_eq!(b.count("é"), 0);
        let b = bag("don't STOP-believing");
        assert_eq!(b.count("dont"), 1);
        assert_eq!(b.count("stop"), 1);
    }

    #[test]
    fn stopwords_opt_in() {
        let cfg = TokenizerConfig::default().with_stopwords("# list\nThe\nis\n");
        let b = tokenize_text("t", "the love is the disease", &cfg);
        assert_eq!(b.render(), "disease\nlove");
    }

    #[test]
    fn eligibility_boundary() {
        let cfg = EligibilityConfig::default();
        assert_eq!(eligibility(&bag(""), &cfg), Eligibility::TooShort);
        assert_eq!(eligibility(&bag("love is disease"), &cfg), Eligibility::Eligible);
        assert_eq!(eligibility(&bag("love disease"), &cfg), Eligibility::TooShort);
    }

    #[test]
    fn eligible_count_matches_refilter() {
        let words = ["love", "is", "a", "disease", "yes", "no", "ok", "hmm"];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = EligibilityConfig::default();
        let texts: Vec<String> = (0..100)
            .map(|_| {
                let n = rng.random_range(0..7);
                (0..n)
                    .map(|_| words[rng.random_range(0..words.len())])
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect();
        let eligible = texts
            .iter()
            .filter(|t| eligibility(&bag(t), &cfg).is_eligible())
            .count();
        // independent: count words of length >= 2 directly
        let oracle = texts
            .iter()
            .filter(|t| t.split(' ').filter(|w| w.chars().count() >= 2).count() >= 3)
            .count();
        assert_eq!(eligible, oracle);
    }

    proptest! {
        #[test]
        fn idempotent_on_rendering(text in "\\PC{0,60}") {
            let once = bag(&text);
            let twice = bag(&once.render());
            prop_assert_eq!(&once.tokens, &twice.tokens);
            prop_assert_eq!(once.token_count, once.tokens.values().map(|&c| c as usize).sum::<usize>());
        }
    }
}
