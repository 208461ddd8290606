//! Second-opinion check of a label map by a language model.
//!
//! Each cluster's proposed label is sent with a seeded sample of its turns;
//! the model answers agree / disagree / abstain. Failures never abort the run:
//! after the retry budget the cluster is reported as an abstention.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::{LabelError, LabelMap, TurnLabel};
use crate::corpus::Corpus;
use crate::topics::DocCluster;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Agree,
    Disagree,
    Abstain,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationVerdict {
    pub cluster_id: usize,
    pub proposed: TurnLabel,
    pub verdict: Verdict,
    pub rationale: String,
    pub attempts: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletionRequest {
    pub cluster_id: usize,
    pub system: String,
    pub prompt: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProviderError {
    #[error("request timed out")]
    Timeout,
    #[error("transport: {0}")]
    Transport(String),
    #[error("http status {0}")]
    Status(u16),
    #[error("malformed response: {0}")]
    Malformed(String),
}

impl ProviderError {
    fn retryable(&self) -> bool {
        match self {
            ProviderError::Timeout | ProviderError::Transport(_) => true,
            ProviderError::Status(code) => *code == 429 || *code >= 500,
            ProviderError::Malformed(_) => false,
        }
    }
}

/// Anything that turns a prompt into the model's reply text.
pub trait CompletionProvider: Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError>;
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CannedVerdict {
    verdict: Verdict,
    #[serde(default)]
    rationale: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StubFile {
    #[serde(default = "agree")]
    default: Verdict,
    #[serde(default)]
    verdicts: BTreeMap<usize, CannedVerdict>,
}

fn agree() -> Verdict {
    Verdict::Agree
}

/// Offline provider: agrees with everything unless a canned verdict says
/// otherwise.
#[derive(Debug, Clone)]
pub struct StubProvider {
    default: Verdict,
    canned: BTreeMap<usize, (Verdict, String)>,
}

impl Default for StubProvider {
    fn default() -> Self {
        Self { default: Verdict::Agree, canned: BTreeMap::new() }
    }
}

impl StubProvider {
    /// JSON: `{"default": "agree", "verdicts": {"3": {"verdict": "disagree", "rationale": "..."}}}`.
    pub fn from_json(text: &str) -> Result<Self, LabelError> {
        let file: StubFile = serde_json::from_str(text).map_err(|e| LabelError::Provider(e.to_string()))?;
        Ok(Self {
            default: file.default,
            canned: file.verdicts.into_iter().map(|(k, v)| (k, (v.verdict, v.rationale))).collect(),
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, LabelError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

impl CompletionProvider for StubProvider {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        let (verdict, rationale) = self
            .canned
            .get(&request.cluster_id)
            .cloned()
            .unwrap_or((self.default, "stub verdict".into()));
        Ok(json!({ "verdict": verdict, "rationale": rationale }).to_string())
    }
}

/// OpenAI-style chat completions endpoint.
pub struct HttpProvider {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    token: Option<String>,
}

impl HttpProvider {
    pub fn new(endpoint: &str, model: &str, token: Option<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { agent, endpoint: endpoint.to_string(), model: model.to_string(), token }
    }
}

impl CompletionProvider for HttpProvider {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        let body = json!({
            "model": self.model,
            "temperature": 0,
            "messages": [
                { "role": "system", "content": request.system },
                { "role": "user", "content": request.prompt },
            ],
        });
        let mut req = self.agent.post(&self.endpoint);
        if let Some(token) = &self.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| match e {
            ureq::Error::Timeout(_) => ProviderError::Timeout,
            other => ProviderError::Transport(other.to_string()),
        })?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(ProviderError::Status(status));
        }
        let value: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| ProviderError::Malformed(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ProviderError::Malformed("no choices[0].message.content".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Stub,
    Http,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    /// Canned verdicts for the stub provider.
    #[serde(default)]
    pub stub_file: Option<PathBuf>,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    /// Environment variable holding the bearer token.
    #[serde(default = "default_token_env")]
    pub token_env: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

fn default_token_env() -> String {
    "REPLYSCOPE_API_TOKEN".into()
}

fn default_timeout_ms() -> u64 {
    30_000
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Stub,
            stub_file: None,
            endpoint: None,
            model: None,
            token_env: default_token_env(),
            timeout_ms: default_timeout_ms(),
        }
    }
}

impl ProviderConfig {
    pub fn build(&self) -> Result<Box<dyn CompletionProvider>, LabelError> {
        match self.kind {
            ProviderKind::Stub => Ok(Box::new(match &self.stub_file {
                Some(path) => StubProvider::from_file(path)?,
                None => StubProvider::default(),
            })),
            ProviderKind::Http => {
                let endpoint = self
                    .endpoint
                    .as_deref()
                    .ok_or_else(|| LabelError::Provider("http provider needs an endpoint".into()))?;
                let model = self.model.as_deref().unwrap_or("default");
                let token = std::env::var(&self.token_env).ok();
                Ok(Box::new(HttpProvider::new(endpoint, model, token, Duration::from_millis(self.timeout_ms))))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationConfig {
    /// Turns shown per cluster.
    pub exemplars: usize,
    pub seed: u64,
    pub max_attempts: usize,
    /// First retry waits this long; each further retry doubles it.
    pub backoff_base_ms: u64,
    /// Requests in flight at once.
    pub in_flight: usize,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self { exemplars: 10, seed: 0, max_attempts: 3, backoff_base_ms: 500, in_flight: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterExemplars {
    pub cluster_id: usize,
    pub texts: Vec<String>,
}

/// Up to `k` member texts per cluster, sampled with a per-cluster seed and
/// kept in corpus order.
pub fn cluster_exemplars(clusters: &[DocCluster], corpus: &Corpus, k: usize, seed: u64) -> Vec<ClusterExemplars> {
    let index = corpus.turn_index();
    clusters
        .iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (c.cluster_id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let members: Vec<usize> = (0..c.doc_ids.len()).collect();
            let mut picked: Vec<usize> = members.choose_multiple(&mut rng, k).copied().collect();
            picked.sort_unstable();
            let texts = picked
                .into_iter()
                .filter_map(|i| index.get(c.doc_ids[i].as_str()))
                .map(|r| corpus.debates[r.debate].turns[r.turn].text.clone())
                .collect();
            ClusterExemplars { cluster_id: c.cluster_id, texts }
        })
        .collect()
}

const SYSTEM_PROMPT: &str = "You review labels that an analyst gave to groups of messages from \
online student discussions. Answer only with a JSON object of the form \
{\"verdict\": \"agree\" | \"disagree\" | \"abstain\", \"rationale\": \"one sentence\"}.";

/// Original template: every label definition, the proposed label, then the
/// exemplar turns as a numbered list.
pub fn render_prompt(label: TurnLabel, exemplars: &[String]) -> String {
    let mut p = String::from("Label definitions:\n");
    for l in TurnLabel::ALL {
        p.push_str(&format!("- {l}: {}\n", l.definition()));
    }
    p.push_str(&format!(
        "\nThe analyst labelled the group below as {label}. Messages sampled from the group:\n"
    ));
    for (i, text) in exemplars.iter().enumerate() {
        p.push_str(&format!("{}. {}\n", i + 1, text.replace('\n', " ")));
    }
    p.push_str(&format!(
        "\nDoes {label} describe most of these messages? Reply with the JSON object only."
    ));
    p
}

/// Accepts a bare JSON object or one embedded in surrounding prose.
pub fn parse_verdict(reply: &str) -> Option<(Verdict, String)> {
    #[derive(Deserialize)]
    struct Reply {
        verdict: String,
        #[serde(default)]
        rationale: String,
    }
    let trimmed = reply.trim();
    let parsed: Reply = serde_json::from_str(trimmed).ok().or_else(|| {
        let start = trimmed.find('{')?;
        let end = trimmed.rfind('}')?;
        serde_json::from_str(trimmed.get(start..=end)?).ok()
    })?;
    let verdict = match parsed.verdict.trim().to_ascii_lowercase().as_str() {
        "agree" => Verdict::Agree,
        "disagree" => Verdict::Disagree,
        "abstain" => Verdict::Abstain,
        _ => return None,
    };
    Some((verdict, parsed.rationale))
}

fn ask(
    provider: &dyn CompletionProvider,
    request: &CompletionRequest,
    proposed: TurnLabel,
    cfg: &ValidationConfig,
) -> ValidationVerdict {
    let verdict = |verdict, rationale: String, attempts| ValidationVerdict {
        cluster_id: request.cluster_id,
        proposed,
        verdict,
        rationale,
        attempts,
    };
    let max = cfg.max_attempts.max(1);
    let mut last = String::new();
    for attempt in 1..=max {
        match provider.complete(request) {
            Ok(text) => {
                return match parse_verdict(&text) {
                    Some((v, r)) => verdict(v, r, attempt),
                    None => verdict(Verdict::Abstain, "unparseable".into(), attempt),
                }
            }
            Err(ProviderError::Malformed(_)) => return verdict(Verdict::Abstain, "unparseable".into(), attempt),
            Err(e) if e.retryable() && attempt < max => {
                log::warn!("cluster {}: attempt {attempt} failed: {e}", request.cluster_id);
                let wait = cfg.backoff_base_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(wait));
                last = e.to_string();
            }
            Err(e) => {
                last = e.to_string();
                return verdict(Verdict::Abstain, format!("provider unavailable: {last}"), attempt);
            }
        }
    }
    verdict(Verdict::Abstain, format!("provider unavailable: {last}"), max)
}

/// One verdict per mapped cluster, in cluster order regardless of
/// completion order.
pub fn validate_labels(
    map: &LabelMap,
    exemplars: &[ClusterExemplars],
    provider: &dyn CompletionProvider,
    cfg: &ValidationConfig,
) -> Vec<ValidationVerdict> {
    let jobs: Vec<(CompletionRequest, TurnLabel)> = exemplars
        .iter()
        .filter_map(|ex| {
            let label = map.get(ex.cluster_id)?;
            let request = CompletionRequest {
                cluster_id: ex.cluster_id,
                system: SYSTEM_PROMPT.to_string(),
                prompt: render_prompt(label, &ex.texts),
            };
            Some((request, label))
        })
        .collect();
    let results: Mutex<Vec<Option<ValidationVerdict>>> = Mutex::new(vec![None; jobs.len()]);
    let next = AtomicUsize::new(0);
    let workers = cfg.in_flight.max(1).min(jobs.len());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((request, label)) = jobs.get(i) else { break };
                let v = ask(provider, request, *label, cfg);
                results.lock().expect("results lock")[i] = Some(v);
            });
        }
    });
    let mut out: Vec<ValidationVerdict> = results
        .into_inner()
        .expect("results lock")
        .into_iter()
        .map(|v| v.expect("every job ran"))
        .collect();
    out.sort_by_key(|v| v.cluster_id);
    out
}

pub fn disagreements(verdicts: &[ValidationVerdict]) -> Vec<&ValidationVerdict> {
    verdicts.iter().filter(|v| v.verdict != Verdict::Agree).collect()
}

/// Plain-text report of every non-agreeing cluster.
pub fn write_disagreement_report<W: Write>(verdicts: &[ValidationVerdict], mut out: W) -> std::io::Result<()> {
    let flagged = disagreements(verdicts);
    writeln!(out, "{} of {} clusters flagged", flagged.len(), verdicts.len())?;
    for v in flagged {
        let kind = match v.verdict {
            Verdict::Disagree => "disagree",
            _ => "abstain",
        };
        writeln!(out, "cluster {}\t{}\t{kind}\t{}", v.cluster_id, v.proposed, v.rationale)?;
    }
    Ok(())
}
