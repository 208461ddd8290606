//! Stage functions behind the command-line tool.
//!
//! Every stage reads its inputs from, and writes its artifacts to, one output
//! directory, so stages can be rerun or inspected one at a time:
//!
//! | stage         | writes |
//! |---------------|--------|
//! | generate      | `synthetic.jsonl`, `truth.json`, `scenario.json` |
//! | ingest        | `corpus.jsonl`, `reply_trees.json`, `eligibility.tsv`, `network.tsv`, `network_stats.json`, `report.json`, `report.csv` |
//! | topics        | `hierarchy.json`, `topics.json`, `topics_full.json`, `mixtures.csv`, `doc_clusters.json` |
//! | label         | `label_map.tsv`, `labels.tsv`, `label_warnings.txt`, and with a provider `validation.json`, `disagreements.txt` |
//! | distributions | `distributions.csv`, `distributions.json`, `matrix.json`, `distance.csv`, `similarity.csv` |
//! | cluster       | `dendrogram.json`, `clusters.json`, `plot_bars.json`, `plot_dendrogram.json` |
//! | score         | `score.json` |
//!
//! `provenance.json` records the configuration hash of the last run of each
//! stage. No artifact contains timestamps, so reruns are byte-identical.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::blockmodel::{fit, BlockModelError, FitConfig, FitResult};
use crate::clustering::{cut, dendrogram_coordinates, linkage, write_clusters, write_dendrogram, ClusterError, DebateClusters, Linkage};
use crate::corpus::{
    build_reply_forest, eligibility, parse_corpus, tokenize, write_corpus, Corpus, CorpusError, Debate, Eligibility,
    EligibilityConfig, TokenBag, TokenizerConfig,
};
use crate::labels::{
    apply_label_map, cluster_exemplars, majority_label_map, parse_label_map, parse_labels, validate_labels,
    write_disagreement_report, write_label_map, write_labels, LabelError, LabelMap, Labeling, Provenance,
    ProviderConfig, ValidationConfig, Verdict,
};
use crate::network::{build_network, network_stats, BipartiteNetwork, NetworkConfig, NetworkError};
use crate::reply::{
    corpus_distributions, distance_matrix, write_distributions_csv, write_matrix_csv, DistanceMatrix,
    LabelDistribution, ReplyError, ScopeConfig,
};
use crate::score::{score, PipelineOutputs, ScoreError, ScoreReport};
use crate::stats::{reply_usage_stats, write_report_csv, DebateReport, DEFAULT_PERMUTATIONS};
use crate::synth::{generate, read_truth, write_truth, GroundTruth, ScenarioSpec, SynthError};
use crate::topics::{doc_clusters, doc_mixtures, extract_topics, write_mixtures_csv, write_topics, DocCluster, Topic, TopicError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {field}: {message}")]
    Config { field: &'static str, message: String },
    #[error("missing input {path} (run `{stage}` first)")]
    MissingInput { path: PathBuf, stage: &'static str },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    BlockModel(#[from] BlockModelError),
    #[error(transparent)]
    Topic(#[from] TopicError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Reply(#[from] ReplyError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, PipelineError>;

fn config_error(field: &'static str, message: impl Into<String>) -> PipelineError {
    PipelineError::Config { field, message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// 25 debates at the size of the original study.
    PaperScale,
    /// The same three profiles on smaller debates.
    ThreeProfiles,
    /// A `ScenarioSpec` as JSON.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Transcript for `ingest`; `run` generates one when absent.
    pub input: Option<PathBuf>,
    pub out: PathBuf,
    /// Ground-truth sidecar for scoring and for deriving a label map.
    pub truth: Option<PathBuf>,
    pub tokenizer: TokenizerConfig,
    pub eligibility: EligibilityConfig,
    pub network: NetworkConfig,
    pub fit: FitConfig,
    pub seed: u64,
    /// Hierarchy level whose doc blocks are labelled.
    pub level: usize,
    pub label_map: Option<PathBuf>,
    pub scope: ScopeConfig,
    pub linkage: Linkage,
    pub threshold: f64,
    pub provider: Option<ProviderConfig>,
    pub validation: ValidationConfig,
    pub permutations: usize,
    pub scenario: Scenario,
    /// Words listed per topic in `topics.json`.
    pub top_words: usize,
}

impl PipelineConfig {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Self {
            input: None,
            out: out.into(),
            truth: None,
            tokenizer: TokenizerConfig::default(),
            eligibility: EligibilityConfig::default(),
            network: NetworkConfig::default(),
            fit: FitConfig::default(),
            seed: 0,
            level: 0,
            label_map: None,
            scope: ScopeConfig::default(),
            linkage: Linkage::default(),
            threshold: 0.5,
            provider: None,
            validation: ValidationConfig::default(),
            permutations: DEFAULT_PERMUTATIONS,
            scenario: Scenario::PaperScale,
            top_words: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(config_error("threshold", format!("{} not in [0, 1]", self.threshold)));
        }
        if self.eligibility.min_tokens == 0 {
            return Err(config_error("min_tokens", "must be at least 1"));
        }
        if self.fit.restarts == 0 {
            return Err(config_error("restarts", "must be at least 1"));
        }
        for (field, path) in [("input", &self.input), ("label_map", &self.label_map), ("truth", &self.truth)] {
            if let Some(p) = path {
                if !p.is_file() {
                    return Err(config_error(field, format!("{} is not a readable file", p.display())));
                }
            }
        }
        if let Scenario::File(p) = &self.scenario {
            if !p.is_file() {
                return Err(config_error("scenario", format!("{} is not a readable file", p.display())));
            }
        }
        if self.out.exists() && !self.out.is_dir() {
            return Err(config_error("out", format!("{} is not a directory", self.out.display())));
        }
        Ok(())
    }

    /// SHA-256 of the configuration's JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| PipelineError::Json { path: path.into(), source })?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn require(path: PathBuf, stage: &'static str) -> Result<PathBuf> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(PipelineError::MissingInput { path, stage })
    }
}

fn read_json<T: DeserializeOwned>(path: PathBuf, stage: &'static str) -> Result<T> {
    let path = require(path, stage)?;
    let reader = BufReader::new(File::open(&path)?);
    serde_json::from_reader(reader).map_err(|source| PipelineError::Json { path, source })
}

fn with_file<T>(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<T>) -> Result<T> {
    let mut w = create(path)?;
    let r = f(&mut w)?;
    w.flush()?;
    Ok(r)
}

fn record(cfg: &PipelineConfig, stage: &str) -> Result<()> {
    let path = cfg.path("provenance.json");
    let mut stages: BTreeMap<String, Value> = if path.is_file() {
        serde_json::from_str(&fs::read_to_string(&path)?).unwrap_or_default()
    } else {
        BTreeMap::new()
    };
    let hash = cfg.hash();
    log::info!("{stage}: config hash {hash}");
    stages.insert(stage.to_string(), json!({ "config_hash": hash, "version": env!("CARGO_PKG_VERSION") }));
    write_json(&path, &stages)
}

fn start(cfg: &PipelineConfig) -> Result<()> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out)?;
    Ok(())
}

fn load_corpus(cfg: &PipelineConfig) -> Result<Corpus> {
    let path = require(cfg.path("corpus.jsonl"), "ingest")?;
    Ok(parse_corpus(BufReader::new(File::open(path)?))?)
}

struct Prepared {
    bags: Vec<TokenBag>,
    elig: Vec<Eligibility>,
}

fn prepare(corpus: &Corpus, cfg: &PipelineConfig) -> Prepared {
    let bags: Vec<TokenBag> = corpus.turns().map(|t| tokenize(t, &cfg.tokenizer)).collect();
    let elig = bags.iter().map(|b| eligibility(b, &cfg.eligibility)).collect();
    Prepared { bags, elig }
}

fn network(corpus: &Corpus, p: &Prepared, cfg: &PipelineConfig) -> Result<BipartiteNetwork> {
    Ok(build_network(corpus, &p.bags, &p.elig, &cfg.network)?)
}

fn tree_json(debate: &Debate, forest: &crate::corpus::ReplyForest, node: usize) -> Value {
    let children: Vec<Value> = forest.children(node).iter().map(|&c| tree_json(debate, forest, c)).collect();
    if children.is_empty() {
        json!({ "turn_id": debate.turns[node].turn_id })
    } else {
        json!({ "turn_id": debate.turns[node].turn_id, "children": children })
    }
}

pub fn load_scenario(cfg: &PipelineConfig) -> Result<ScenarioSpec> {
    Ok(match &cfg.scenario {
        Scenario::PaperScale => ScenarioSpec::paper_scale(cfg.seed),
        Scenario::ThreeProfiles => ScenarioSpec::three_profiles(cfg.seed),
        Scenario::File(p) => {
            let mut spec: ScenarioSpec = read_json(p.clone(), "generate")?;
            spec.seed = cfg.seed;
            spec
        }
    })
}

/// Writes a synthetic transcript and its ground truth.
pub fn cmd_generate(cfg: &PipelineConfig) -> Result<GroundTruth> {
    start(cfg)?;
    let spec = load_scenario(cfg)?;
    let g = generate(&spec)?;
    with_file(&cfg.path("synthetic.jsonl"), |w| Ok(write_corpus(&g.corpus, w)?))?;
    with_file(&cfg.path("truth.json"), |w| Ok(write_truth(&g.truth, w)?))?;
    write_json(&cfg.path("scenario.json"), &spec)?;
    record(cfg, "generate")?;
    Ok(g.truth)
}

/// Validates the transcript and writes the per-debate report.
pub fn cmd_ingest(cfg: &PipelineConfig) -> Result<DebateReport<f64>> {
    start(cfg)?;
    let input = cfg.input.as_ref().ok_or_else(|| config_error("input", "required for ingest"))?;
    let corpus = parse_corpus(BufReader::new(File::open(input)?))?;
    with_file(&cfg.path("corpus.jsonl"), |w| Ok(write_corpus(&corpus, w)?))?;

    let trees: Vec<Value> = corpus
        .debates
        .iter()
        .map(|d| {
            let forest = build_reply_forest(d);
            let roots: Vec<Value> = forest.roots().iter().map(|&r| tree_json(d, &forest, r)).collect();
            json!({ "debate_id": d.debate_id, "trees": roots })
        })
        .collect();
    write_json(&cfg.path("reply_trees.json"), &trees)?;

    let prepared = prepare(&corpus, cfg);
    with_file(&cfg.path("eligibility.tsv"), |w| {
        for (b, e) in prepared.bags.iter().zip(&prepared.elig) {
            let e = if e.is_eligible() { "eligible" } else { "too_short" };
            writeln!(w, "{}\t{e}\t{}", b.turn_id, b.token_count)?;
        }
        Ok(())
    })?;
    match network(&corpus, &prepared, cfg) {
        Ok(net) => {
            with_file(&cfg.path("network.tsv"), |w| Ok(net.write_edge_list(w)?))?;
            write_json(&cfg.path("network_stats.json"), &network_stats(&net))?;
        }
        Err(e) => log::warn!("no network written: {e}"),
    }

    let report: DebateReport<f64> = reply_usage_stats(&corpus, cfg.permutations, cfg.seed);
    for n in &report.notices {
        log::warn!("{n}");
    }
    write_json(&cfg.path("report.json"), &report)?;
    with_file(&cfg.path("report.csv"), |w| Ok(write_report_csv(&report, w)?))?;
    record(cfg, "ingest")?;
    Ok(report)
}

/// Fits the hierarchical block model and extracts topics and doc clusters.
pub fn cmd_topics(cfg: &PipelineConfig) -> Result<FitResult> {
    start(cfg)?;
    let corpus = load_corpus(cfg)?;
    let prepared = prepare(&corpus, cfg);
    let net = network(&corpus, &prepared, cfg)?;
    let result = fit(&net, cfg.seed, &cfg.fit)?;
    result.hierarchy.check_level(cfg.level)?;
    log::info!(
        "fit: {} levels, description length {:.3} nats",
        result.hierarchy.level_count(),
        result.description_length.total
    );
    write_json(&cfg.path("hierarchy.json"), &result)?;
    let topics = extract_topics(&result.hierarchy, &net, cfg.level)?;
    with_file(&cfg.path("topics.json"), |w| Ok(write_topics(&topics, cfg.top_words, w)?))?;
    write_json(&cfg.path("topics_full.json"), &topics)?;
    let mixtures = doc_mixtures(&result.hierarchy, &net, cfg.level)?;
    with_file(&cfg.path("mixtures.csv"), |w| Ok(write_mixtures_csv(&mixtures, w)?))?;
    write_json(&cfg.path("doc_clusters.json"), &doc_clusters(&result.hierarchy, &net, cfg.level)?)?;
    record(cfg, "topics")?;
    Ok(result)
}

fn load_truth(cfg: &PipelineConfig) -> Result<Option<GroundTruth>> {
    match &cfg.truth {
        Some(p) => Ok(Some(read_truth(&fs::read_to_string(p)?)?)),
        None => Ok(None),
    }
}

/// Applies the label map (or one derived from ground truth) to every turn.
pub fn cmd_label(cfg: &PipelineConfig) -> Result<Labeling> {
    start(cfg)?;
    let corpus = load_corpus(cfg)?;
    let clusters: Vec<DocCluster> = read_json(cfg.path("doc_clusters.json"), "topics")?;
    let mut map: LabelMap = match (&cfg.label_map, load_truth(cfg)?) {
        (Some(path), _) => parse_label_map(&fs::read_to_string(path)?, Provenance::Analyst)?,
        (None, Some(truth)) => {
            log::info!("no label map given; using the majority true label of each cluster");
            majority_label_map(&clusters, &truth.labels)
        }
        (None, None) => return Err(config_error("label_map", "required unless a ground-truth file is given")),
    };

    if let Some(provider_cfg) = &cfg.provider {
        let provider = provider_cfg.build()?;
        let vcfg = ValidationConfig { seed: cfg.seed, ..cfg.validation };
        let exemplars = cluster_exemplars(&clusters, &corpus, vcfg.exemplars, vcfg.seed);
        let verdicts = validate_labels(&map, &exemplars, provider.as_ref(), &vcfg);
        write_json(&cfg.path("validation.json"), &verdicts)?;
        with_file(&cfg.path("disagreements.txt"), |w| Ok(write_disagreement_report(&verdicts, w)?))?;
        if verdicts.iter().all(|v| v.verdict == Verdict::Agree) {
            map.provenance = Provenance::LlmValidated;
        }
    }

    let prepared = prepare(&corpus, cfg);
    let labeling = apply_label_map(&clusters, &map, &corpus, &prepared.elig)?;
    for w in &labeling.warnings {
        log::warn!("{w}");
    }
    with_file(&cfg.path("label_map.tsv"), |w| {
        let provenance = serde_json::to_value(map.provenance).expect("provenance serializes");
        writeln!(w, "# provenance: {}", provenance.as_str().unwrap_or_default())?;
        Ok(write_label_map(&map, w)?)
    })?;
    with_file(&cfg.path("labels.tsv"), |w| Ok(write_labels(&labeling, w)?))?;
    with_file(&cfg.path("label_warnings.txt"), |w| {
        for line in &labeling.warnings {
            writeln!(w, "{line}")?;
        }
        Ok(())
    })?;
    record(cfg, "label")?;
    Ok(labeling)
}

fn load_labels(cfg: &PipelineConfig) -> Result<Labeling> {
    let path = require(cfg.path("labels.tsv"), "label")?;
    Ok(parse_labels(&fs::read_to_string(path)?)?)
}

/// Reply-label distributions and the Jensen-Shannon matrices.
pub fn cmd_distributions(cfg: &PipelineConfig) -> Result<DistanceMatrix<f64>> {
    start(cfg)?;
    let corpus = load_corpus(cfg)?;
    let labeling = load_labels(cfg)?;
    let dists: Vec<LabelDistribution<f64>> = corpus_distributions(&corpus, &labeling, &cfg.scope)?;
    with_file(&cfg.path("distributions.csv"), |w| Ok(write_distributions_csv(&dists, w)?))?;
    write_json(&cfg.path("distributions.json"), &dists)?;
    let matrix = distance_matrix(&dists)?;
    write_json(&cfg.path("matrix.json"), &matrix)?;
    with_file(&cfg.path("distance.csv"), |w| Ok(write_matrix_csv(&matrix.debate_ids, &matrix.distance, w)?))?;
    with_file(&cfg.path("similarity.csv"), |w| Ok(write_matrix_csv(&matrix.debate_ids, &matrix.similarity, w)?))?;
    record(cfg, "distributions")?;
    Ok(matrix)
}

/// Grouped bar data: one group per cluster, then the unassigned debates.
pub fn plot_bars(dists: &[LabelDistribution<f64>], clusters: &DebateClusters) -> Value {
    let by_id: BTreeMap<&str, &LabelDistribution<f64>> = dists.iter().map(|d| (d.debate_id.as_str(), d)).collect();
    let rows = |ids: &[String]| -> Vec<Value> {
        ids.iter()
            .filter_map(|id| by_id.get(id.as_str()))
            .map(|d| json!({ "debate_id": d.debate_id, "values": d.probabilities }))
            .collect()
    };
    let mut groups: Vec<Value> = clusters
        .clusters
        .iter()
        .map(|c| json!({ "group": format!("cluster {}", c.cluster_id), "debates": rows(&c.debate_ids) }))
        .collect();
    if !clusters.unassigned.is_empty() {
        groups.push(json!({ "group": "unassigned", "debates": rows(&clusters.unassigned) }));
    }
    let labels: Vec<&str> = crate::labels::TurnLabel::ALL.iter().map(|l| l.as_str()).collect();
    json!({ "labels": labels, "groups": groups })
}

/// Linkage, cut and plot data.
pub fn cmd_cluster(cfg: &PipelineConfig) -> Result<DebateClusters> {
    start(cfg)?;
    let matrix: DistanceMatrix<f64> = read_json(cfg.path("matrix.json"), "distributions")?;
    let dists: Vec<LabelDistribution<f64>> = read_json(cfg.path("distributions.json"), "distributions")?;
    let dendro = linkage(&matrix, cfg.linkage)?;
    let clusters = cut(&dendro, cfg.threshold);
    log::info!("{} clusters, {} unassigned", clusters.clusters.len(), clusters.unassigned.len());
    with_file(&cfg.path("dendrogram.json"), |w| Ok(write_dendrogram(&dendro, w)?))?;
    with_file(&cfg.path("clusters.json"), |w| Ok(write_clusters(&clusters, cfg.threshold, w)?))?;
    write_json(&cfg.path("plot_bars.json"), &plot_bars(&dists, &clusters))?;
    write_json(&cfg.path("plot_dendrogram.json"), &dendrogram_coordinates(&dendro))?;
    record(cfg, "cluster")?;
    Ok(clusters)
}

fn read_if<T: DeserializeOwned>(path: PathBuf) -> Result<Option<T>> {
    if path.is_file() {
        read_json(path, "score").map(Some)
    } else {
        Ok(None)
    }
}

/// Scores whichever stage outputs exist against the ground truth.
pub fn cmd_score(cfg: &PipelineConfig) -> Result<ScoreReport> {
    start(cfg)?;
    let truth = load_truth(cfg)?.ok_or_else(|| config_error("truth", "required for score"))?;
    let doc_clusters: Option<Vec<DocCluster>> = read_if(cfg.path("doc_clusters.json"))?;
    let topics: Option<Vec<Topic>> = read_if(cfg.path("topics_full.json"))?;
    let labeling = if cfg.path("labels.tsv").is_file() { Some(load_labels(cfg)?) } else { None };
    let dists: Option<Vec<LabelDistribution<f64>>> = read_if(cfg.path("distributions.json"))?;
    let clusters: Option<DebateClusters> = match read_if::<Value>(cfg.path("clusters.json"))? {
        Some(v) => Some(DebateClusters {
            clusters: serde_json::from_value(v["clusters"].clone())
                .map_err(|source| PipelineError::Json { path: cfg.path("clusters.json"), source })?,
            unassigned: serde_json::from_value(v["unassigned"].clone())
                .map_err(|source| PipelineError::Json { path: cfg.path("clusters.json"), source })?,
        }),
        None => None,
    };
    let outputs = PipelineOutputs {
        doc_clusters: doc_clusters.as_deref(),
        topics: topics.as_deref(),
        labeling: labeling.as_ref(),
        distributions: dists.as_deref(),
        clusters: clusters.as_ref(),
    };
    let report = score(&outputs, &truth)?;
    write_json(&cfg.path("score.json"), &report)?;
    record(cfg, "score")?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub report: DebateReport<f64>,
    pub clusters: DebateClusters,
    pub score: Option<ScoreReport>,
}

/// The whole chain; generates a synthetic transcript when no input is given.
pub fn cmd_run(cfg: &PipelineConfig) -> Result<RunSummary> {
    start(cfg)?;
    let mut cfg = cfg.clone();
    if cfg.input.is_none() {
        cmd_generate(&cfg)?;
        cfg.input = Some(cfg.path("synthetic.jsonl"));
        cfg.truth.get_or_insert_with(|| cfg.out.join("truth.json"));
    }
    let report = cmd_ingest(&cfg)?;
    cmd_topics(&cfg)?;
    cmd_label(&cfg)?;
    cmd_distributions(&cfg)?;
    let clusters = cmd_cluster(&cfg)?;
    let score = if cfg.truth.is_some() { Some(cmd_score(&cfg)?) } else { None };
    Ok(RunSummary { report, clusters, score })
}
