use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use replyscope::clustering::Linkage;
use replyscope::labels::{ProviderConfig, ProviderKind};
use replyscope::pipeline::{
    cmd_cluster, cmd_distributions, cmd_generate, cmd_ingest, cmd_label, cmd_run, cmd_score, cmd_topics,
    PipelineConfig, Scenario,
};
use replyscope::reply::LabelSource;

#[derive(Parser)]
#[command(name = "replyscope", version, about = "Reply structure, topic model and debate clustering for chat transcripts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a transcript, build reply trees and the turn-word network.
    Ingest(Common),
    /// Fit the hierarchical block model; write topics and doc clusters.
    Topics(Common),
    /// Label every turn from the cluster label map.
    Label(Common),
    /// Per-debate reply-label distributions and Jensen-Shannon matrices.
    Distributions(Common),
    /// Cluster debates and cut the dendrogram.
    Cluster(Common),
    /// Write a synthetic transcript with ground truth.
    Generate(Common),
    /// Score stage outputs against ground truth.
    Score(Common),
    /// Run every stage in order.
    Run(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum LinkageArg {
    Average,
    Complete,
    Single,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScopeArg {
    OwnLabel,
    ParentLabel,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProviderArg {
    Stub,
    Http,
}

#[derive(Args)]
struct Common {
    /// Transcript (JSON lines).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Directory for all stage artifacts.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Hierarchy level whose doc blocks are labelled.
    #[arg(long, default_value_t = 0)]
    level: usize,
    /// `cluster_id<TAB>label` per line.
    #[arg(long)]
    label_map: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "average")]
    linkage: LinkageArg,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long, default_value_t = 3)]
    min_tokens: usize,
    #[arg(long, default_value_t = 4)]
    restarts: usize,
    /// Check the label map with a language model.
    #[arg(long, value_enum)]
    provider: Option<ProviderArg>,
    /// Which label a reply contributes.
    #[arg(long, value_enum, default_value = "own-label")]
    scope: ScopeArg,
    /// Count moderator replies in the distributions.
    #[arg(long)]
    include_moderators: bool,

    /// Ground-truth sidecar from `generate`.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// `paper-scale`, `three-profiles`, or a scenario JSON file.
    #[arg(long, default_value = "paper-scale")]
    scenario: String,
    /// Provider settings as JSON; flags below override it.
    #[arg(long)]
    provider_config: Option<PathBuf>,
    /// Canned verdicts for the stub provider.
    #[arg(long)]
    stub_verdicts: Option<PathBuf>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Environment variable holding the provider's bearer token.
    #[arg(long)]
    token_env: Option<String>,
    /// Leave moderator turns out of the topic model.
    #[arg(long)]
    exclude_moderators_from_topics: bool,
    /// Stopword list, one word per line.
    #[arg(long)]
    stopwords: Option<PathBuf>,
    /// Permutations for the correlation tests.
    #[arg(long, default_value_t = 10_000)]
    permutations: usize,
    /// Additive smoothing for the distributions.
    #[arg(long)]
    smoothing: Option<f64>,
}

impl Common {
    fn config(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::new(&self.out);
        cfg.input = self.input.clone();
        cfg.truth = self.truth.clone();
        cfg.seed = self.seed;
        cfg.level = self.level;
        cfg.label_map = self.label_map.clone();
        cfg.linkage = match self.linkage {
            LinkageArg::Average => Linkage::Average,
            LinkageArg::Complete => Linkage::Complete,
            LinkageArg::Single => Linkage::Single,
        };
        cfg.threshold = self.threshold;
        cfg.eligibility.min_tokens = self.min_tokens;
        cfg.fit.restarts = self.restarts;
        cfg.scope.label_source = match self.scope {
            ScopeArg::OwnLabel => LabelSource::OwnLabel,
            ScopeArg::ParentLabel => LabelSource::ParentLabel,
        };
        cfg.scope.include_moderators = self.include_moderators;
        cfg.scope.smoothing = self.smoothing;
        cfg.network.exclude_moderators = self.exclude_moderators_from_topics;
        cfg.permutations = self.permutations;
        cfg.scenario = match self.scenario.as_str() {
            "paper-scale" => Scenario::PaperScale,
            "three-profiles" => Scenario::ThreeProfiles,
            path => Scenario::File(path.into()),
        };
        if let Some(path) = &self.stopwords {
            let list = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            cfg.tokenizer = cfg.tokenizer.with_stopwords(&list);
        }
        cfg.provider = self.provider_config()?;
        Ok(cfg)
    }

    fn provider_config(&self) -> Result<Option<ProviderConfig>> {
        let mut pc = match &self.provider_config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None if self.provider.is_some() => ProviderConfig::default(),
            None => return Ok(None),
        };
        match self.provider {
            Some(ProviderArg::Stub) => pc.kind = ProviderKind::Stub,
            Some(ProviderArg::Http) => pc.kind = ProviderKind::Http,
            None => {}
        }
        if self.stub_verdicts.is_some() {
            pc.stub_file = self.stub_verdicts.clone();
        }
        if self.endpoint.is_some() {
            pc.endpoint = self.endpoint.clone();
        }
        if self.model.is_some() {
            pc.model = self.model.clone();
        }
        if let Some(name) = &self.token_env {
            pc.token_env = name.clone();
        }
        Ok(Some(pc))
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Ingest(c) => {
            let r = cmd_ingest(&c.config()?)?;
            println!(
                "{} debates, mean reply proportion {:.3}",
                r.debates.len(),
                r.mean_reply_proportion
            );
        }
        Command::Topics(c) => {
            let r = cmd_topics(&c.config()?)?;
            let (docs, words) = r.hierarchy.block_counts(0)?;
            println!("{} levels; level 0 has {docs} doc blocks and {words} topics", r.hierarchy.level_count());
        }
        Command::Label(c) => {
            let l = cmd_label(&c.config()?)?;
            println!("{} turns labelled, {} warnings", l.turns.len(), l.warnings.len());
        }
        Command::Distributions(c) => {
            let m = cmd_distributions(&c.config()?)?;
            println!("{} debates in the matrix, {} excluded", m.len(), m.excluded.len());
        }
        Command::Cluster(c) => {
            let r = cmd_cluster(&c.config()?)?;
            println!("{} clusters, unassigned: {:?}", r.clusters.len(), r.unassigned);
        }
        Command::Generate(c) => {
            let t = cmd_generate(&c.config()?)?;
            println!("{} debates generated", t.debate_profiles.len());
        }
        Command::Score(c) => {
            let s = cmd_score(&c.config()?)?;
            println!("{}", serde_json::to_string_pretty(&s)?);
        }
        Command::Run(c) => {
            let r = cmd_run(&c.config()?)?;
            println!("{} clusters, unassigned: {:?}", r.clusters.clusters.len(), r.clusters.unassigned);
            if let Some(s) = r.score {
                println!("{}", serde_json::to_string_pretty(&s)?);
            }
        }
    }
    Ok(())
}
