//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the summary is always printed. Exits
//! non-zero when a criterion fails, unless it is listed in `KNOWN_RED` with
//! the reason it cannot pass.

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use replyscope::blockmodel::{fit_graph, BlockState, FitConfig, MoveTarget};
use replyscope::clustering::{cut, linkage, Linkage};
use replyscope::corpus::{AuthorRole, Corpus, Turn};
use replyscope::labels::{ProviderConfig, ProviderKind};
use replyscope::pipeline::{cmd_run, PipelineConfig, Scenario};
use replyscope::reply::{js_distance, js_divergence, js_similarity, DistanceMatrix};
use replyscope::stats::{reply_usage_stats, DebateReport};
use replyscope::synth::read_truth;

use common::{brute_linkage, exhaustive_min_dl, planted_fit, random_graph, random_matrix, rng, RefLinkage};

/// Criteria whose failure is expected and explained.
/// 1: the expected similarity 0.442089 disagrees with its own definition;
///    1 - sqrt(0.3112781245) = 0.4420770, off by 1.2e-5 against a 1e-6 band.
const KNOWN_RED: &[usize] = &[1];

struct Outcome {
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Self { failures: Vec::new(), notes: Vec::new() }
    }

    fn check(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failures.push(what.into());
        }
    }

    fn note(&mut self, what: impl Into<String>) {
        self.notes.push(what.into());
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn js_numerics(o: &mut Outcome) {
    let p = [0.5, 0.5];
    let q = [1.0, 0.0];
    let jsd: f64 = js_divergence(&p, &q).unwrap();
    let sim: f64 = js_similarity(&p, &q).unwrap();
    // independent: 0.5 KL(p||m) + 0.5 KL(q||m), m = (0.75, 0.25)
    let oracle = 0.5 * (0.5 * (0.5f64 / 0.75).log2() + 0.5 * (0.5f64 / 0.25).log2()) + 0.5 * (1.0f64 / 0.75).log2();
    o.check(close(jsd, 0.311278, 1e-6), format!("divergence {jsd:.7} vs 0.311278"));
    o.check(close(jsd, oracle, 1e-12), format!("divergence {jsd} vs oracle {oracle}"));
    o.check(close(sim, 1.0 - oracle.sqrt(), 1e-12), format!("similarity {sim} vs 1 - sqrt(oracle)"));
    o.check(close(sim, 0.442089, 1e-6), format!("similarity {sim:.7} vs expected 0.442089 (1 - sqrt(jsd) = {:.7})", 1.0 - oracle.sqrt()));

    let r = [0.2, 0.3, 0.5];
    o.check(js_similarity(&r, &r).unwrap() == 1.0, "identical similarity is not exactly 1");
    o.check(js_distance(&r, &r).unwrap() == 0.0, "identical distance is not exactly 0");
    let (a, b) = ([0.5, 0.5, 0.0, 0.0], [0.0, 0.0, 0.3, 0.7]);
    o.check(js_divergence(&a, &b).unwrap() == 1.0, "disjoint divergence is not 1 bit");
    o.check(js_similarity(&a, &b).unwrap() == 0.0, "disjoint similarity is not 0");
}

fn dl_oracle(o: &mut Outcome) {
    let mut r = rng(31);
    for case in 0..5u64 {
        let nd = r.random_range(2..=5);
        let nw = r.random_range(2..=(8 - nd));
        let g = random_graph(&mut r, nd, nw, 0.55);
        let best = exhaustive_min_dl(&g);
        let got = fit_graph(&g.multigraph(), case, &FitConfig::default()).unwrap().description_length.total;
        o.check(close(got, best, 1e-9), format!("graph {case} ({nd}+{nw}): fit {got} vs exhaustive {best}"));
    }
}

fn incremental(o: &mut Outcome) {
    let mut r = rng(32);
    let mut worst: f64 = 0.0;
    let mut moves = 0;
    while moves < 1000 {
        let (nd, nw) = (r.random_range(3..=12), r.random_range(3..=16));
        let g = random_graph(&mut r, nd, nw, 0.35);
        let mg = g.multigraph();
        let (bd, bw) = (r.random_range(1..=nd), r.random_range(1..=nw));
        let assignment: Vec<usize> =
            (0..nd + nw).map(|v| if v < nd { r.random_range(0..bd) } else { bd + r.random_range(0..bw) }).collect();
        let mut state = BlockState::from_assignment(&mg, &assignment).unwrap();
        for _ in 0..100 {
            let v = r.random_range(0..mg.node_count());
            let blocks: Vec<usize> = state.blocks(mg.side(v)).collect();
            let target = if r.random_bool(0.1) {
                MoveTarget::NewBlock
            } else {
                MoveTarget::Block(blocks[r.random_range(0..blocks.len())])
            };
            let before = state.description_length().total;
            let delta = state.delta_dl_move(v, target).unwrap();
            state.apply_move(v, target).unwrap();
            let recomputed = BlockState::from_assignment(&mg, state.assignment()).unwrap().description_length().total;
            worst = worst.max((delta - (recomputed - before)).abs());
            moves += 1;
        }
    }
    o.check(worst <= 1e-9, format!("largest mismatch {worst:e} nats"));
    o.note(format!("{moves} moves, largest mismatch {worst:.1e}"));
}

fn planted(o: &mut Outcome) {
    let mut exact = 0;
    let mut slowest: f64 = 0.0;
    for seed in 0..10 {
        let r = planted_fit(40, 40, 0.05, seed);
        slowest = slowest.max(r.seconds);
        if r.nmi == 1.0 {
            exact += 1;
        }
    }
    o.check(exact >= 9, format!("NMI = 1 in {exact}/10 seeds"));
    o.check(slowest < 30.0, format!("slowest fit {slowest:.1}s"));
    o.note(format!("NMI = 1 in {exact}/10 seeds, slowest fit {slowest:.2}s"));
}

fn clustering_oracle(o: &mut Outcome) {
    let mut r = rng(33);
    let methods =
        [(Linkage::Average, RefLinkage::Average), (Linkage::Complete, RefLinkage::Complete), (Linkage::Single, RefLinkage::Single)];
    for case in 0..50 {
        let n = r.random_range(2..=6);
        // every other case draws from a coarse grid so ties occur; average
        // linkage is compared on continuous draws only, where ties have
        // probability zero and rounding cannot reorder them
        let grid = case % 2 == 1;
        let d = random_matrix(&mut r, n, grid);
        let ids: Vec<String> = (0..n).map(|i| format!("d{i}")).collect();
        let m = DistanceMatrix::from_distances(ids, d.clone());
        for (method, reference) in methods {
            if grid && method == Linkage::Average {
                continue;
            }
            let dendro = linkage(&m, method).unwrap();
            let want = brute_linkage(&d, reference);
            let same = dendro.merges.len() == want.len()
                && dendro.merges.iter().zip(&want).all(|(a, b)| {
                    dendro.leaves(a.left) == b.left && dendro.leaves(a.right) == b.right && close(a.height, b.height, 1e-12)
                });
            o.check(same, format!("case {case} ({n} items, {method}) diverges from the reference"));
        }
        let dendro = linkage(&m, Linkage::Average).unwrap();
        let mut prev: Option<Vec<Option<usize>>> = None;
        for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let c = cut(&dendro, t);
            let a: Vec<Option<usize>> = c.assignment().into_values().collect();
            if let Some(p) = &prev {
                // debates together at a lower threshold stay together
                let nested = (0..n).all(|i| (0..n).all(|j| p[i].is_none() || p[i] != p[j] || a[i] == a[j]));
                o.check(nested, format!("case {case}: cut at {t} splits a lower cluster"));
            }
            prev = Some(a);
        }
    }
}

fn read_clusters(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("clusters.json")).unwrap()).unwrap()
}

fn scenario(o: &mut Outcome) {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for dir in &dirs {
        let mut cfg = PipelineConfig::new(dir.path());
        cfg.scenario = Scenario::ThreeProfiles;
        cfg.seed = 7;
        cfg.threshold = 0.5;
        let run = cmd_run(&cfg).unwrap();
        let truth = read_truth(&std::fs::read_to_string(dir.path().join("truth.json")).unwrap()).unwrap();
        let (groups, alone) = truth.expected_clusters();
        let mut got: Vec<Vec<String>> = run.clusters.clusters.iter().map(|c| c.debate_ids.clone()).collect();
        let mut want = groups.clone();
        got.sort();
        want.sort();
        o.check(got == want, format!("clusters {got:?} vs planted {want:?}"));
        o.check(run.clusters.unassigned == alone, format!("unassigned {:?} vs {alone:?}", run.clusters.unassigned));
        let sizes: Vec<usize> = want.iter().map(Vec::len).collect();
        o.note(format!("planted groups of {sizes:?}, singletons {alone:?}"));
    }
    o.notes.truncate(1);
    o.check(read_clusters(dirs[0].path()) == read_clusters(dirs[1].path()), "reruns disagree");
}

fn stats_fixture(o: &mut Outcome) {
    // (turns, replies, participants); proportions 0.2, 0.25, 0.3, 0.35, 0.4
    let spec = [(10, 2, 3), (20, 5, 4), (40, 12, 5), (60, 21, 6), (80, 32, 7)];
    let mut turns = Vec::new();
    for (d, &(n, replies, people)) in spec.iter().enumerate() {
        for i in 0..n {
            turns.push(Turn {
                debate_id: format!("d{d}"),
                turn_id: format!("d{d}-{i}"),
                author_id: format!("u{}", i % people),
                author_role: AuthorRole::Student,
                timestamp_ms: i as i64,
                text: "word".into(),
                reply_to: (i >= 1 && i <= replies).then(|| format!("d{d}-0")),
            });
        }
    }
    let corpus = Corpus::from_turns(turns).unwrap();
    let r: DebateReport<f64> = reply_usage_stats(&corpus, 1000, 0);
    // mean 3/10, sample variance (2 * 0.01 + 2 * 0.0025) / 4 = 1/160
    let sd = (1.0f64 / 160.0).sqrt();
    o.check(close(r.mean_reply_proportion, 0.3, 1e-12), format!("mean {}", r.mean_reply_proportion));
    let got_sd = r.sd_reply_proportion.unwrap_or(f64::NAN);
    o.check(close(got_sd, sd, 1e-12), format!("sd {got_sd} vs {sd}"));
    let rho = |c: Option<replyscope::stats::Correlation<f64>>| c.map(|c| c.rho);
    o.check(rho(r.replies_vs_turns) == Some(1.0), format!("replies vs turns rho {:?}", rho(r.replies_vs_turns)));
    o.check(
        rho(r.replies_vs_participants) == Some(1.0),
        format!("replies vs participants rho {:?}", rho(r.replies_vs_participants)),
    );
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_file() {
            out.insert(path.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&path).unwrap());
        }
    }
    out
}

fn determinism(o: &mut Outcome) {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = PipelineConfig::new(dir.path());
    cfg.seed = 3;
    cfg.provider = Some(ProviderConfig { kind: ProviderKind::Stub, ..ProviderConfig::default() });
    cmd_run(&cfg).unwrap();
    let first = snapshot(dir.path());
    cmd_run(&cfg).unwrap();
    let second = snapshot(dir.path());
    o.check(first.keys().eq(second.keys()), "artifact sets differ");
    for (name, bytes) in &first {
        o.check(second.get(name) == Some(bytes), format!("{name} differs between runs"));
    }
    o.note(format!("{} artifacts compared", first.len()));
}

type Criterion = (usize, &'static str, fn(&mut Outcome));

fn main() {
    let criteria: [Criterion; 8] = [
        (1, "Jensen-Shannon numerics", js_numerics),
        (2, "fit matches exhaustive DL minimum", dl_oracle),
        (3, "incremental DL consistency", incremental),
        (4, "planted two-topic recovery", planted),
        (5, "linkage oracle and cut monotonicity", clustering_oracle),
        (6, "three-profile scenario", scenario),
        (7, "report statistics", stats_fixture),
        (8, "byte-identical reruns", determinism),
    ];
    let limits: BTreeMap<usize, f64> = [(1, 1.0), (2, 60.0)].into();
    let mut unexpected = 0;
    for (id, name, run) in criteria {
        let mut o = Outcome::new();
        let start = Instant::now();
        run(&mut o);
        let secs = start.elapsed().as_secs_f64();
        if let Some(&limit) = limits.get(&id) {
            o.check(secs < limit, format!("took {secs:.2}s, limit {limit}s"));
        }
        let pass = o.failures.is_empty();
        let mut detail = if pass { o.notes.join("; ") } else { o.failures.join("; ") };
        if !pass && KNOWN_RED.contains(&id) {
            detail.push_str(" [known]");
        } else if !pass {
            unexpected += 1;
        }
        println!("criterion {id} {} {name} ({secs:.2}s){}", if pass { "PASS" } else { "FAIL" }, if detail.is_empty() { String::new() } else { format!(": {detail}") });
    }
    if unexpected > 0 {
        eprintln!("{unexpected} criteria failed");
        std::process::exit(1);
    }
}
