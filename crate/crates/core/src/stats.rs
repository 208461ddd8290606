//! Per-debate reply usage and its relation to debate size.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::scalar::Scalar;

pub const DEFAULT_PERMUTATIONS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct DebateStats<T: Scalar> {
    pub debate_id: String,
    pub turns: usize,
    pub participants: usize,
    pub replies: usize,
    pub reply_proportion: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Correlation<T: Scalar> {
    /// Spearman's rho.
    pub rho: T,
    /// Two-sided permutation p-value, `(hits + 1) / (permutations + 1)`.
    pub p_value: T,
    pub permutations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct DebateReport<T: Scalar> {
    pub debates: Vec<DebateStats<T>>,
    pub mean_reply_proportion: T,
    /// Sample standard deviation; absent for a single debate.
    pub sd_reply_proportion: Option<T>,
    pub replies_vs_turns: Option<Correlation<T>>,
    pub replies_vs_participants: Option<Correlation<T>>,
    pub notices: Vec<String>,
}

/// Ranks starting at 1; tied values share their average rank.
pub fn average_ranks<T: Scalar>(x: &[T]) -> Vec<T> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).expect("ranked values are not NaN"));
    let mut ranks = vec![T::zero(); x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        // positions i..=j hold ranks i+1..=j+1
        let avg = T::from_usize_lossy(i + j + 2) / T::lit(2.0);
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson<T: Scalar>(x: &[T], y: &[T]) -> Option<T> {
    let n = T::from_usize_lossy(x.len());
    let mx = x.iter().fold(T::zero(), |a, &v| a + v) / n;
    let my = y.iter().fold(T::zero(), |a, &v| a + v) / n;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        sxy = sxy + (a - mx) * (b - my);
        sxx = sxx + (a - mx) * (a - mx);
        syy = syy + (b - my) * (b - my);
    }
    if sxx == T::zero() || syy == T::zero() {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).max(-T::one()).min(T::one()))
}

/// Spearman's rho; `None` with fewer than two items or a constant side.
pub fn spearman<T: Scalar>(x: &[T], y: &[T]) -> Option<T> {
    assert_eq!(x.len(), y.len());
    if x.len() < 2 {
        return None;
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Spearman's rho with a seeded two-sided permutation test.
pub fn spearman_test<T: Scalar>(x: &[T], y: &[T], permutations: usize, seed: u64) -> Option<Correlation<T>> {
    let rho = spearman(x, y)?;
    let rx = average_ranks(x);
    let mut ry = average_ranks(y);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // a little slack so permutations tying the observed value count as hits
    let bar = rho.abs() - T::lit(1e-12).max(T::epsilon() * T::lit(16.0));
    let mut hits = 0usize;
    for _ in 0..permutations {
        ry.shuffle(&mut rng);
        if pearson(&rx, &ry).is_some_and(|r| r.abs() >= bar) {
            hits += 1;
        }
    }
    let p_value = T::from_usize_lossy(hits + 1) / T::from_usize_lossy(permutations + 1);
    Some(Correlation { rho, p_value, permutations })
}

pub fn reply_usage_stats<T: Scalar>(corpus: &Corpus, permutations: usize, seed: u64) -> DebateReport<T> {
    let debates: Vec<DebateStats<T>> = corpus
        .debates
        .iter()
        .map(|d| {
            let turns = d.turns.len();
            let replies = d.reply_count();
            DebateStats {
                debate_id: d.debate_id.clone(),
                turns,
                participants: d.participant_count,
                replies,
                reply_proportion: T::from_usize_lossy(replies) / T::from_usize_lossy(turns.max(1)),
            }
        })
        .collect();
    let props: Vec<T> = debates.iter().map(|d| d.reply_proportion).collect();
    let (mean, sd) = mean_sd(&props);
    let mut notices = Vec::new();
    let col = |f: fn(&DebateStats<T>) -> usize| debates.iter().map(|d| T::from_usize_lossy(f(d))).collect::<Vec<T>>();
    let (replies, turns, participants) = (col(|d| d.replies), col(|d| d.turns), col(|d| d.participants));
    let (vs_turns, vs_participants) = if debates.len() < 2 {
        notices.push("correlations omitted: fewer than two debates".to_string());
        (None, None)
    } else {
        let a = spearman_test(&replies, &turns, permutations, seed);
        let b = spearman_test(&replies, &participants, permutations, seed.wrapping_add(1));
        if a.is_none() {
            notices.push("replies vs turns: a column is constant, correlation undefined".to_string());
        }
        if b.is_none() {
            notices.push("replies vs participants: a column is constant, correlation undefined".to_string());
        }
        (a, b)
    };
    DebateReport {
        debates,
        mean_reply_proportion: mean,
        sd_reply_proportion: sd,
        replies_vs_turns: vs_turns,
        replies_vs_participants: vs_participants,
        notices,
    }
}

/// Mean and sample standard deviation (`n - 1` denominator).
pub fn mean_sd<T: Scalar>(x: &[T]) -> (T, Option<T>) {
    if x.is_empty() {
        return (T::nan(), None);
    }
    let n = T::from_usize_lossy(x.len());
    let mean = x.iter().fold(T::zero(), |a, &v| a + v) / n;
    if x.len() < 2 {
        return (mean, None);
    }
    let ss = x.iter().fold(T::zero(), |a, &v| a + (v - mean) * (v - mean));
    (mean, Some((ss / (n - T::one())).sqrt()))
}

/// `debate_id,turns,participants,replies,reply_proportion` rows.
pub fn write_report_csv<T: Scalar, W: Write>(report: &DebateReport<T>, mut out: W) -> std::io::Result<()> {
    writeln!(out, "debate_id,turns,participants,replies,reply_proportion")?;
    for d in &report.debates {
        writeln!(out, "{},{},{},{},{}", d.debate_id, d.turns, d.participants, d.replies, d.reply_proportion)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fixtures::turn;
    use rand::Rng;

    #[test]
    fn ranks_with_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
    }

    #[test]
    fn perfect_monotone() {
        let x = [1.0, 2.0, 3.0, 10.0, 11.0];
        let y = [0.5, 0.7, 2.0, 8.0, 100.0];
        assert_eq!(spearman(&x, &y), Some(1.0));
        let rev: Vec<f64> = y.iter().rev().copied().collect();
        assert_eq!(spearman(&x, &rev), Some(-1.0));
        assert_eq!(spearman(&x, &[1.0; 5]), None);
    }

    fn exact_p(x: &[f64], y: &[f64]) -> f64 {
        // all n! orderings of y
        fn perms(v: &mut Vec<f64>, k: usize, out: &mut Vec<Vec<f64>>) {
            if k == v.len() {
                out.push(v.clone());
                return;
            }
            for i in k..v.len() {
                v.swap(k, i);
                perms(v, k + 1, out);
                v.swap(k, i);
            }
        }
        let rho = spearman(x, y).unwrap();
        let mut all = Vec::new();
        perms(&mut y.to_vec(), 0, &mut all);
        let hits = all.iter().filter(|p| spearman(x, p).unwrap().abs() >= rho.abs() - 1e-12).count();
        hits as f64 / all.len() as f64
    }

    #[test]
    fn permutation_p_matches_exact_distribution() {
        let x = [3.0, 1.0, 4.0, 1.5, 5.0, 9.0];
        let y = [2.0, 7.0, 1.0, 8.0, 2.5, 8.5];
        let c = spearman_test(&x, &y, DEFAULT_PERMUTATIONS, 7).unwrap();
        let exact = exact_p(&x, &y);
        assert!((c.p_value - exact).abs() < 0.02, "{} vs {exact}", c.p_value);
    }

    #[test]
    fn independent_columns_not_significant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..25).map(|_| rng.random_range(30..120) as f64).collect();
        let y: Vec<f64> = (0..25).map(|_| rng.random_range(10..60) as f64).collect();
        let c = spearman_test(&x, &y, DEFAULT_PERMUTATIONS, 1).unwrap();
        assert!(c.p_value > 0.05 && c.rho.abs() < 0.4, "{c:?}");
    }

    fn corpus(debates: &[(usize, usize)]) -> Corpus {
        let mut turns = Vec::new();
        for (d, &(n, replies)) in debates.iter().enumerate() {
            for i in 0..n {
                let parent = (i > 0 && i <= replies).then(|| format!("d{d}t0"));
                let mut t = turn(&format!("d{d}"), &format!("d{d}t{i}"), i as i64, "x", parent.as_deref());
                t.author_id = format!("u{}", i % 3);
                turns.push(t);
            }
        }
        Corpus::from_turns(turns).unwrap()
    }

    #[test]
    fn report_values() {
        let c = corpus(&[(10, 4), (20, 5), (8, 8 - 1)]);
        let r: DebateReport<f64> = reply_usage_stats(&c, 1000, 0);
        assert_eq!(r.debates[0].reply_proportion, 0.4);
        let props = [0.4, 0.25, 7.0 / 8.0];
        let mean = props.iter().sum::<f64>() / 3.0;
        let sd = (props.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / 2.0).sqrt();
        assert!((r.mean_reply_proportion - mean).abs() < 1e-12);
        assert!((r.sd_reply_proportion.unwrap() - sd).abs() < 1e-12);
        let mut buf = Vec::new();
        write_report_csv(&r, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("debate_id,turns,participants,replies,reply_proportion\nd0,10,3,4,0.4\n"));
    }

    #[test]
    fn single_debate_omits_correlations() {
        let r: DebateReport<f64> = reply_usage_stats(&corpus(&[(10, 4)]), 100, 0);
        assert!(r.replies_vs_turns.is_none());
        assert!(r.sd_reply_proportion.is_none());
        assert_eq!(r.notices.len(), 1);
    }

    #[test]
    fn f32_report() {
        let r: DebateReport<f32> = reply_usage_stats(&corpus(&[(10, 4), (20, 10), (30, 15)]), 200, 0);
        assert_eq!(r.replies_vs_turns.unwrap().rho, 1.0);
    }
}
