mod common;

use common::{brute_linkage, random_matrix, rng, RefLinkage};
use rand::Rng;
use replyscope::clustering::{cut, linkage, Dendrogram, Linkage};
use replyscope::reply::DistanceMatrix;

fn matrix(d: Vec<Vec<f64>>) -> DistanceMatrix<f64> {
    let ids = (0..d.len()).map(|i| format!("d{i}")).collect();
    DistanceMatrix::from_distances(ids, d)
}

fn assert_matches(d: &[Vec<f64>], dendro: &Dendrogram<f64>, method: RefLinkage) {
    let reference = brute_linkage(d, method);
    assert_eq!(dendro.merges.len(), reference.len());
    for (i, (m, r)) in dendro.merges.iter().zip(&reference).enumerate() {
        assert_eq!(dendro.leaves(m.left), r.left, "merge {i} left, {method:?}");
        assert_eq!(dendro.leaves(m.right), r.right, "merge {i} right, {method:?}");
        assert!((m.height - r.height).abs() < 1e-12, "merge {i} height {} vs {}", m.height, r.height);
        assert_eq!(m.size, r.left.len() + r.right.len());
    }
}

#[test]
fn linkage_matches_brute_force() {
    let mut r = rng(5);
    for _ in 0..200 {
        let n = r.random_range(2..=6);
        let d = random_matrix(&mut r, n, false);
        for (method, reference) in
            [(Linkage::Average, RefLinkage::Average), (Linkage::Complete, RefLinkage::Complete), (Linkage::Single, RefLinkage::Single)]
        {
            let dendro = linkage(&matrix(d.clone()), method).unwrap();
            assert_matches(&d, &dendro, reference);
        }
    }
}

#[test]
fn ties_follow_smallest_leaf_pair() {
    let mut r = rng(6);
    for _ in 0..200 {
        let n = r.random_range(3..=6);
        let d = random_matrix(&mut r, n, true);
        for (method, reference) in [(Linkage::Complete, RefLinkage::Complete), (Linkage::Single, RefLinkage::Single)] {
            assert_matches(&d, &linkage(&matrix(d.clone()), method).unwrap(), reference);
        }
    }
}

fn blocks(c: &replyscope::clustering::DebateClusters) -> Vec<Vec<String>> {
    let mut out: Vec<Vec<String>> = c.clusters.iter().map(|c| c.debate_ids.clone()).collect();
    out.extend(c.unassigned.iter().map(|d| vec![d.clone()]));
    out
}

#[test]
fn cuts_coarsen_as_threshold_grows() {
    let mut r = rng(7);
    let thresholds = [0.0, 0.25, 0.5, 0.75, 1.0];
    for _ in 0..100 {
        let n = r.random_range(2..=8);
        let grid = r.random_bool(0.5);
        let d = random_matrix(&mut r, n, grid);
        let dendro = linkage(&matrix(d), Linkage::Average).unwrap();
        let cuts: Vec<_> = thresholds.iter().map(|&t| blocks(&cut(&dendro, t))).collect();
        assert_eq!(cuts[0].len(), n);
        for w in cuts.windows(2) {
            // every finer block sits inside one coarser block
            for fine in &w[0] {
                assert!(w[1].iter().any(|coarse| fine.iter().all(|x| coarse.contains(x))));
            }
            assert!(w[1].len() <= w[0].len());
        }
    }
}
