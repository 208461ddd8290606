mod common;

use common::{dense_dl, dense_dl_of, exhaustive_min_dl, random_graph, rng, set_partitions};
use rand::Rng;
use replyscope::blockmodel::{fit_graph, BlockState, FitConfig, MoveTarget, Side};

#[test]
fn set_partition_counts_are_bell_numbers() {
    let bell = [1, 1, 2, 5, 15, 52, 203];
    for (n, &b) in bell.iter().enumerate() {
        assert_eq!(set_partitions(n).len(), b);
    }
}

#[test]
fn state_dl_matches_dense_formula_on_every_partition() {
    let mut r = rng(11);
    for _ in 0..6 {
        let (nd, nw) = (r.random_range(1..=4), r.random_range(1..=4));
        let g = random_graph(&mut r, nd, nw, 0.6);
        let mg = g.multigraph();
        for d in set_partitions(nd) {
            for w in set_partitions(nw) {
                let assignment: Vec<usize> = d.iter().copied().chain(w.iter().map(|b| b + nd)).collect();
                let state = BlockState::from_assignment(&mg, &assignment).unwrap();
                let got = state.description_length().total;
                let want = dense_dl(&g, &d, &w);
                assert!((got - want).abs() < 1e-9, "{d:?} {w:?}: {got} vs {want}");
            }
        }
    }
}

#[test]
fn fit_reaches_exhaustive_minimum_on_small_graphs() {
    let mut r = rng(2024);
    for case in 0..25 {
        let nd = r.random_range(2..=5);
        let nw = r.random_range(2..=(8 - nd).max(2));
        let g = random_graph(&mut r, nd, nw, 0.55);
        let best = exhaustive_min_dl(&g);
        let fit = fit_graph(&g.multigraph(), case, &FitConfig::default()).unwrap();
        let got = fit.description_length.total;
        assert!(got <= best + 1e-9, "case {case}: fit {got} vs exhaustive {best}");
        let level0 = &fit.hierarchy.levels[0].assignment;
        assert!((dense_dl_of(&g, level0) - got).abs() < 1e-9);
    }
}

#[test]
fn incremental_moves_match_recompute() {
    let mut r = rng(99);
    let mut checked = 0;
    while checked < 2000 {
        let (nd, nw) = (r.random_range(3..=15), r.random_range(3..=20));
        let g = random_graph(&mut r, nd, nw, 0.3);
        let mg = g.multigraph();
        let (bd, bw) = (r.random_range(1..=nd), r.random_range(1..=nw));
        let assignment: Vec<usize> =
            (0..nd + nw).map(|v| if v < nd { r.random_range(0..bd) } else { bd + r.random_range(0..bw) }).collect();
        let mut state = BlockState::from_assignment(&mg, &assignment).unwrap();
        for _ in 0..50 {
            let v = r.random_range(0..mg.node_count());
            let side = mg.side(v);
            let blocks: Vec<usize> = state.blocks(side).collect();
            let target = if r.random_bool(0.15) {
                MoveTarget::NewBlock
            } else {
                MoveTarget::Block(blocks[r.random_range(0..blocks.len())])
            };
            let before = state.description_length().total;
            let delta = state.delta_dl_move(v, target).unwrap();
            state.apply_move(v, target).unwrap();
            let after = state.description_length().total;
            assert!((delta - (after - before)).abs() < 1e-9, "{delta} vs {}", after - before);
            assert!((after - dense_dl_of(&g, state.assignment())).abs() < 1e-9);
            assert!(state.blocks(Side::Doc).count() >= 1 && state.is_consistent());
            checked += 1;
        }
    }
}
