mod common;

use std::time::Instant;

use common::{all_trees, log_sum_exp};
use mlal_core::graph::{chu_liu_edmonds, log_partition, ArcScores};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Sum of the chosen arcs, computed here rather than by the library.
fn total(s: &ArcScores, heads: &[usize]) -> f64 {
    heads.iter().enumerate().map(|(i, &h)| s.get(h, i + 1)).sum()
}

fn random_scores(rng: &mut ChaCha8Rng, n: usize) -> ArcScores {
    ArcScores::from_fn(n, |_, _| rng.gen_range(-5.0..5.0))
}

#[test]
fn decoder_matches_exhaustive_search() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let trees: Vec<Vec<Vec<usize>>> = (0..=4).map(all_trees).collect();
    for case in 0..1000 {
        let n = 1 + case % 4;
        let s = random_scores(&mut rng, n);
        let best = trees[n].iter().map(|h| total(&s, h)).fold(f64::NEG_INFINITY, f64::max);
        let got = chu_liu_edmonds(&s).unwrap();
        assert!(common::is_single_root_tree(&got.heads), "{:?}", got.heads);
        assert!((total(&s, &got.heads) - best).abs() <= 1e-9, "case {case}: {} vs {best}", total(&s, &got.heads));
    }
    assert!(start.elapsed().as_secs_f64() < 10.0);
}

#[test]
fn partition_matches_exhaustive_sum() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let trees: Vec<Vec<Vec<usize>>> = (0..=5).map(all_trees).collect();
    for case in 0..200 {
        let n = 1 + case % 5;
        let s = random_scores(&mut rng, n);
        let scores: Vec<f64> = trees[n].iter().map(|h| total(&s, h)).collect();
        let want = log_sum_exp(&scores);
        let got = log_partition(&s).unwrap();
        assert!((got - want).abs() <= 1e-9, "case {case} n={n}: {got} vs {want}");
    }
    assert!(start.elapsed().as_secs_f64() < 10.0);
}

#[test]
fn tree_counts_follow_cayley() {
    // Single-root trees over n nodes: n^(n-1).
    for n in 1..=5usize {
        assert_eq!(all_trees(n).len(), n.pow(n as u32 - 1));
    }
}

#[test]
fn forced_contraction_three_tokens() {
    // A strong 1 <-> 2 cycle that the decoder has to break.
    let mut s = ArcScores::from_fn(3, |_, _| -4.0);
    s.set(1, 2, 10.0);
    s.set(2, 1, 9.0);
    s.set(0, 3, 1.0);
    s.set(3, 1, 0.5);
    let best = all_trees(3)
        .into_iter()
        .max_by(|a, b| total(&s, a).total_cmp(&total(&s, b)))
        .unwrap();
    let got = chu_liu_edmonds(&s).unwrap();
    assert_eq!(got.heads, best);
}
