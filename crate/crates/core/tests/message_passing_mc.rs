//! Exact proposal probabilities against simulated proposal passing.

use rand::rngs::SmallRng;
use rand::{Rng, RngCore, SeedableRng};

use matchlab::treealg::{marginal_proposal_probabilities, RootedPrefTree, TreeShape};

/// Phase one of proposal passing under fresh uniform preferences. A node
/// proposes iff its parent beats every proposing child in its random order,
/// so only those keys are drawn.
fn simulate_proposals(shape: &TreeShape, rng: &mut SmallRng, proposes: &mut [bool]) {
    for &i in shape.bfs_order().iter().rev() {
        if shape.parent(i).is_none() {
            continue;
        }
        let parent_key = rng.next_u64();
        proposes[i] = shape
            .children(i)
            .iter()
            .filter(|&&c| proposes[c])
            .all(|_| rng.next_u64() < parent_key);
    }
}

#[test]
fn streamlined_pass_matches_proposal_passing() {
    let mut rng = SmallRng::seed_from_u64(11);
    for _ in 0..300 {
        let n = rng.random_range(2..40);
        let shape = TreeShape::random_recursive(n, &mut rng);
        // Full key table, turned into preference lists for the library.
        let keys: Vec<Vec<(usize, u64)>> = (0..n)
            .map(|i| shape.neighbors(i).into_iter().map(|j| (j, rng.next_u64())).collect())
            .collect();
        let prefs: Vec<Vec<usize>> = keys
            .iter()
            .map(|row| {
                let mut r = row.clone();
                r.sort_by(|x, y| y.1.cmp(&x.1));
                r.into_iter().map(|(j, _)| j).collect()
            })
            .collect();
        let tree = RootedPrefTree::new(shape.clone(), prefs).unwrap();
        let trace = tree.proposal_passing();
        let key = |i: usize, j: usize| keys[i].iter().find(|x| x.0 == j).unwrap().1;
        let mut mine = vec![false; n];
        for &i in shape.bfs_order().iter().rev() {
            if let Some(p) = shape.parent(i) {
                mine[i] = shape.children(i).iter().filter(|&&c| mine[c]).all(|&c| key(i, c) < key(i, p));
            }
        }
        assert_eq!(mine, trace.proposes);
    }
}

#[test]
fn dp_matches_monte_carlo_frequencies() {
    const DRAWS: usize = 100_000;
    let mut shape_rng = SmallRng::seed_from_u64(5);
    let mut worst_z: f64 = 0.0;
    for t in 0..50 {
        let n = shape_rng.random_range(2..=200);
        let shape = TreeShape::random_recursive(n, &mut shape_rng);
        let mu = marginal_proposal_probabilities(&shape, &[]);
        let mut rng = SmallRng::seed_from_u64(1000 + t);
        let mut counts = vec![0u32; n];
        let mut proposes = vec![false; n];
        for _ in 0..DRAWS {
            simulate_proposals(&shape, &mut rng, &mut proposes);
            for (c, &p) in counts.iter_mut().zip(&proposes) {
                *c += p as u32;
            }
        }
        for i in 1..n {
            let p = mu[i].unwrap();
            let freq = counts[i] as f64 / DRAWS as f64;
            let se = (p * (1.0 - p) / DRAWS as f64).sqrt();
            if se == 0.0 {
                assert_eq!(freq, p, "tree {t} node {i}");
                continue;
            }
            let z = (freq - p).abs() / se;
            worst_z = worst_z.max(z);
            assert!(z <= 4.0, "tree {t} node {i}: dp {p}, simulated {freq}, z = {z:.2}");
        }
        assert!(mu[0].is_none());
    }
    eprintln!("largest deviation: {worst_z:.2} standard errors");
}
