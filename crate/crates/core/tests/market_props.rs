use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use matchlab::market::{compute_q, p_nonneg};
use matchlab::signaling::build_interview_graph;
use matchlab::{MarketConfig, MarketInstance, Mechanism, ScoreDistribution, TierSpec};

fn pre_table_hash(inst: &MarketInstance) -> u64 {
    let n_a = inst.n_applicants();
    let n = inst.n_agents();
    let mut h = DefaultHasher::new();
    for a in 0..n_a {
        for j in n_a..n {
            inst.pre_utility(a, j).unwrap().to_bits().hash(&mut h);
            inst.pre_utility(j, a).unwrap().to_bits().hash(&mut h);
        }
    }
    h.finish()
}

#[test]
fn sampling_is_deterministic() {
    let mut cfg = MarketConfig::new(
        40,
        30,
        ScoreDistribution::normal(0.0, 1.0),
        ScoreDistribution::uniform(-1.0, 1.0),
        77,
    );
    cfg.tiers = TierSpec { applicant_fractions: vec![0.3, 0.7], firm_fractions: vec![1.0] };
    let x = MarketInstance::sample(cfg.clone()).unwrap();
    let y = MarketInstance::sample(cfg.clone()).unwrap();
    assert_eq!(pre_table_hash(&x), pre_table_hash(&y));
    for a in 0..40 {
        for j in 40..70 {
            assert_eq!(x.post_utility(a, j).unwrap().to_bits(), y.post_utility(a, j).unwrap().to_bits());
        }
    }
    cfg.seed = 78;
    assert_ne!(pre_table_hash(&x), pre_table_hash(&MarketInstance::sample(cfg).unwrap()));
}

#[test]
fn continuous_scores_never_tie() {
    for seed in 0..10_000u64 {
        let (n_a, n_j) = (3 + (seed % 5) as usize, 3 + (seed % 7) as usize);
        let pre = if seed % 2 == 0 {
            ScoreDistribution::normal(0.0, 1.0)
        } else {
            ScoreDistribution::uniform(-1.0, 1.0)
        };
        let inst = MarketInstance::sample(MarketConfig::new(n_a, n_j, pre, ScoreDistribution::normal(0.0, 1.0), seed)).unwrap();
        for v in 0..inst.n_agents() {
            let others: Vec<usize> = if v < n_a { (n_a..n_a + n_j).collect() } else { (0..n_a).collect() };
            let mut u: Vec<u64> = others.iter().map(|&t| inst.pre_utility(v, t).unwrap().to_bits()).collect();
            u.sort_unstable();
            u.dedup();
            assert_eq!(u.len(), others.len(), "tie among agent {v}'s scores, seed {seed}");
        }
    }
}

// Monte Carlo oracles that share nothing with the library's estimators.
fn mc_p_nonneg(d: &ScoreDistribution, n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).filter(|_| d.sample(&mut rng) >= 0.0).count() as f64 / n as f64
}

fn mc_q(pre: &ScoreDistribution, post: &ScoreDistribution, n: usize, seed: u64) -> f64 {
    let t = pre.support_max().unwrap() + post.support_max().unwrap() - 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).filter(|_| pre.sample(&mut rng) + post.sample(&mut rng) > t).count() as f64 / n as f64
}

#[test]
fn p_and_q_closed_forms() {
    let u01 = ScoreDistribution::uniform(0.0, 1.0);
    let pm0 = ScoreDistribution::point_mass(0.0);
    let u11 = ScoreDistribution::uniform(-1.0, 1.0);
    assert!((compute_q(&u01, &u01).unwrap() - 0.5).abs() < 2e-3);
    assert!((compute_q(&u11, &pm0).unwrap() - 0.5).abs() < 2e-3);
    assert!((compute_q(&pm0, &pm0).unwrap() - 1.0).abs() < 2e-3);
    assert!((p_nonneg(&ScoreDistribution::normal(0.0, 1.0)) - 0.5).abs() < 2e-3);
    assert!((p_nonneg(&ScoreDistribution::uniform(-1.0, 3.0)) - 0.75).abs() < 2e-3);
    assert!((p_nonneg(&pm0) - 1.0).abs() < 2e-3);
    assert!((p_nonneg(&ScoreDistribution::Rademacher) - 0.5).abs() < 2e-3);

    // Cases without a registered closed form go through the sampled fallback.
    let mix = ScoreDistribution::mixture(vec![
        (0.3, ScoreDistribution::uniform(-2.0, 0.5)),
        (0.7, ScoreDistribution::uniform(0.0, 1.0)),
    ]);
    let tri = ScoreDistribution::mixture(vec![
        (0.5, ScoreDistribution::uniform(0.0, 0.4)),
        (0.5, ScoreDistribution::uniform(0.2, 0.9)),
    ]);
    assert!((p_nonneg(&mix) - mc_p_nonneg(&mix, 1_000_000, 3)).abs() < 2e-3);
    let analytic = 0.3 * 0.2 + 0.7;
    assert!((p_nonneg(&mix) - analytic).abs() < 1e-12);
    assert!((compute_q(&mix, &tri).unwrap() - mc_q(&mix, &tri, 1_000_000, 4)).abs() < 2e-3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn higher_tiers_are_always_preferred(seed in any::<u64>(), m in 0.01f64..0.249, sizes in prop::collection::vec(1usize..5, 2..4), d in 1usize..3) {
        let n = sizes.iter().sum::<usize>();
        let mut cfg = MarketConfig::new(n, n, ScoreDistribution::uniform(-m, m), ScoreDistribution::uniform(-m, m), seed);
        cfg.tiers = TierSpec::from_sizes(&sizes, &sizes);
        let inst = MarketInstance::sample(cfg).unwrap();
        let g = build_interview_graph(&inst, &Mechanism::ApplicantSide { d: d.min(n) }).unwrap();
        for viewer in 0..2 * n {
            let targets: Vec<usize> = if viewer < n { (n..2 * n).collect() } else { (0..n).collect() };
            for &t1 in &targets {
                for &t2 in &targets {
                    if inst.tier(t1).unwrap() > inst.tier(t2).unwrap() {
                        prop_assert!(
                            inst.interim_utility(viewer, t1, &g).unwrap() > inst.interim_utility(viewer, t2, &g).unwrap()
                        );
                    }
                }
            }
        }
    }
}
