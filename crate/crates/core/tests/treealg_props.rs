use proptest::prelude::*;
use rand::rngs::SmallRng;
use rand::SeedableRng;

use matchlab::treealg::{
    f_d, fixed_point, iterate_composition, marginal_proposal_probabilities, monotone_envelope, DegreeBounds,
    TreeShape,
};

proptest! {
    #[test]
    fn f_is_decreasing_in_p_and_d(d in 0.0f64..60.0, p in 0.0f64..0.99, dp in 1e-4f64..0.01, dd in 0.1f64..5.0) {
        let q = (p + dp).min(1.0);
        if d > 0.0 {
            prop_assert!(f_d(d, q) < f_d(d, p));
        }
        if p > 0.0 {
            prop_assert!(f_d(d + dd, p) < f_d(d, p));
        }
        prop_assert!(f_d(d, p) > 0.0 && f_d(d, p) <= 1.0);
    }

    #[test]
    fn f_is_convex_in_p_and_d(d in 0u32..60, p in 0.02f64..0.98, h in 1e-3f64..0.02) {
        // Convexity in p holds for whole d; for 0 < d < 1 the curvature at 0 is negative.
        let d = d as f64;
        let p_lo = (p - h).max(0.0);
        let p_hi = (p + h).min(1.0);
        let hp = (p_hi - p).min(p - p_lo);
        let second_p = f_d(d, p + hp) - 2.0 * f_d(d, p) + f_d(d, p - hp);
        prop_assert!(second_p >= -1e-9, "{second_p}");
        let second_d = f_d(d + 2.0, p) - 2.0 * f_d(d + 1.0, p) + f_d(d, p);
        prop_assert!(second_d >= -1e-9, "{second_d}");
    }

    #[test]
    fn iterates_decrease_and_stay_above_the_root(a in 1u64..300, b in 1u64..300) {
        let x = fixed_point(a, b, None).x_star;
        let mut prev = f64::INFINITY;
        for m in 0..40 {
            let g = iterate_composition(a as f64, b as f64, m);
            prop_assert!(g <= prev + 1e-15);
            prop_assert!(g >= x - 1e-9);
            prev = g;
        }
    }

    #[test]
    fn envelope_contains_the_exact_marginals(seed in any::<u64>(), n in 2usize..120) {
        let mut rng = SmallRng::seed_from_u64(seed);
        let shape = TreeShape::random_recursive(n, &mut rng);
        let m = shape.height();
        prop_assume!(m >= 1);
        let (mut odd, mut even) = ((f64::INFINITY, 0.0f64), (f64::INFINITY, 0.0f64));
        for i in 1..n {
            let k = shape.depth(i);
            if k >= m {
                continue;
            }
            let c = shape.children(i).len() as f64;
            let slot = if k % 2 == 1 { &mut odd } else { &mut even };
            slot.0 = slot.0.min(c);
            slot.1 = slot.1.max(c);
        }
        // Depths without inner nodes are unconstrained in the recursion.
        let fix = |s: (f64, f64)| if s.0.is_infinite() { (0.0, 0.0) } else { s };
        let (lo, hi) = monotone_envelope(m, DegreeBounds::new(fix(odd), fix(even))).unwrap();
        let mu = marginal_proposal_probabilities(&shape, &[]);
        for &c in shape.children(0) {
            let v = mu[c].unwrap();
            prop_assert!(lo - 1e-12 <= v && v <= hi + 1e-12, "m={m}: {v} not in [{lo}, {hi}]");
        }
    }

    #[test]
    fn widening_bounds_never_shrinks(m in 1usize..8, a in 0.0f64..5.0, b in 0.0f64..5.0, w in 0.0f64..3.0) {
        let (lo, hi) = monotone_envelope(m, DegreeBounds::new((a, a + 1.0), (b, b + 1.0))).unwrap();
        let (lo2, hi2) = monotone_envelope(m, DegreeBounds::new(((a - w).max(0.0), a + 1.0 + w), ((b - w).max(0.0), b + 1.0 + w))).unwrap();
        prop_assert!(lo2 <= lo + 1e-15 && hi2 >= hi - 1e-15);
    }
}

#[test]
fn envelope_rejects_depth_zero() {
    assert!(monotone_envelope(0, DegreeBounds::uniform(2.0)).is_err());
}
