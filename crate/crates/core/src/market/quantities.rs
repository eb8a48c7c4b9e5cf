//! Scalar summaries of score distributions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal as StatNormal};

use super::{MarketError, ScoreDistribution};

/// Sample size of every Monte Carlo fallback.
pub const QUANTILE_SAMPLES: usize = 1_000_000;
const QUANTILE_SEED: u64 = 0x5EED_0F_0A11;

/// `P[X >= 0]`.
pub fn p_nonneg(dist: &ScoreDistribution) -> f64 {
    dist.prob_at_least(0.0)
}

fn uniform_sum_cdf(a1: f64, b1: f64, a2: f64, b2: f64, s: f64) -> f64 {
    let r = |t: f64| if t > 0.0 { 0.5 * t * t } else { 0.0 };
    let area = r(s - a1 - a2) - r(s - b1 - a2) - r(s - a1 - b2) + r(s - b1 - b2);
    (area / ((b1 - a1) * (b2 - a2))).clamp(0.0, 1.0)
}

/// Exact `P[A + B <= x]` for the pairs with a registered closed form.
fn sum_cdf(a: &ScoreDistribution, b: &ScoreDistribution, x: f64) -> Option<f64> {
    use ScoreDistribution::*;
    if let Some(atoms) = a.atoms() {
        return Some(atoms.iter().map(|(w, c)| w * b.cdf(x - c)).sum());
    }
    if let Some(atoms) = b.atoms() {
        return Some(atoms.iter().map(|(w, c)| w * a.cdf(x - c)).sum());
    }
    match (a, b) {
        (Normal { mean: m1, var: v1 }, Normal { mean: m2, var: v2 }) => Some(
            StatNormal::new(m1 + m2, (v1 + v2).sqrt())
                .expect("validated")
                .cdf(x),
        ),
        (Uniform { lo: a1, hi: b1 }, Uniform { lo: a2, hi: b2 }) => {
            Some(uniform_sum_cdf(*a1, *b1, *a2, *b2, x))
        }
        _ => None,
    }
}

/// Exact `P[A + B > x]`, same coverage as [`sum_cdf`].
fn sum_sf(a: &ScoreDistribution, b: &ScoreDistribution, x: f64) -> Option<f64> {
    if let Some(atoms) = a.atoms() {
        return Some(atoms.iter().map(|(w, c)| w * b.sf(x - c)).sum());
    }
    if let Some(atoms) = b.atoms() {
        return Some(atoms.iter().map(|(w, c)| w * a.sf(x - c)).sum());
    }
    sum_cdf(a, b, x).map(|p| 1.0 - p)
}

/// `inf { x : F(x) >= q }` by bracketing and bisection.
fn quantile_by_bisection(cdf: impl Fn(f64) -> f64, q: f64) -> f64 {
    let mut lo = -1.0;
    let mut hi = 1.0;
    while cdf(lo) >= q {
        lo = 2.0 * lo - 1.0;
        if lo < -1e300 {
            return f64::NEG_INFINITY;
        }
    }
    while cdf(hi) < q {
        hi = 2.0 * hi + 1.0;
        if hi > 1e300 {
            return f64::INFINITY;
        }
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if cdf(mid) >= q {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

fn quantile(dist: &ScoreDistribution, q: f64) -> f64 {
    dist.quantile(q)
        .unwrap_or_else(|| quantile_by_bisection(|x| dist.cdf(x), q))
}

fn sum_samples(a: &ScoreDistribution, b: &ScoreDistribution) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(QUANTILE_SEED);
    (0..QUANTILE_SAMPLES)
        .map(|_| a.sample(&mut rng) + b.sample(&mut rng))
        .collect()
}

/// Quantile of the convolution `A * B`.
fn sum_quantile(a: &ScoreDistribution, b: &ScoreDistribution, q: f64) -> f64 {
    use ScoreDistribution::*;
    // Shifts and normal sums keep the closed-form quantile of one factor.
    match (a, b) {
        (PointMass { c }, other) | (other, PointMass { c }) => return c + quantile(other, q),
        (Normal { mean: m1, var: v1 }, Normal { mean: m2, var: v2 }) => {
            return quantile(&ScoreDistribution::normal(m1 + m2, v1 + v2), q)
        }
        _ => {}
    }
    if sum_cdf(a, b, 0.0).is_some() {
        return quantile_by_bisection(|x| sum_cdf(a, b, x).expect("registered"), q);
    }
    let mut s = sum_samples(a, b);
    s.sort_unstable_by(f64::total_cmp);
    let idx = ((q * s.len() as f64).ceil() as usize).clamp(1, s.len()) - 1;
    s[idx]
}

/// True when the `k1/(k1+1)`-quantile of `post * pre` lies strictly below the
/// `k2/(k2+1)`-quantile of `pre`.
pub fn outweighs(pre: &ScoreDistribution, post: &ScoreDistribution, k1: u64, k2: u64) -> bool {
    let q1 = k1 as f64 / (k1 as f64 + 1.0);
    let q2 = k2 as f64 / (k2 as f64 + 1.0);
    sum_quantile(post, pre, q1) < quantile(pre, q2)
}

/// `P[A + B > M_A + M_B - 1]` where `M` is the top of each support.
pub fn compute_q(pre: &ScoreDistribution, post: &ScoreDistribution) -> Result<f64, MarketError> {
    let m_b = pre
        .support_max()
        .ok_or_else(|| MarketError::Unbounded(format!("pre-interview distribution {pre}")))?;
    let m_a = post
        .support_max()
        .ok_or_else(|| MarketError::Unbounded(format!("post-interview distribution {post}")))?;
    let t = m_a + m_b - 1.0;
    if let Some(p) = sum_sf(post, pre, t) {
        return Ok(p.clamp(0.0, 1.0));
    }
    let s = sum_samples(post, pre);
    Ok(s.iter().filter(|&&x| x > t).count() as f64 / s.len() as f64)
}
