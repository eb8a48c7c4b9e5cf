use crate::error::{Error, Result};

use super::TreeShape;

/// `E[1/(1+X)]` for `X ~ Binom(d, p)`, i.e. `(1-(1-p)^(d+1)) / ((d+1) p)`.
///
/// `d` may be any non-negative real; `p = 0` gives the limit 1.
pub fn f_d(d: f64, p: f64) -> f64 {
    if p <= 0.0 {
        return 1.0;
    }
    // compositions can drift a rounding step past 1
    let p = p.min(1.0);
    let k = d + 1.0;
    // 1 - (1-p)^k without cancellation for small p
    -(k * (-p).ln_1p()).exp_m1() / (k * p)
}

/// `E[1/(1+S)]` where `S` is a sum of independent Bernoulli(`probs[i]`).
pub fn node_update(probs: &[f64]) -> f64 {
    let mut pmf = vec![0.0; probs.len() + 1];
    pmf[0] = 1.0;
    for (k, &q) in probs.iter().enumerate() {
        for s in (0..=k + 1).rev() {
            let stay = pmf[s] * (1.0 - q);
            let up = if s > 0 { pmf[s - 1] * q } else { 0.0 };
            pmf[s] = stay + up;
        }
    }
    pmf.iter()
        .enumerate()
        .map(|(s, p)| p / (1.0 + s as f64))
        .sum()
}

/// Probability that each non-root node proposes to its parent under
/// uniformly random strict preferences.
///
/// Computed bottom-up: leaves propose surely, and an inner node proposes
/// with probability `E[1/(1+S)]` where `S` counts its proposing children.
/// `fixed[i] = Some(p)` pins node `i` to `p` instead. The root gets `None`.
pub fn marginal_proposal_probabilities(shape: &TreeShape, fixed: &[Option<f64>]) -> Vec<Option<f64>> {
    let n = shape.len();
    let mut mu = vec![None; n];
    for &i in shape.bfs_order().iter().rev() {
        if shape.parent(i).is_none() {
            continue;
        }
        let pinned = fixed.get(i).copied().flatten();
        mu[i] = Some(match pinned {
            Some(p) => p,
            None => {
                let probs: Vec<f64> = shape
                    .children(i)
                    .iter()
                    .map(|&c| mu[c].expect("children processed first"))
                    .collect();
                node_update(&probs)
            }
        });
    }
    mu
}

/// `(f_a ∘ f_b)^m (1)`.
pub fn iterate_composition(a: f64, b: f64, m: usize) -> f64 {
    let mut x = 1.0;
    for _ in 0..m {
        x = f_d(a, f_d(b, x));
    }
    x
}

/// Complete tree in which the root has `root_children` children and every
/// other inner node has `branching` children, down to depth `m`.
pub fn regular_tree_shape(root_children: usize, branching: usize, m: usize) -> TreeShape {
    let mut parent = vec![None];
    let mut frontier = vec![0usize];
    for level in 0..m {
        let k = if level == 0 { root_children } else { branching };
        let mut next = Vec::with_capacity(frontier.len() * k);
        for &v in &frontier {
            for _ in 0..k {
                parent.push(Some(v));
                next.push(parent.len() - 1);
            }
        }
        frontier = next;
    }
    TreeShape::from_parents(&parent).expect("constructed tree")
}

/// Bounds on out-degrees (number of children) at odd and even depths.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DegreeBounds {
    pub odd_lo: f64,
    pub odd_hi: f64,
    pub even_lo: f64,
    pub even_hi: f64,
}

impl DegreeBounds {
    pub fn new(odd: (f64, f64), even: (f64, f64)) -> Self {
        DegreeBounds {
            odd_lo: odd.0,
            odd_hi: odd.1,
            even_lo: even.0,
            even_hi: even.1,
        }
    }

    pub fn uniform(d: f64) -> Self {
        Self::new((d, d), (d, d))
    }
}

/// Lower and upper bounds on the proposal probability of a root neighbour in
/// a depth-`m` tree whose out-degrees respect `bounds`.
pub fn monotone_envelope(m: usize, bounds: DegreeBounds) -> Result<(f64, f64)> {
    if m == 0 {
        return Err(Error::domain("the envelope needs depth m >= 1"));
    }
    let b = bounds;
    if !(b.odd_lo <= b.odd_hi && b.even_lo <= b.even_hi && b.odd_lo >= 0.0 && b.even_lo >= 0.0) {
        return Err(Error::domain(format!("inconsistent degree bounds {b:?}")));
    }
    let alt = |outer: f64, inner: f64, reps: usize| {
        let mut x = 1.0;
        for _ in 0..reps {
            x = f_d(outer, f_d(inner, x));
        }
        x
    };
    Ok(if m % 2 == 0 {
        let reps = m / 2 - 1;
        (
            f_d(b.odd_hi, alt(b.even_lo, b.odd_hi, reps)),
            f_d(b.odd_lo, alt(b.even_hi, b.odd_lo, reps)),
        )
    } else {
        let reps = (m - 1) / 2;
        (alt(b.odd_hi, b.even_lo, reps), alt(b.odd_lo, b.even_hi, reps))
    })
}
