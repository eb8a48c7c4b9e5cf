use serde::Serialize;

use super::message::f_d;

/// Large-parameter regime of `f_a ∘ f_b`, tagged from `c = (a+1)/(b+1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Regime {
    /// `c < 1`
    F1,
    /// `c = 1`
    F2,
    /// `c > 1`
    F3,
    /// `a` or `b` is zero; no asymptotic form applies.
    NumericOnly,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Regime::F1 => "F1",
            Regime::F2 => "F2",
            Regime::F3 => "F3",
            Regime::NumericOnly => "numeric-only",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FixedPointResult {
    pub a: u64,
    pub b: u64,
    /// Root of `f_a(f_b(x)) = x` on `(0, 1)` found by bisection.
    pub x_star: f64,
    pub regime: Regime,
    pub asymptotic_x_star: Option<f64>,
    /// Regime-specific contraction factor, when `epsilon` was supplied.
    pub gamma_epsilon: Option<f64>,
    /// Number of sign changes of `f_a∘f_b(x) - x` on a uniform grid.
    pub sign_changes: usize,
}

impl FixedPointResult {
    pub fn residual(&self) -> f64 {
        let (a, b) = (self.a as f64, self.b as f64);
        (f_d(a, f_d(b, self.x_star)) - self.x_star).abs()
    }
}

/// Has the sign of `f_a(f_b(x)) - x` on `(0, 1]`.
///
/// With `k = a+1`, `l = b+1` and `y = f_b(x)` the difference equals
/// `x (l Q - k P) / (k P)` for `P = 1-(1-x)^l`, `Q = 1-(1-y)^k`. Expanding
/// `l Q - k P` keeps the small powers `(1-x)^l` and `(1-y)^k` at full
/// relative precision; the naive difference is swamped by rounding once both
/// are below machine epsilon, e.g. for `a = b = 10^4`.
fn h(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let (k, l) = (a + 1.0, b + 1.0);
    let y = f_d(b, x).clamp(0.0, 1.0);
    let p_bar = (l * (-x).ln_1p()).exp();
    let q_bar = (k * (-y).ln_1p()).exp();
    (l - k) + k * p_bar - l * q_bar
}

/// Sign changes of `h` on a uniform grid, counting `h <= 0` as negative so a
/// root sitting on the right endpoint (as for `a = 0`) still counts once.
fn count_sign_changes(a: f64, b: f64, grid: usize) -> usize {
    let mut changes = 0;
    let mut prev = h(a, b, 0.0) > 0.0;
    for k in 1..=grid {
        let pos = h(a, b, k as f64 / grid as f64) > 0.0;
        if pos != prev {
            changes += 1;
            prev = pos;
        }
    }
    changes
}

/// Fixed point of `f_a ∘ f_b` by bisection, with the regime closed forms.
pub fn fixed_point(a: u64, b: u64, epsilon: Option<f64>) -> FixedPointResult {
    let (af, bf) = (a as f64, b as f64);
    // h > 0 near 0 and h(1) <= 0, so a root lies in between.
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if h(af, bf, mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x_star = 0.5 * (lo + hi);
    let c = (af + 1.0) / (bf + 1.0);
    let regime = if a == 0 || b == 0 {
        Regime::NumericOnly
    } else if a < b {
        Regime::F1
    } else if a == b {
        Regime::F2
    } else {
        Regime::F3
    };
    let asymptotic_x_star = match regime {
        Regime::F1 => Some(-c / (-c).ln_1p()),
        Regime::F2 => Some(1.0 / (bf + 1.0).sqrt()),
        Regime::F3 => Some(-(-1.0 / c).ln_1p() / (bf + 1.0)),
        Regime::NumericOnly => None,
    };
    let gamma_epsilon = epsilon.and_then(|eps| match regime {
        Regime::F1 => Some((1.0 - (1.0 - c).powf(1.0 / (1.0 + eps / 2.0))) / c),
        Regime::F2 => {
            let s = (bf + 1.0).sqrt();
            Some(-(-s / (1.0 + eps / 2.0)).exp_m1() / -(-(1.0 + eps) * s).exp_m1())
        }
        Regime::F3 => Some(1.0 / (1.0 + eps * (1.0 - 1.0 / c))),
        Regime::NumericOnly => None,
    });
    FixedPointResult {
        a,
        b,
        x_star,
        regime,
        asymptotic_x_star,
        gamma_epsilon,
        sign_changes: count_sign_changes(af, bf, 10_000),
    }
}

/// `f_a∘f_b((1+ε)x*) / ((1+ε)x*)`, the contraction ratio at the perturbed
/// point. `None` when `(1+ε)x*` leaves `[0, 1]`.
pub fn contraction_ratio(a: u64, b: u64, x_star: f64, epsilon: f64) -> Option<f64> {
    let x = (1.0 + epsilon) * x_star;
    if !(x > 0.0 && x <= 1.0) {
        return None;
    }
    Some(f_d(a as f64, f_d(b as f64, x)) / x)
}
