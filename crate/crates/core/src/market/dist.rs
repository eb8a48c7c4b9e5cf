//! Score distributions for pre- and post-interview idiosyncratic scores.
//!
//! Distributions are written and read in a compact literal form that is shared
//! by the command line and the scenario JSON files:
//!
//! | literal                         | distribution                    |
//! |---------------------------------|---------------------------------|
//! | `uniform:lo,hi`                 | uniform on `[lo, hi]`           |
//! | `normal:mean,var`               | normal with the given variance  |
//! | `pointmass:c`                   | degenerate at `c`               |
//! | `rademacher`                    | `±1` with probability 1/2 each  |
//! | `mixture:w1*spec1;w2*spec2;...` | finite mixture of the above     |

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use statrs::distribution::{ContinuousCDF, Normal as StatNormal};

use super::MarketError;

/// Tolerance on the sum of mixture weights.
pub const MIXTURE_WEIGHT_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub enum ScoreDistribution {
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, var: f64 },
    PointMass { c: f64 },
    Rademacher,
    Mixture(Vec<MixtureComponent>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixtureComponent {
    pub weight: f64,
    pub dist: ScoreDistribution,
}

impl ScoreDistribution {
    pub fn uniform(lo: f64, hi: f64) -> Self {
        ScoreDistribution::Uniform { lo, hi }
    }

    pub fn normal(mean: f64, var: f64) -> Self {
        ScoreDistribution::Normal { mean, var }
    }

    pub fn point_mass(c: f64) -> Self {
        ScoreDistribution::PointMass { c }
    }

    pub fn mixture(components: Vec<(f64, ScoreDistribution)>) -> Self {
        ScoreDistribution::Mixture(
            components
                .into_iter()
                .map(|(weight, dist)| MixtureComponent { weight, dist })
                .collect(),
        )
    }

    /// Checks parameter validity, recursively for mixtures.
    pub fn validate(&self) -> Result<(), MarketError> {
        match self {
            ScoreDistribution::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(MarketError::InvalidDistribution(format!(
                        "uniform requires finite lo < hi, got [{lo}, {hi}]"
                    )));
                }
            }
            ScoreDistribution::Normal { mean, var } => {
                if !(mean.is_finite() && var.is_finite() && *var > 0.0) {
                    return Err(MarketError::InvalidDistribution(format!(
                        "normal requires finite mean and var > 0, got ({mean}, {var})"
                    )));
                }
            }
            ScoreDistribution::PointMass { c } => {
                if !c.is_finite() {
                    return Err(MarketError::InvalidDistribution(format!(
                        "point mass location must be finite, got {c}"
                    )));
                }
            }
            ScoreDistribution::Rademacher => {}
            ScoreDistribution::Mixture(components) => {
                if components.is_empty() {
                    return Err(MarketError::InvalidDistribution(
                        "mixture needs at least one component".into(),
                    ));
                }
                let mut total = 0.0;
                for comp in components {
                    if !(comp.weight.is_finite() && comp.weight >= 0.0) {
                        return Err(MarketError::InvalidDistribution(format!(
                            "mixture weight must be a probability, got {}",
                            comp.weight
                        )));
                    }
                    comp.dist.validate()?;
                    total += comp.weight;
                }
                if (total - 1.0).abs() > MIXTURE_WEIGHT_TOL {
                    return Err(MarketError::InvalidDistribution(format!(
                        "mixture weights sum to {total}, expected 1"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Draws one value. Identical generator states give identical draws.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            ScoreDistribution::Uniform { lo, hi } => {
                Uniform::new_inclusive(*lo, *hi).expect("validated").sample(rng)
            }
            ScoreDistribution::Normal { mean, var } => {
                Normal::new(*mean, var.sqrt()).expect("validated").sample(rng)
            }
            ScoreDistribution::PointMass { c } => *c,
            ScoreDistribution::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            ScoreDistribution::Mixture(components) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for comp in components {
                    acc += comp.weight;
                    if u < acc {
                        return comp.dist.sample(rng);
                    }
                }
                // Rounding left u above the cumulative total.
                components
                    .iter()
                    .rev()
                    .find(|c| c.weight > 0.0)
                    .unwrap_or(&components[components.len() - 1])
                    .dist
                    .sample(rng)
            }
        }
    }

    /// True when the distribution has no atoms.
    pub fn is_continuous(&self) -> bool {
        match self {
            ScoreDistribution::Uniform { .. } | ScoreDistribution::Normal { .. } => true,
            ScoreDistribution::PointMass { .. } | ScoreDistribution::Rademacher => false,
            ScoreDistribution::Mixture(cs) => {
                cs.iter().all(|c| c.weight == 0.0 || c.dist.is_continuous())
            }
        }
    }

    /// Upper end of the support, `None` when unbounded.
    pub fn support_max(&self) -> Option<f64> {
        match self {
            ScoreDistribution::Uniform { hi, .. } => Some(*hi),
            ScoreDistribution::Normal { .. } => None,
            ScoreDistribution::PointMass { c } => Some(*c),
            ScoreDistribution::Rademacher => Some(1.0),
            ScoreDistribution::Mixture(cs) => {
                let mut best: Option<f64> = None;
                for c in cs.iter().filter(|c| c.weight > 0.0) {
                    let m = c.dist.support_max()?;
                    best = Some(best.map_or(m, |b| b.max(m)));
                }
                best
            }
        }
    }

    /// `P[X <= x]`.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            ScoreDistribution::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            ScoreDistribution::Normal { mean, var } => {
                StatNormal::new(*mean, var.sqrt()).expect("validated").cdf(x)
            }
            ScoreDistribution::PointMass { c } => {
                if x >= *c {
                    1.0
                } else {
                    0.0
                }
            }
            ScoreDistribution::Rademacher => {
                if x >= 1.0 {
                    1.0
                } else if x >= -1.0 {
                    0.5
                } else {
                    0.0
                }
            }
            ScoreDistribution::Mixture(cs) => cs.iter().map(|c| c.weight * c.dist.cdf(x)).sum(),
        }
    }

    /// `P[X > x]`.
    pub fn sf(&self, x: f64) -> f64 {
        match self {
            ScoreDistribution::Normal { mean, var } => {
                StatNormal::new(*mean, var.sqrt()).expect("validated").sf(x)
            }
            ScoreDistribution::Mixture(cs) => cs.iter().map(|c| c.weight * c.dist.sf(x)).sum(),
            _ => 1.0 - self.cdf(x),
        }
    }

    /// `P[X >= x]`.
    pub fn prob_at_least(&self, x: f64) -> f64 {
        match self {
            ScoreDistribution::Uniform { .. } | ScoreDistribution::Normal { .. } => self.sf(x),
            ScoreDistribution::PointMass { c } => {
                if *c >= x {
                    1.0
                } else {
                    0.0
                }
            }
            ScoreDistribution::Rademacher => {
                if x <= -1.0 {
                    1.0
                } else if x <= 1.0 {
                    0.5
                } else {
                    0.0
                }
            }
            ScoreDistribution::Mixture(cs) => {
                cs.iter().map(|c| c.weight * c.dist.prob_at_least(x)).sum()
            }
        }
    }

    /// Closed-form quantile `inf { x : F(x) >= q }`, when one is available.
    pub fn quantile(&self, q: f64) -> Option<f64> {
        if !(0.0..=1.0).contains(&q) {
            return None;
        }
        match self {
            ScoreDistribution::Uniform { lo, hi } => Some(lo + q * (hi - lo)),
            ScoreDistribution::Normal { mean, var } => Some(
                StatNormal::new(*mean, var.sqrt())
                    .expect("validated")
                    .inverse_cdf(q),
            ),
            ScoreDistribution::PointMass { c } => Some(*c),
            ScoreDistribution::Rademacher => Some(if q <= 0.5 { -1.0 } else { 1.0 }),
            ScoreDistribution::Mixture(_) => None,
        }
    }

    /// Atoms `(weight, location)` when the distribution is purely discrete.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            ScoreDistribution::PointMass { c } => Some(vec![(1.0, *c)]),
            ScoreDistribution::Rademacher => Some(vec![(0.5, -1.0), (0.5, 1.0)]),
            ScoreDistribution::Mixture(cs) => {
                let mut out = Vec::new();
                for c in cs.iter().filter(|c| c.weight > 0.0) {
                    for (w, x) in c.dist.atoms()? {
                        out.push((c.weight * w, x));
                    }
                }
                Some(out)
            }
            _ => None,
        }
    }
}

fn fmt_f64(x: f64) -> String {
    // Debug keeps a trailing ".0" off integers only when Display is used;
    // Display already prints the shortest round-tripping form.
    format!("{x}")
}

impl fmt::Display for ScoreDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoreDistribution::Uniform { lo, hi } => {
                write!(f, "uniform:{},{}", fmt_f64(*lo), fmt_f64(*hi))
            }
            ScoreDistribution::Normal { mean, var } => {
                write!(f, "normal:{},{}", fmt_f64(*mean), fmt_f64(*var))
            }
            ScoreDistribution::PointMass { c } => write!(f, "pointmass:{}", fmt_f64(*c)),
            ScoreDistribution::Rademacher => write!(f, "rademacher"),
            ScoreDistribution::Mixture(cs) => {
                write!(f, "mixture:")?;
                for (i, c) in cs.iter().enumerate() {
                    if i > 0 {
                        write!(f, ";")?;
                    }
                    write!(f, "{}*{}", fmt_f64(c.weight), c.dist)?;
                }
                Ok(())
            }
        }
    }
}

fn parse_params(kind: &str, body: &str, expected: usize) -> Result<Vec<f64>, MarketError> {
    let values: Result<Vec<f64>, _> = body.split(',').map(|s| s.trim().parse::<f64>()).collect();
    let values = values.map_err(|e| {
        MarketError::InvalidDistribution(format!("bad number in `{kind}:{body}`: {e}"))
    })?;
    if values.len() != expected {
        return Err(MarketError::InvalidDistribution(format!(
            "`{kind}` takes {expected} parameter(s), got {}",
            values.len()
        )));
    }
    Ok(values)
}

impl FromStr for ScoreDistribution {
    type Err = MarketError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (kind, body) = match s.split_once(':') {
            Some((k, b)) => (k.trim().to_ascii_lowercase(), b),
            None => (s.to_ascii_lowercase(), ""),
        };
        let dist = match kind.as_str() {
            "uniform" => {
                let v = parse_params("uniform", body, 2)?;
                ScoreDistribution::uniform(v[0], v[1])
            }
            "normal" => {
                let v = parse_params("normal", body, 2)?;
                ScoreDistribution::normal(v[0], v[1])
            }
            "pointmass" | "delta" => {
                let v = parse_params("pointmass", body, 1)?;
                ScoreDistribution::point_mass(v[0])
            }
            "rademacher" => {
                if !body.trim().is_empty() {
                    return Err(MarketError::InvalidDistribution(
                        "`rademacher` takes no parameters".into(),
                    ));
                }
                ScoreDistribution::Rademacher
            }
            "mixture" => {
                let mut comps = Vec::new();
                for part in body.split(';') {
                    let (w, spec) = part.split_once('*').ok_or_else(|| {
                        MarketError::InvalidDistribution(format!(
                            "mixture component `{part}` must look like weight*spec"
                        ))
                    })?;
                    let weight = w.trim().parse::<f64>().map_err(|e| {
                        MarketError::InvalidDistribution(format!("bad mixture weight `{w}`: {e}"))
                    })?;
                    comps.push((weight, spec.parse::<ScoreDistribution>()?));
                }
                ScoreDistribution::mixture(comps)
            }
            other => {
                return Err(MarketError::InvalidDistribution(format!(
                    "unknown distribution `{other}` (expected uniform, normal, pointmass, rademacher or mixture)"
                )))
            }
        };
        dist.validate()?;
        Ok(dist)
    }
}

impl Serialize for ScoreDistribution {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ScoreDistribution {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
