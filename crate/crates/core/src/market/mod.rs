//! Markets, score distributions and utilities.

mod dist;
mod quantities;
pub mod stream;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dist::{MixtureComponent, ScoreDistribution, MIXTURE_WEIGHT_TOL};
pub use quantities::{compute_q, outweighs, p_nonneg, QUANTILE_SAMPLES};
pub use stream::{keyed_rng, keyed_u64, StreamRole};

use crate::graph::InterviewGraph;
use crate::prefs::{PrefKey, Preferences};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarketError {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid market configuration: {0}")]
    InvalidConfig(String),
    #[error("agents {0} and {1} are on the same side of the market")]
    SameSide(usize, usize),
    #[error("agent id {0} is out of range")]
    UnknownAgent(usize),
    #[error("{0} has unbounded support")]
    Unbounded(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Applicant,
    Firm,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Applicant => Side::Firm,
            Side::Firm => Side::Applicant,
        }
    }
}

/// Tier fractions, lowest tier first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TierSpec {
    pub applicant_fractions: Vec<f64>,
    pub firm_fractions: Vec<f64>,
}

impl Default for TierSpec {
    fn default() -> Self {
        TierSpec::single()
    }
}

impl TierSpec {
    pub fn single() -> Self {
        TierSpec {
            applicant_fractions: vec![1.0],
            firm_fractions: vec![1.0],
        }
    }

    /// Fractions proportional to the given integer sizes.
    pub fn from_sizes(applicants: &[usize], firms: &[usize]) -> Self {
        fn norm(v: &[usize]) -> Vec<f64> {
            let t: usize = v.iter().sum();
            v.iter().map(|&x| x as f64 / t as f64).collect()
        }
        TierSpec {
            applicant_fractions: norm(applicants),
            firm_fractions: norm(firms),
        }
    }

    pub fn is_single_tier(&self) -> bool {
        self.applicant_fractions.len() == 1 && self.firm_fractions.len() == 1
    }

    pub fn validate(&self) -> Result<(), MarketError> {
        for (name, fr) in [
            ("applicant", &self.applicant_fractions),
            ("firm", &self.firm_fractions),
        ] {
            if fr.is_empty() {
                return Err(MarketError::InvalidConfig(format!(
                    "{name} tier list is empty"
                )));
            }
            if fr.iter().any(|&x| !(x.is_finite() && x > 0.0)) {
                return Err(MarketError::InvalidConfig(format!(
                    "{name} tier fractions must all be positive, got {fr:?}"
                )));
            }
            let s: f64 = fr.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(MarketError::InvalidConfig(format!(
                    "{name} tier fractions sum to {s}, expected 1"
                )));
            }
        }
        Ok(())
    }

    pub fn applicant_sizes(&self, n_applicants: usize) -> Vec<usize> {
        apportion(&self.applicant_fractions, n_applicants)
    }

    pub fn firm_sizes(&self, n_firms: usize) -> Vec<usize> {
        apportion(&self.firm_fractions, n_firms)
    }
}

/// Largest-remainder apportionment of `n` seats; ties go to the lower index.
pub fn apportion(fractions: &[f64], n: usize) -> Vec<usize> {
    let quotas: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut sizes: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&x, &y| {
        let rx = quotas[x] - quotas[x].floor();
        let ry = quotas[y] - quotas[y].floor();
        ry.total_cmp(&rx).then(x.cmp(&y))
    });
    let mut left = n.saturating_sub(assigned);
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        sizes[i] += 1;
        left -= 1;
    }
    sizes
}

/// Type-dependent post-interview distribution used for firms' scores of applicants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeComponent {
    pub weight: f64,
    pub dist: ScoreDistribution,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketConfig {
    pub n_applicants: usize,
    pub n_firms: usize,
    #[serde(default)]
    pub tiers: TierSpec,
    pub pre_dist: ScoreDistribution,
    pub post_dist: ScoreDistribution,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub applicant_type_mixture: Option<Vec<TypeComponent>>,
    #[serde(default)]
    pub seed: u64,
}

impl MarketConfig {
    pub fn new(
        n_applicants: usize,
        n_firms: usize,
        pre_dist: ScoreDistribution,
        post_dist: ScoreDistribution,
        seed: u64,
    ) -> Self {
        MarketConfig {
            n_applicants,
            n_firms,
            tiers: TierSpec::single(),
            pre_dist,
            post_dist,
            applicant_type_mixture: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), MarketError> {
        if self.n_applicants == 0 || self.n_firms == 0 {
            return Err(MarketError::InvalidConfig(format!(
                "need at least one agent per side, got {} applicants and {} firms",
                self.n_applicants, self.n_firms
            )));
        }
        self.tiers.validate()?;
        self.pre_dist.validate()?;
        self.post_dist.validate()?;
        if let Some(types) = &self.applicant_type_mixture {
            if types.is_empty() {
                return Err(MarketError::InvalidConfig(
                    "applicant type mixture is empty".into(),
                ));
            }
            let mut total = 0.0;
            for t in types {
                if !(t.weight.is_finite() && t.weight >= 0.0) {
                    return Err(MarketError::InvalidConfig(format!(
                        "type weight must be a probability, got {}",
                        t.weight
                    )));
                }
                t.dist.validate()?;
                total += t.weight;
            }
            if (total - 1.0).abs() > MIXTURE_WEIGHT_TOL {
                return Err(MarketError::InvalidConfig(format!(
                    "type weights sum to {total}, expected 1"
                )));
            }
        }
        Ok(())
    }
}

/// A sampled market. Agent ids: applicants `0..n_a`, firms `n_a..n_a+n_j`.
#[derive(Clone, Debug)]
pub struct MarketInstance {
    config: MarketConfig,
    single_tier: bool,
    applicant_tier: Vec<usize>,
    firm_tier: Vec<usize>,
    applicant_tier_sizes: Vec<usize>,
    firm_tier_sizes: Vec<usize>,
    /// `B_{a,j}` row-major by applicant.
    pre_app: Vec<f64>,
    /// `B_{j,a}` row-major by firm.
    pre_firm: Vec<f64>,
    applicant_type: Option<Vec<usize>>,
    /// Explicit `(A_{a,j}, A_{j,a})` tables, laid out like the pre tables.
    explicit_post: Option<(Vec<f64>, Vec<f64>)>,
}

fn draw(dist: &ScoreDistribution, seed: u64, role: StreamRole, a: usize, j: usize) -> f64 {
    if let ScoreDistribution::PointMass { c } = dist {
        return *c;
    }
    let mut rng = keyed_rng(seed, role, a as u64, j as u64);
    dist.sample(&mut rng)
}

fn tier_labels(sizes: &[usize]) -> Vec<usize> {
    sizes
        .iter()
        .enumerate()
        .flat_map(|(t, &s)| std::iter::repeat_n(t + 1, s))
        .collect()
}

/// Samples a market instance. Alias of [`MarketInstance::sample`].
pub fn sample_market(config: &MarketConfig) -> Result<MarketInstance, MarketError> {
    MarketInstance::sample(config.clone())
}

impl MarketInstance {
    pub fn sample(config: MarketConfig) -> Result<Self, MarketError> {
        config.validate()?;
        let n_a = config.n_applicants;
        let n_j = config.n_firms;
        let applicant_tier_sizes = config.tiers.applicant_sizes(n_a);
        let firm_tier_sizes = config.tiers.firm_sizes(n_j);
        let seed = config.seed;

        let mut pre_app = vec![0.0; n_a * n_j];
        pre_app
            .par_chunks_mut(n_j)
            .enumerate()
            .for_each(|(a, row)| {
                for (j, x) in row.iter_mut().enumerate() {
                    *x = draw(&config.pre_dist, seed, StreamRole::PreApplicant, a, j);
                }
            });
        let mut pre_firm = vec![0.0; n_a * n_j];
        pre_firm
            .par_chunks_mut(n_a)
            .enumerate()
            .for_each(|(j, row)| {
                for (a, x) in row.iter_mut().enumerate() {
                    *x = draw(&config.pre_dist, seed, StreamRole::PreFirm, a, j);
                }
            });

        let applicant_type = config.applicant_type_mixture.as_ref().map(|types| {
            (0..n_a)
                .map(|a| {
                    let u = keyed_u64(seed, StreamRole::ApplicantType, a as u64, 0) as f64
                        / (u64::MAX as f64 + 1.0);
                    let mut acc = 0.0;
                    for (k, t) in types.iter().enumerate() {
                        acc += t.weight;
                        if u < acc {
                            return k;
                        }
                    }
                    types.iter().rposition(|t| t.weight > 0.0).unwrap_or(0)
                })
                .collect()
        });

        Ok(MarketInstance {
            single_tier: config.tiers.is_single_tier(),
            applicant_tier: tier_labels(&applicant_tier_sizes),
            firm_tier: tier_labels(&firm_tier_sizes),
            applicant_tier_sizes,
            firm_tier_sizes,
            pre_app,
            pre_firm,
            applicant_type,
            explicit_post: None,
            config,
        })
    }

    /// A single-tier instance with every score given explicitly.
    ///
    /// Tables are row-major: `b_app[a * n_j + j] = B_{a,j}`,
    /// `b_firm[j * n_a + a] = B_{j,a}`, and likewise for the post scores.
    pub fn from_scores(
        n_applicants: usize,
        n_firms: usize,
        b_app: Vec<f64>,
        b_firm: Vec<f64>,
        a_app: Vec<f64>,
        a_firm: Vec<f64>,
    ) -> Result<Self, MarketError> {
        let cells = n_applicants * n_firms;
        if [b_app.len(), b_firm.len(), a_app.len(), a_firm.len()]
            .iter()
            .any(|&l| l != cells)
        {
            return Err(MarketError::InvalidConfig(format!(
                "score tables must have {cells} entries"
            )));
        }
        let all = b_app.iter().chain(&b_firm).chain(&a_app).chain(&a_firm);
        let lo = all.clone().fold(f64::INFINITY, |m, &x| m.min(x));
        let hi = all.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        let span = if hi > lo { ScoreDistribution::uniform(lo, hi) } else { ScoreDistribution::point_mass(lo) };
        let config = MarketConfig::new(n_applicants, n_firms, span.clone(), span, 0);
        config.validate()?;
        Ok(MarketInstance {
            single_tier: true,
            applicant_tier: vec![1; n_applicants],
            firm_tier: vec![1; n_firms],
            applicant_tier_sizes: vec![n_applicants],
            firm_tier_sizes: vec![n_firms],
            pre_app: b_app,
            pre_firm: b_firm,
            applicant_type: None,
            explicit_post: Some((a_app, a_firm)),
            config,
        })
    }

    pub fn config(&self) -> &MarketConfig {
        &self.config
    }

    pub fn n_applicants(&self) -> usize {
        self.config.n_applicants
    }

    pub fn n_firms(&self) -> usize {
        self.config.n_firms
    }

    pub fn n_agents(&self) -> usize {
        self.config.n_applicants + self.config.n_firms
    }

    pub fn firm_vertex(&self, j: usize) -> usize {
        self.config.n_applicants + j
    }

    pub fn side(&self, v: usize) -> Result<Side, MarketError> {
        if v < self.config.n_applicants {
            Ok(Side::Applicant)
        } else if v < self.n_agents() {
            Ok(Side::Firm)
        } else {
            Err(MarketError::UnknownAgent(v))
        }
    }

    pub fn applicant_tier_sizes(&self) -> &[usize] {
        &self.applicant_tier_sizes
    }

    pub fn firm_tier_sizes(&self) -> &[usize] {
        &self.firm_tier_sizes
    }

    /// 1-based tier of an agent.
    pub fn tier(&self, v: usize) -> Result<usize, MarketError> {
        Ok(match self.side(v)? {
            Side::Applicant => self.applicant_tier[v],
            Side::Firm => self.firm_tier[v - self.config.n_applicants],
        })
    }

    /// Hidden type of an applicant when a type mixture is configured.
    pub fn applicant_type(&self, a: usize) -> Option<usize> {
        self.applicant_type.as_ref().and_then(|t| t.get(a).copied())
    }

    /// Intrinsic value: the tier index, or 0 in a single-tier market.
    pub fn value(&self, v: usize) -> Result<f64, MarketError> {
        let t = self.tier(v)?;
        Ok(if self.single_tier { 0.0 } else { t as f64 })
    }

    /// Splits an ordered pair into `(applicant index, firm index, viewer side)`.
    pub fn pair(&self, viewer: usize, target: usize) -> Result<(usize, usize, Side), MarketError> {
        let sv = self.side(viewer)?;
        let st = self.side(target)?;
        if sv == st {
            return Err(MarketError::SameSide(viewer, target));
        }
        let n_a = self.config.n_applicants;
        Ok(match sv {
            Side::Applicant => (viewer, target - n_a, sv),
            Side::Firm => (target, viewer - n_a, sv),
        })
    }

    pub fn b_score(&self, viewer: usize, target: usize) -> Result<f64, MarketError> {
        let (a, j, side) = self.pair(viewer, target)?;
        Ok(self.b_unchecked(a, j, side))
    }

    pub fn a_score(&self, viewer: usize, target: usize) -> Result<f64, MarketError> {
        let (a, j, side) = self.pair(viewer, target)?;
        Ok(self.a_unchecked(a, j, side))
    }

    pub fn pre_utility(&self, viewer: usize, target: usize) -> Result<f64, MarketError> {
        let (a, j, side) = self.pair(viewer, target)?;
        Ok(self.pre_unchecked(a, j, side))
    }

    pub fn post_utility(&self, viewer: usize, target: usize) -> Result<f64, MarketError> {
        let (a, j, side) = self.pair(viewer, target)?;
        Ok(self.post_unchecked(a, j, side))
    }

    /// Post-interview utility on graph edges, pre-interview utility elsewhere.
    pub fn interim_utility(
        &self,
        viewer: usize,
        target: usize,
        graph: &InterviewGraph,
    ) -> Result<f64, MarketError> {
        let (a, j, side) = self.pair(viewer, target)?;
        if graph.n_applicants() != self.n_applicants() || graph.n_firms() != self.n_firms() {
            return Err(MarketError::InvalidConfig(format!(
                "graph is {}x{} but market is {}x{}",
                graph.n_applicants(),
                graph.n_firms(),
                self.n_applicants(),
                self.n_firms()
            )));
        }
        Ok(if graph.has_edge(a, j) {
            self.post_unchecked(a, j, side)
        } else {
            self.pre_unchecked(a, j, side)
        })
    }

    #[inline]
    pub(crate) fn b_unchecked(&self, a: usize, j: usize, side: Side) -> f64 {
        match side {
            Side::Applicant => self.pre_app[a * self.config.n_firms + j],
            Side::Firm => self.pre_firm[j * self.config.n_applicants + a],
        }
    }

    pub(crate) fn a_unchecked(&self, a: usize, j: usize, side: Side) -> f64 {
        if let Some((app, firm)) = &self.explicit_post {
            return match side {
                Side::Applicant => app[a * self.config.n_firms + j],
                Side::Firm => firm[j * self.config.n_applicants + a],
            };
        }
        let seed = self.config.seed;
        match side {
            Side::Applicant => draw(&self.config.post_dist, seed, StreamRole::PostApplicant, a, j),
            Side::Firm => {
                let dist = match (&self.config.applicant_type_mixture, self.applicant_type(a)) {
                    (Some(types), Some(k)) => &types[k].dist,
                    _ => &self.config.post_dist,
                };
                draw(dist, seed, StreamRole::PostFirm, a, j)
            }
        }
    }

    #[inline]
    fn target_value(&self, a: usize, j: usize, side: Side) -> f64 {
        if self.single_tier {
            return 0.0;
        }
        match side {
            Side::Applicant => self.firm_tier[j] as f64,
            Side::Firm => self.applicant_tier[a] as f64,
        }
    }

    #[inline]
    pub(crate) fn pre_unchecked(&self, a: usize, j: usize, side: Side) -> f64 {
        self.target_value(a, j, side) + self.b_unchecked(a, j, side)
    }

    pub(crate) fn post_unchecked(&self, a: usize, j: usize, side: Side) -> f64 {
        self.pre_unchecked(a, j, side) + self.a_unchecked(a, j, side)
    }

    #[inline]
    pub(crate) fn jitter_unchecked(&self, a: usize, j: usize, side: Side) -> u64 {
        let role = match side {
            Side::Applicant => StreamRole::JitterApplicant,
            Side::Firm => StreamRole::JitterFirm,
        };
        keyed_u64(self.config.seed, role, a as u64, j as u64)
    }

    /// Strict pre-interview key (utility, tie-break) for an unchecked pair.
    #[inline]
    pub(crate) fn pre_key_unchecked(&self, a: usize, j: usize, side: Side) -> PrefKey {
        PrefKey::new(self.pre_unchecked(a, j, side), self.jitter_unchecked(a, j, side))
    }

    pub(crate) fn post_key_unchecked(&self, a: usize, j: usize, side: Side) -> PrefKey {
        PrefKey::new(self.post_unchecked(a, j, side), self.jitter_unchecked(a, j, side))
    }

    pub fn pre_key(&self, viewer: usize, target: usize) -> Result<PrefKey, MarketError> {
        let (a, j, side) = self.pair(viewer, target)?;
        Ok(self.pre_key_unchecked(a, j, side))
    }

    pub fn post_key(&self, viewer: usize, target: usize) -> Result<PrefKey, MarketError> {
        let (a, j, side) = self.pair(viewer, target)?;
        Ok(self.post_key_unchecked(a, j, side))
    }
}

/// Post-interview preferences, the basis for deferred acceptance.
impl Preferences for MarketInstance {
    fn key(&self, viewer: usize, target: usize) -> PrefKey {
        self.post_key(viewer, target)
            .expect("preference query between agents on opposite sides")
    }
}

/// Pre-interview preferences, the basis for signaling.
pub struct PrePreferences<'a>(pub &'a MarketInstance);

impl Preferences for PrePreferences<'_> {
    fn key(&self, viewer: usize, target: usize) -> PrefKey {
        self.0
            .pre_key(viewer, target)
            .expect("preference query between agents on opposite sides")
    }
}
