//! Signaling mechanisms and the interview graphs they induce.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::InterviewGraph;
use crate::market::{apportion, MarketInstance, Side, TierSpec};
use crate::prefs::PrefKey;

/// What agents whose tier has no target tier do.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UntargetedPolicy {
    /// Send no signals.
    #[default]
    NoSignal,
    /// Signal within the lowest tier of the other side.
    LowestTier,
}

/// Which side signals for one mutually targeting pair of tiers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolverEntry {
    pub applicant_tier: usize,
    pub firm_tier: usize,
    pub side: Side,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum Mechanism {
    /// Each applicant signals its top `d` firms.
    #[serde(rename = "applicant")]
    ApplicantSide { d: usize },
    /// Each firm signals its top `d` applicants.
    #[serde(rename = "firm")]
    FirmSide { d: usize },
    /// Both sides signal their top `d`.
    #[serde(rename = "both")]
    BothSide { d: usize },
    /// Every agent signals its top `d` within its target tier.
    #[serde(rename = "multitier")]
    MultiTiered {
        d: usize,
        #[serde(default)]
        untargeted: UntargetedPolicy,
    },
    /// As `MultiTiered`, but in each mutually targeting pair of tiers only
    /// one side signals (the applicant side unless the resolver says otherwise).
    #[serde(rename = "restricted")]
    RestrictedMultiTiered {
        d: usize,
        #[serde(default)]
        untargeted: UntargetedPolicy,
        #[serde(default)]
        resolver: Vec<ResolverEntry>,
    },
}

impl Mechanism {
    pub fn d(&self) -> usize {
        match self {
            Mechanism::ApplicantSide { d }
            | Mechanism::FirmSide { d }
            | Mechanism::BothSide { d }
            | Mechanism::MultiTiered { d, .. }
            | Mechanism::RestrictedMultiTiered { d, .. } => *d,
        }
    }

    pub fn with_d(&self, d: usize) -> Mechanism {
        let mut m = self.clone();
        match &mut m {
            Mechanism::ApplicantSide { d: x }
            | Mechanism::FirmSide { d: x }
            | Mechanism::BothSide { d: x }
            | Mechanism::MultiTiered { d: x, .. }
            | Mechanism::RestrictedMultiTiered { d: x, .. } => *x = d,
        }
        m
    }

    /// Short tag used in CSV output and on the command line.
    pub fn tag(&self) -> &'static str {
        match self {
            Mechanism::ApplicantSide { .. } => "applicant",
            Mechanism::FirmSide { .. } => "firm",
            Mechanism::BothSide { .. } => "both",
            Mechanism::MultiTiered { .. } => "multitier",
            Mechanism::RestrictedMultiTiered { .. } => "restricted",
        }
    }

    /// Builds a mechanism from its tag with default options.
    pub fn from_tag(tag: &str, d: usize) -> Result<Mechanism> {
        Ok(match tag {
            "applicant" => Mechanism::ApplicantSide { d },
            "firm" => Mechanism::FirmSide { d },
            "both" => Mechanism::BothSide { d },
            "multitier" => Mechanism::MultiTiered {
                d,
                untargeted: UntargetedPolicy::NoSignal,
            },
            "restricted" => Mechanism::RestrictedMultiTiered {
                d,
                untargeted: UntargetedPolicy::NoSignal,
                resolver: Vec::new(),
            },
            other => {
                return Err(Error::config(format!(
                    "unknown mechanism `{other}` (expected applicant, firm, both, multitier or restricted)"
                )))
            }
        })
    }

    fn untargeted(&self) -> UntargetedPolicy {
        match self {
            Mechanism::MultiTiered { untargeted, .. }
            | Mechanism::RestrictedMultiTiered { untargeted, .. } => *untargeted,
            _ => UntargetedPolicy::NoSignal,
        }
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(d={})", self.tag(), self.d())
    }
}

/// Target tier of every tier (1-based indices, lowest tier first).
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TargetTierMap {
    /// Firm tier targeted by each applicant tier.
    pub applicant: Vec<Option<usize>>,
    /// Applicant tier targeted by each firm tier.
    pub firm: Vec<Option<usize>>,
}

impl TargetTierMap {
    /// Pairs `(s, κ)` that target each other.
    pub fn mutual_pairs(&self) -> Vec<(usize, usize)> {
        self.applicant
            .iter()
            .enumerate()
            .filter_map(|(s0, t)| {
                let k = (*t)?;
                (self.firm[k - 1] == Some(s0 + 1)).then_some((s0 + 1, k))
            })
            .collect()
    }
}

/// Counts in each tier and every tier above it.
fn cumulative_from_top(sizes: &[usize]) -> Vec<usize> {
    let mut cum = vec![0; sizes.len()];
    let mut acc = 0;
    for i in (0..sizes.len()).rev() {
        acc += sizes[i];
        cum[i] = acc;
    }
    cum
}

/// Target tiers from integer tier sizes.
///
/// Applicant tier `s` dominates firm tier `κ` when the applicants in tiers
/// `≥ s` are no more numerous than the firms in tiers `≥ κ`; its target is
/// the highest firm tier it dominates. Firms are treated symmetrically.
pub fn target_tiers_from_sizes(applicant_sizes: &[usize], firm_sizes: &[usize]) -> TargetTierMap {
    let ca = cumulative_from_top(applicant_sizes);
    let cj = cumulative_from_top(firm_sizes);
    let pick = |mine: usize, theirs: &[usize]| {
        (0..theirs.len()).rev().find(|&k| mine <= theirs[k]).map(|k| k + 1)
    };
    TargetTierMap {
        applicant: ca.iter().map(|&c| pick(c, &cj)).collect(),
        firm: cj.iter().map(|&c| pick(c, &ca)).collect(),
    }
}

pub fn target_tiers(tiers: &TierSpec, n_applicants: usize, n_firms: usize) -> TargetTierMap {
    target_tiers_from_sizes(
        &apportion(&tiers.applicant_fractions, n_applicants),
        &apportion(&tiers.firm_fractions, n_firms),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GeneralImbalance {
    /// Whether every cumulative-count gap is positive.
    pub generally_imbalanced: bool,
    /// Smallest gap `γn` over all tier pairs.
    pub gamma_n: f64,
    /// `γ` with `n = n_applicants + n_firms`.
    pub gamma: f64,
}

pub fn general_imbalance_from_sizes(applicant_sizes: &[usize], firm_sizes: &[usize]) -> GeneralImbalance {
    let ca = cumulative_from_top(applicant_sizes);
    let cj = cumulative_from_top(firm_sizes);
    let min_gap = ca
        .iter()
        .flat_map(|&x| cj.iter().map(move |&y| x.abs_diff(y)))
        .min()
        .unwrap_or(0);
    let n: usize = applicant_sizes.iter().sum::<usize>() + firm_sizes.iter().sum::<usize>();
    GeneralImbalance {
        generally_imbalanced: min_gap > 0,
        gamma_n: min_gap as f64,
        gamma: if n > 0 { min_gap as f64 / n as f64 } else { 0.0 },
    }
}

pub fn general_imbalance(tiers: &TierSpec, n_applicants: usize, n_firms: usize) -> GeneralImbalance {
    general_imbalance_from_sizes(
        &apportion(&tiers.applicant_fractions, n_applicants),
        &apportion(&tiers.firm_fractions, n_firms),
    )
}

/// Local indices of each tier's members, in index order.
fn tier_members(sizes: &[usize]) -> Vec<std::ops::Range<usize>> {
    let mut start = 0;
    sizes
        .iter()
        .map(|&s| {
            let r = start..start + s;
            start += s;
            r
        })
        .collect()
}

/// The `d` most preferred candidates (local indices) by pre-interview key.
fn top_d(
    inst: &MarketInstance,
    viewer: usize,
    side: Side,
    candidates: std::ops::Range<usize>,
    d: usize,
) -> Vec<usize> {
    let mut keyed: Vec<(PrefKey, usize)> = candidates
        .map(|t| {
            let key = match side {
                Side::Applicant => inst.pre_key_unchecked(viewer, t, side),
                Side::Firm => inst.pre_key_unchecked(t, viewer, side),
            };
            (key, t)
        })
        .collect();
    if d < keyed.len() {
        keyed.select_nth_unstable_by(d - 1, |x, y| y.cmp(x));
        keyed.truncate(d);
    }
    let mut out: Vec<usize> = keyed.into_iter().map(|(_, t)| t).collect();
    out.sort_unstable();
    out
}

/// Interview graph: an edge wherever at least one side signalled the other.
pub fn build_interview_graph(inst: &MarketInstance, mech: &Mechanism) -> Result<InterviewGraph> {
    let n_a = inst.n_applicants();
    let n_j = inst.n_firms();
    let d = mech.d();
    if d == 0 {
        return Err(Error::config("the number of signals d must be at least 1"));
    }
    let a_sizes = inst.applicant_tier_sizes().to_vec();
    let j_sizes = inst.firm_tier_sizes().to_vec();
    let a_tiers = tier_members(&a_sizes);
    let j_tiers = tier_members(&j_sizes);

    // Candidate pool per applicant tier and per firm tier; `None` = silent.
    let (app_pool, firm_pool): (Vec<Option<std::ops::Range<usize>>>, Vec<Option<std::ops::Range<usize>>>) =
        match mech {
            Mechanism::ApplicantSide { .. } => (vec![Some(0..n_j); a_sizes.len()], vec![None; j_sizes.len()]),
            Mechanism::FirmSide { .. } => (vec![None; a_sizes.len()], vec![Some(0..n_a); j_sizes.len()]),
            Mechanism::BothSide { .. } => (
                vec![Some(0..n_j); a_sizes.len()],
                vec![Some(0..n_a); j_sizes.len()],
            ),
            Mechanism::MultiTiered { .. } | Mechanism::RestrictedMultiTiered { .. } => {
                let map = target_tiers_from_sizes(&a_sizes, &j_sizes);
                let fallback = mech.untargeted() == UntargetedPolicy::LowestTier;
                let mut app: Vec<_> = map
                    .applicant
                    .iter()
                    .map(|t| match t {
                        Some(k) => Some(j_tiers[k - 1].clone()),
                        None if fallback => Some(j_tiers[0].clone()),
                        None => None,
                    })
                    .collect();
                let mut firm: Vec<_> = map
                    .firm
                    .iter()
                    .map(|t| match t {
                        Some(s) => Some(a_tiers[s - 1].clone()),
                        None if fallback => Some(a_tiers[0].clone()),
                        None => None,
                    })
                    .collect();
                if let Mechanism::RestrictedMultiTiered { resolver, .. } = mech {
                    for (s, k) in map.mutual_pairs() {
                        let side = resolver
                            .iter()
                            .find(|r| r.applicant_tier == s && r.firm_tier == k)
                            .map_or(Side::Applicant, |r| r.side);
                        match side {
                            Side::Applicant => firm[k - 1] = None,
                            Side::Firm => app[s - 1] = None,
                        }
                    }
                }
                (app, firm)
            }
        };

    let check = |pool: &std::ops::Range<usize>, who: &str, tier: usize| -> Result<()> {
        if d > pool.len() {
            return Err(Error::config(format!(
                "d = {d} exceeds the {} candidates available to {who} tier {tier}",
                pool.len()
            )));
        }
        Ok(())
    };
    for (t, pool) in app_pool.iter().enumerate() {
        if let Some(p) = pool {
            if !a_tiers[t].is_empty() {
                check(p, "applicant", t + 1)?;
            }
        }
    }
    for (t, pool) in firm_pool.iter().enumerate() {
        if let Some(p) = pool {
            if !j_tiers[t].is_empty() {
                check(p, "firm", t + 1)?;
            }
        }
    }

    let mut applicant_signals = vec![Vec::new(); n_a];
    for (t, members) in a_tiers.iter().enumerate() {
        if let Some(pool) = &app_pool[t] {
            for a in members.clone() {
                applicant_signals[a] = top_d(inst, a, Side::Applicant, pool.clone(), d);
            }
        }
    }
    let mut firm_signals = vec![Vec::new(); n_j];
    for (t, members) in j_tiers.iter().enumerate() {
        if let Some(pool) = &firm_pool[t] {
            for j in members.clone() {
                firm_signals[j] = top_d(inst, j, Side::Firm, pool.clone(), d);
            }
        }
    }
    Ok(InterviewGraph::from_signal_lists(
        n_a,
        n_j,
        &applicant_signals,
        &firm_signals,
    ))
}
