//! Exhaustive ground truth for small instances.

mod battery;

pub use battery::{
    applicant_signaling_battery, oracle_equivalence_battery, random_small_instance,
    random_tree_battery, truncation_battery, BatteryOutcome, SmallInstance,
};

use crate::error::{Error, Result};
use crate::graph::InterviewGraph;
use crate::matching::{verify_stable_ranked, Matching, RankedGraph};
use crate::prefs::Preferences;

/// Default cap on the number of agents for exhaustive enumeration.
pub const MAX_ORACLE_AGENTS: usize = 12;

/// Every stable matching of an instance.
#[derive(Clone, Debug)]
pub struct StableSet {
    pub matchings: Vec<Matching>,
    /// Same matched-agent set in every member.
    pub rural_hospital_consistent: bool,
    /// Member every applicant likes best, if any.
    pub applicant_optimal: Option<usize>,
    /// Member every firm likes best, if any.
    pub firm_optimal: Option<usize>,
}

fn weakly_prefers(ranked: &RankedGraph, v: usize, x: Option<usize>, y: Option<usize>) -> bool {
    match (x, y) {
        (_, None) => true,
        (None, Some(_)) => false,
        (Some(x), Some(y)) => ranked.key(v, x) >= ranked.key(v, y),
    }
}

impl StableSet {
    /// Wraps a list of matchings claimed to be stable. An unstable member is a
    /// contract violation.
    pub fn new(ranked: &RankedGraph, matchings: Vec<Matching>) -> Result<Self> {
        for (i, m) in matchings.iter().enumerate() {
            let blocking = verify_stable_ranked(ranked, m)?;
            if let Some((a, j)) = blocking.first() {
                return Err(Error::contract(format!(
                    "member {i} of the stable set is blocked by ({a}, {j})"
                )));
            }
        }
        let rural = rural_hospital(&matchings);
        let n_a = ranked.n_applicants();
        let n = ranked.n_vertices();
        let best_for = |range: std::ops::Range<usize>| {
            (0..matchings.len()).find(|&i| {
                matchings.iter().all(|other| {
                    range
                        .clone()
                        .all(|v| weakly_prefers(ranked, v, matchings[i].partner(v), other.partner(v)))
                })
            })
        };
        Ok(StableSet {
            applicant_optimal: best_for(0..n_a),
            firm_optimal: best_for(n_a..n),
            rural_hospital_consistent: rural,
            matchings,
        })
    }

    pub fn len(&self) -> usize {
        self.matchings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matchings.is_empty()
    }

    pub fn contains(&self, m: &Matching) -> bool {
        self.matchings.iter().any(|x| x == m)
    }
}

fn rural_hospital(matchings: &[Matching]) -> bool {
    match matchings.first() {
        None => true,
        Some(first) => {
            let mask = first.matched_mask();
            matchings.iter().all(|m| m.matched_mask() == mask)
        }
    }
}

/// Matched-agent set identical across all members.
pub fn rural_hospital_check(set: &StableSet) -> bool {
    rural_hospital(&set.matchings)
}

struct Enumerator<'a> {
    ranked: &'a RankedGraph,
    n_a: usize,
    partner: Vec<Option<usize>>,
    found: Vec<Matching>,
}

impl Enumerator<'_> {
    /// Whether `(a, f)` blocks given that both partners are final.
    fn blocks(&self, a: usize, f: usize) -> bool {
        self.partner[a] != Some(f)
            && self.ranked.prefers_to_partner(a, f, self.partner[a])
            && self.ranked.prefers_to_partner(f, a, self.partner[f])
    }

    fn recurse(&mut self, a: usize) {
        if a == self.n_a {
            let mut m = Matching::empty(self.n_a, self.ranked.n_vertices() - self.n_a);
            let pairs: Vec<(usize, usize)> = (0..self.n_a)
                .filter_map(|x| self.partner[x].map(|f| (x, f - self.n_a)))
                .collect();
            if !pairs.is_empty() {
                m = Matching::from_pairs(self.n_a, self.ranked.n_vertices() - self.n_a, &pairs)
                    .expect("enumerated pairs are disjoint");
            }
            if verify_stable_ranked(self.ranked, &m).expect("on-graph").is_empty() {
                self.found.push(m);
            }
            return;
        }
        let options: Vec<Option<usize>> = std::iter::once(None)
            .chain(
                self.ranked
                    .order(a)
                    .iter()
                    .copied()
                    .filter(|&f| self.partner[f].is_none())
                    .map(Some),
            )
            .collect();
        for opt in options {
            if let Some(f) = opt {
                self.partner[a] = Some(f);
                self.partner[f] = Some(a);
            }
            // Firms matched to decided applicants are final, so edges between
            // decided applicants and matched firms can be checked now.
            let prune = (0..=a).any(|x| {
                self.ranked
                    .order(x)
                    .iter()
                    .any(|&g| self.partner[g].is_some_and(|y| y <= a) && self.blocks(x, g))
            });
            if !prune {
                self.recurse(a + 1);
            }
            if let Some(f) = opt {
                self.partner[a] = None;
                self.partner[f] = None;
            }
        }
    }
}

/// All stable matchings, with a custom size cap.
pub fn enumerate_stable_matchings_with_limit<P: Preferences + Sync>(
    prefs: &P,
    graph: &InterviewGraph,
    limit: usize,
) -> Result<StableSet> {
    let agents = graph.n_vertices();
    if agents > limit {
        return Err(Error::SizeGuard { agents, limit });
    }
    let ranked = RankedGraph::new(prefs, graph);
    enumerate_ranked(&ranked, limit)
}

pub(crate) fn enumerate_ranked(ranked: &RankedGraph, limit: usize) -> Result<StableSet> {
    let agents = ranked.n_vertices();
    if agents > limit {
        return Err(Error::SizeGuard { agents, limit });
    }
    let mut e = Enumerator {
        ranked,
        n_a: ranked.n_applicants(),
        partner: vec![None; agents],
        found: Vec::new(),
    };
    e.recurse(0);
    StableSet::new(ranked, e.found)
}

/// All stable matchings of an instance with at most [`MAX_ORACLE_AGENTS`] agents.
pub fn enumerate_stable_matchings<P: Preferences + Sync>(prefs: &P, graph: &InterviewGraph) -> Result<StableSet> {
    enumerate_stable_matchings_with_limit(prefs, graph, MAX_ORACLE_AGENTS)
}

/// Availability by direct quantification over every stable matching.
pub fn available_in_set(ranked: &RankedGraph, set: &StableSet, candidate: usize, beneficiary: usize) -> Result<bool> {
    if !ranked.is_edge(candidate, beneficiary) {
        return Err(Error::domain(format!(
            "{candidate} and {beneficiary} are not neighbours"
        )));
    }
    Ok(set
        .matchings
        .iter()
        .all(|m| weakly_prefers(ranked, candidate, Some(beneficiary), m.partner(candidate))))
}

pub fn available_bruteforce<P: Preferences + Sync>(
    prefs: &P,
    graph: &InterviewGraph,
    candidate: usize,
    beneficiary: usize,
) -> Result<bool> {
    let ranked = RankedGraph::new(prefs, graph);
    let set = enumerate_ranked(&ranked, MAX_ORACLE_AGENTS)?;
    available_in_set(&ranked, &set, candidate, beneficiary)
}
