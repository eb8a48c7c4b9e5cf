//! Randomised cross-check batteries between fast paths and the oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{available_in_set, enumerate_ranked, StableSet};
use crate::error::Result;
use crate::graph::InterviewGraph;
use crate::market::{stream::mix_words, MarketConfig, MarketInstance, ScoreDistribution};
use crate::matching::{
    deferred_acceptance_ranked, Availability, InterimOptions, MarketGraph, Matching, ProposalOrder,
    RankedGraph, Side,
};
use crate::prefs::PrefKey;
use crate::signaling::{build_interview_graph, Mechanism};
use crate::treealg::{RootedPrefTree, TreeShape};

/// Summary of one battery run.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct BatteryOutcome {
    pub name: String,
    pub instances: usize,
    pub checks: usize,
    pub violations: usize,
    /// Description of the first violation, in instance order.
    pub first_violation: Option<String>,
}

impl BatteryOutcome {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    fn merge(name: &str, parts: Vec<(usize, Vec<String>)>) -> Self {
        let mut out = BatteryOutcome {
            name: name.to_string(),
            instances: parts.len(),
            ..Default::default()
        };
        for (checks, bad) in parts {
            out.checks += checks;
            out.violations += bad.len();
            if out.first_violation.is_none() {
                out.first_violation = bad.into_iter().next();
            }
        }
        out
    }
}

/// A random market plus a random interview graph on it.
#[derive(Clone, Debug)]
pub struct SmallInstance {
    pub market: MarketInstance,
    pub graph: InterviewGraph,
}

fn instance_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_words(&[seed, index as u64]))
}

/// Random sizes in `1..=max_side`, edge density in `[0.2, 0.9]`, continuous scores.
pub fn random_small_instance(seed: u64, index: usize, min_side: usize, max_side: usize) -> SmallInstance {
    let mut rng = instance_rng(seed, index);
    let n_a = rng.random_range(min_side..=max_side);
    let n_j = rng.random_range(min_side..=max_side);
    let density: f64 = rng.random_range(0.2..0.9);
    let cfg = MarketConfig::new(
        n_a,
        n_j,
        ScoreDistribution::normal(0.0, 1.0),
        ScoreDistribution::uniform(-1.0, 1.0),
        rng.random(),
    );
    let market = MarketInstance::sample(cfg).expect("valid config");
    let mut edges = Vec::new();
    for a in 0..n_a {
        for j in 0..n_j {
            if rng.random_bool(density) {
                edges.push((a, j));
            }
        }
    }
    let graph = InterviewGraph::from_edges(n_a, n_j, &edges).expect("in range");
    SmallInstance { market, graph }
}

fn key_of(ranked: &RankedGraph, v: usize, p: Option<usize>) -> Option<PrefKey> {
    p.map(|p| ranked.key(v, p).expect("partner is a neighbour"))
}

/// DA stability, side-optimality, Rural Hospital and availability against
/// full enumeration.
pub fn oracle_equivalence_battery(instances: usize, max_side: usize, seed: u64) -> Result<BatteryOutcome> {
    let parts: Result<Vec<(usize, Vec<String>)>> = (0..instances)
        .into_par_iter()
        .map(|idx| {
            let inst = random_small_instance(seed, idx, 1, max_side);
            let ranked = RankedGraph::new(&inst.market, &inst.graph);
            let set = enumerate_ranked(&ranked, 2 * max_side.max(1))?;
            let mut checks = 0;
            let mut bad = Vec::new();
            let mut check = |ok: bool, what: String| {
                checks += 1;
                if !ok {
                    bad.push(format!("instance {idx}: {what}"));
                }
            };
            let da_a = deferred_acceptance_ranked(&ranked, Side::Applicant, ProposalOrder::LowestIdFirst);
            let da_f = deferred_acceptance_ranked(&ranked, Side::Firm, ProposalOrder::LowestIdFirst);
            let da_a_rev = deferred_acceptance_ranked(&ranked, Side::Applicant, ProposalOrder::HighestIdFirst);
            check(da_a == da_a_rev, "proposal order changed the outcome".into());
            check(set.contains(&da_a), "applicant-proposing DA is not stable".into());
            check(set.contains(&da_f), "firm-proposing DA is not stable".into());
            check(set.rural_hospital_consistent, "matched sets differ across stable matchings".into());
            let n_a = ranked.n_applicants();
            for m in &set.matchings {
                for v in 0..ranked.n_vertices() {
                    let best = if v < n_a { &da_a } else { &da_f };
                    check(
                        key_of(&ranked, v, best.partner(v)) >= key_of(&ranked, v, m.partner(v)),
                        format!("agent {v} does better outside its side-optimal matching"),
                    );
                }
            }
            let avail = Availability::new(&ranked);
            for (a, j) in inst.graph.edges() {
                let f = n_a + j;
                for (c, b) in [(a, f), (f, a)] {
                    let fast = avail.available(&ranked, c, b)?;
                    let slow = available_in_set(&ranked, &set, c, b)?;
                    check(fast == slow, format!("availability of {c} to {b}: fast {fast}, oracle {slow}"));
                }
            }
            Ok((checks, bad))
        })
        .collect();
    Ok(BatteryOutcome::merge("oracle-equivalence", parts?))
}

/// Unique stable matching on trees, equal to proposal passing and to DA, and
/// root availability equal to proposing to the root.
pub fn random_tree_battery(trees: usize, max_nodes: usize, seed: u64) -> Result<BatteryOutcome> {
    let parts: Result<Vec<(usize, Vec<String>)>> = (0..trees)
        .into_par_iter()
        .map(|idx| {
            let mut rng = instance_rng(seed, idx);
            let n = rng.random_range(1..=max_nodes);
            let shape = TreeShape::random_recursive(n, &mut rng);
            let tree = RootedPrefTree::random_prefs(shape, &mut rng);
            let tm = tree.to_market();
            let ranked = RankedGraph::new(&tm.prefs, &tm.graph);
            let set = enumerate_ranked(&ranked, max_nodes)?;
            let trace = tree.proposal_passing();
            let mut pairs: Vec<(usize, usize)> = trace
                .pairs()
                .into_iter()
                .map(|(u, v)| {
                    let (x, y) = (tm.vertex_of[u], tm.vertex_of[v]);
                    let (a, f) = if x < y { (x, y) } else { (y, x) };
                    (a, f - tm.graph.n_applicants())
                })
                .collect();
            pairs.sort_unstable();
            let pp = Matching::from_pairs(tm.graph.n_applicants(), tm.graph.n_firms(), &pairs)?;
            let da_a = deferred_acceptance_ranked(&ranked, Side::Applicant, ProposalOrder::LowestIdFirst);
            let da_f = deferred_acceptance_ranked(&ranked, Side::Firm, ProposalOrder::LowestIdFirst);
            let mut checks = 0;
            let mut bad = Vec::new();
            let mut check = |ok: bool, what: &str| {
                checks += 1;
                if !ok {
                    bad.push(format!("tree {idx} ({n} nodes): {what}"));
                }
            };
            check(set.len() == 1, "stable matching is not unique");
            check(set.matchings.first() == Some(&pp), "proposal passing differs from enumeration");
            check(da_a == pp, "applicant-proposing DA differs from proposal passing");
            check(da_f == pp, "firm-proposing DA differs from proposal passing");
            let root = tm.vertex_of[0];
            for &c in tree.shape().children(0) {
                let v = tm.vertex_of[c];
                let avail = available_in_set(&ranked, &set, v, root)?;
                check(avail == trace.proposes[c], "root availability differs from proposing");
            }
            Ok((checks, bad))
        })
        .collect();
    Ok(BatteryOutcome::merge("tree-uniqueness", parts?))
}

/// Truncation monotonicity and availability transfer on m-hop neighbourhoods.
///
/// With `brute_force`, availability comes from enumeration (instances must
/// then be at most 12 agents); otherwise from the side-optimal matchings.
pub fn truncation_battery(
    instances: usize,
    max_vertices: usize,
    seed: u64,
    brute_force: bool,
) -> Result<BatteryOutcome> {
    let max_side = (max_vertices / 2).max(1);
    let parts: Result<Vec<(usize, Vec<String>)>> = (0..instances)
        .into_par_iter()
        .map(|idx| {
            let inst = random_small_instance(seed, idx, 1, max_side);
            let g = &inst.graph;
            let ranked = RankedGraph::new(&inst.market, g);
            let full = [
                deferred_acceptance_ranked(&ranked, Side::Applicant, ProposalOrder::LowestIdFirst),
                deferred_acceptance_ranked(&ranked, Side::Firm, ProposalOrder::LowestIdFirst),
            ];
            let full_avail = Availability::new(&ranked);
            let full_set = if brute_force { Some(enumerate_ranked(&ranked, max_vertices)?) } else { None };
            let avail_in = |r: &RankedGraph, a: &Availability, s: &Option<StableSet>, c: usize, b: usize| match s {
                Some(s) => available_in_set(r, s, c, b),
                None => a.available(r, c, b),
            };
            let mut checks = 0;
            let mut bad = Vec::new();
            for root in 0..g.n_vertices() {
                for m in 1..=3usize {
                    let sub = g.truncate_m_hop(root, m)?.into_graph();
                    let sub_ranked = RankedGraph::new(&inst.market, &sub);
                    for (k, side) in [Side::Applicant, Side::Firm].into_iter().enumerate() {
                        let local = deferred_acceptance_ranked(&sub_ranked, side, ProposalOrder::LowestIdFirst);
                        let here = key_of(&ranked, root, local.partner(root));
                        let there = key_of(&ranked, root, full[k].partner(root));
                        let ok = if m % 2 == 1 { here >= there } else { here <= there };
                        checks += 1;
                        if !ok {
                            bad.push(format!(
                                "instance {idx}, root {root}, m {m}, {side:?}-proposing: truncation moved the root the wrong way"
                            ));
                        }
                    }
                    let sub_avail = Availability::new(&sub_ranked);
                    let sub_set = if brute_force { Some(enumerate_ranked(&sub_ranked, max_vertices)?) } else { None };
                    for &i in g.neighbors(root) {
                        let in_sub = avail_in(&sub_ranked, &sub_avail, &sub_set, i, root)?;
                        let in_full = avail_in(&ranked, &full_avail, &full_set, i, root)?;
                        let ok = if m % 2 == 0 { !in_sub || in_full } else { in_sub || !in_full };
                        checks += 1;
                        if !ok {
                            bad.push(format!(
                                "instance {idx}, root {root}, m {m}: availability of {i} did not transfer"
                            ));
                        }
                    }
                }
            }
            Ok((checks, bad))
        })
        .collect();
    let name = if brute_force { "truncation-bruteforce" } else { "truncation" };
    Ok(BatteryOutcome::merge(name, parts?))
}

/// On applicant-signaling graphs: an applicant with an available interviewed
/// firm of non-negative post score is in no interim blocking pair of any
/// stable matching, and neither is one matched within its top `|N+(a)|`.
pub fn applicant_signaling_battery(instances: usize, max_side: usize, seed: u64) -> Result<BatteryOutcome> {
    let parts: Result<Vec<(usize, Vec<String>)>> = (0..instances)
        .into_par_iter()
        .map(|idx| {
            let mut rng = instance_rng(seed ^ 0xC2C3, idx);
            let n_a = rng.random_range(1..=max_side);
            let n_j = rng.random_range(1..=max_side);
            let d = rng.random_range(1..=n_j);
            let cfg = MarketConfig::new(
                n_a,
                n_j,
                ScoreDistribution::normal(0.0, 1.0),
                ScoreDistribution::uniform(-1.0, 1.0),
                rng.random(),
            );
            let market = MarketInstance::sample(cfg)?;
            let graph = build_interview_graph(&market, &Mechanism::ApplicantSide { d })?;
            let mg = MarketGraph::new(&market, &graph)?;
            let set = enumerate_ranked(&mg.ranked, 2 * max_side)?;
            let avail = Availability::new(&mg.ranked);
            let mut checks = 0;
            let mut bad = Vec::new();
            let positive: Vec<Vec<usize>> = (0..n_a)
                .map(|a| {
                    graph
                        .neighbors(a)
                        .iter()
                        .copied()
                        .filter(|&f| market.a_score(a, f).expect("opposite sides") >= 0.0)
                        .collect()
                })
                .collect();
            for m in &set.matchings {
                let report = mg.interim_blocking_report(m, &InterimOptions::default())?;
                let mut blocked = vec![false; n_a];
                for p in &report.pairs {
                    blocked[p.applicant] = true;
                }
                for a in 0..n_a {
                    let has_available = positive[a]
                        .iter()
                        .map(|&f| avail.available(&mg.ranked, f, a))
                        .collect::<Result<Vec<bool>>>()?
                        .into_iter()
                        .any(|x| x);
                    if has_available {
                        checks += 1;
                        if blocked[a] {
                            bad.push(format!("instance {idx}: applicant {a} has an available positive firm but blocks"));
                        }
                    }
                    let k = positive[a].len();
                    if let Some(rank) = mg.side_rank(m, a) {
                        if rank <= k {
                            checks += 1;
                            if blocked[a] {
                                bad.push(format!("instance {idx}: applicant {a} matched within its top {k} but blocks"));
                            }
                        }
                    }
                }
            }
            Ok((checks, bad))
        })
        .collect();
    Ok(BatteryOutcome::merge("applicant-signaling-shortcuts", parts?))
}
