//! Deferred acceptance, stability checks, availability and interim blocking.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::InterviewGraph;
use crate::market::MarketInstance;
pub use crate::market::Side;
use crate::prefs::{PrefKey, Preferences};

/// A partial one-to-one matching on global vertex ids.
#[derive(Clone, Debug, Eq)]
pub struct Matching {
    n_applicants: usize,
    partner: Vec<Option<usize>>,
    proposer: Option<Side>,
}

impl PartialEq for Matching {
    fn eq(&self, other: &Self) -> bool {
        self.n_applicants == other.n_applicants && self.partner == other.partner
    }
}

impl Matching {
    pub fn empty(n_applicants: usize, n_firms: usize) -> Self {
        Matching {
            n_applicants,
            partner: vec![None; n_applicants + n_firms],
            proposer: None,
        }
    }

    /// From `(applicant, firm)` local pairs.
    pub fn from_pairs(n_applicants: usize, n_firms: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut m = Matching::empty(n_applicants, n_firms);
        for &(a, j) in pairs {
            if a >= n_applicants || j >= n_firms {
                return Err(Error::domain(format!("pair ({a}, {j}) out of range")));
            }
            let f = n_applicants + j;
            if m.partner[a].is_some() || m.partner[f].is_some() {
                return Err(Error::contract(format!(
                    "pair ({a}, {j}) reuses a matched agent"
                )));
            }
            m.partner[a] = Some(f);
            m.partner[f] = Some(a);
        }
        Ok(m)
    }

    pub fn n_applicants(&self) -> usize {
        self.n_applicants
    }

    pub fn n_firms(&self) -> usize {
        self.partner.len() - self.n_applicants
    }

    pub fn proposer(&self) -> Option<Side> {
        self.proposer
    }

    pub fn partner(&self, v: usize) -> Option<usize> {
        self.partner[v]
    }

    pub fn partners(&self) -> &[Option<usize>] {
        &self.partner
    }

    /// Matched pairs as `(applicant, firm)` local indices, ascending.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        (0..self.n_applicants)
            .filter_map(|a| self.partner[a].map(|f| (a, f - self.n_applicants)))
            .collect()
    }

    pub fn unmatched_applicants(&self) -> usize {
        self.partner[..self.n_applicants].iter().filter(|p| p.is_none()).count()
    }

    pub fn unmatched_firms(&self) -> usize {
        self.partner[self.n_applicants..].iter().filter(|p| p.is_none()).count()
    }

    /// Set of matched vertices as a mask.
    pub fn matched_mask(&self) -> Vec<bool> {
        self.partner.iter().map(Option::is_some).collect()
    }
}

/// A graph with each vertex's strict preference keys over its neighbours.
#[derive(Clone, Debug)]
pub struct RankedGraph {
    n_applicants: usize,
    adj: Vec<Vec<usize>>,
    /// `keys[v][k]` is `v`'s key for `adj[v][k]`.
    keys: Vec<Vec<PrefKey>>,
    /// Neighbours, most preferred first.
    order: Vec<Vec<usize>>,
}

impl RankedGraph {
    pub fn new<P: Preferences + Sync>(prefs: &P, graph: &InterviewGraph) -> Self {
        let n = graph.n_vertices();
        let rows: Vec<(Vec<PrefKey>, Vec<usize>)> = (0..n)
            .into_par_iter()
            .map(|v| {
                let nb = graph.neighbors(v);
                let keys: Vec<PrefKey> = nb.iter().map(|&u| prefs.key(v, u)).collect();
                let mut idx: Vec<usize> = (0..nb.len()).collect();
                idx.sort_by(|&x, &y| keys[y].cmp(&keys[x]));
                (keys, idx.into_iter().map(|k| nb[k]).collect())
            })
            .collect();
        let (keys, order) = rows.into_iter().unzip();
        RankedGraph {
            n_applicants: graph.n_applicants(),
            adj: (0..n).map(|v| graph.neighbors(v).to_vec()).collect(),
            keys,
            order,
        }
    }

    pub fn n_applicants(&self) -> usize {
        self.n_applicants
    }

    pub fn n_vertices(&self) -> usize {
        self.adj.len()
    }

    /// Neighbours of `v`, most preferred first.
    pub fn order(&self, v: usize) -> &[usize] {
        &self.order[v]
    }

    pub fn is_edge(&self, u: usize, v: usize) -> bool {
        self.adj[u].binary_search(&v).is_ok()
    }

    /// `v`'s key for neighbour `u`.
    pub fn key(&self, v: usize, u: usize) -> Option<PrefKey> {
        self.adj[v].binary_search(&u).ok().map(|k| self.keys[v][k])
    }

    /// Whether `v` strictly prefers neighbour `u` to its current partner (or to being alone).
    pub fn prefers_to_partner(&self, v: usize, u: usize, partner: Option<usize>) -> bool {
        match partner {
            None => true,
            Some(p) => self.key(v, u) > self.key(v, p),
        }
    }

    fn side_vertices(&self, side: Side) -> std::ops::Range<usize> {
        match side {
            Side::Applicant => 0..self.n_applicants,
            Side::Firm => self.n_applicants..self.adj.len(),
        }
    }
}

/// Order in which free proposers are served. The outcome does not depend on it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProposalOrder {
    LowestIdFirst,
    HighestIdFirst,
}

/// Deferred acceptance on a ranked graph.
pub fn deferred_acceptance_ranked(ranked: &RankedGraph, side: Side, order: ProposalOrder) -> Matching {
    let n = ranked.n_vertices();
    let mut partner: Vec<Option<usize>> = vec![None; n];
    let mut next = vec![0usize; n];
    let proposers = ranked.side_vertices(side);
    let mut low: BinaryHeap<Reverse<usize>> = BinaryHeap::new();
    let mut high: BinaryHeap<usize> = BinaryHeap::new();
    let push = |v: usize, low: &mut BinaryHeap<Reverse<usize>>, high: &mut BinaryHeap<usize>| match order {
        ProposalOrder::LowestIdFirst => low.push(Reverse(v)),
        ProposalOrder::HighestIdFirst => high.push(v),
    };
    for p in proposers {
        push(p, &mut low, &mut high);
    }
    loop {
        let p = match order {
            ProposalOrder::LowestIdFirst => low.pop().map(|Reverse(v)| v),
            ProposalOrder::HighestIdFirst => high.pop(),
        };
        let Some(p) = p else { break };
        let list = ranked.order(p);
        while next[p] < list.len() {
            let r = list[next[p]];
            next[p] += 1;
            match partner[r] {
                None => {
                    partner[r] = Some(p);
                    partner[p] = Some(r);
                    break;
                }
                Some(h) if ranked.key(r, p) > ranked.key(r, h) => {
                    partner[h] = None;
                    partner[r] = Some(p);
                    partner[p] = Some(r);
                    push(h, &mut low, &mut high);
                    break;
                }
                Some(_) => {}
            }
        }
    }
    Matching {
        n_applicants: ranked.n_applicants,
        partner,
        proposer: Some(side),
    }
}

/// Proposing-side-optimal stable matching on `graph` under `prefs`.
pub fn deferred_acceptance<P: Preferences + Sync>(prefs: &P, graph: &InterviewGraph, side: Side) -> Matching {
    deferred_acceptance_ranked(&RankedGraph::new(prefs, graph), side, ProposalOrder::LowestIdFirst)
}

fn check_on_graph(ranked: &RankedGraph, m: &Matching) -> Result<()> {
    if m.partner.len() != ranked.n_vertices() || m.n_applicants != ranked.n_applicants {
        return Err(Error::contract("matching and graph have different agent sets"));
    }
    for a in 0..m.n_applicants {
        if let Some(f) = m.partner[a] {
            if m.partner[f] != Some(a) {
                return Err(Error::contract(format!("partner map is inconsistent at {a}")));
            }
            if !ranked.is_edge(a, f) {
                return Err(Error::contract(format!(
                    "matched pair ({a}, {}) is not an edge of the graph",
                    f - m.n_applicants
                )));
            }
        }
    }
    for f in m.n_applicants..m.partner.len() {
        if let Some(a) = m.partner[f] {
            if m.partner[a] != Some(f) {
                return Err(Error::contract(format!("partner map is inconsistent at {f}")));
            }
        }
    }
    Ok(())
}

/// All graph edges `(a, j)` (local indices) that block `m`. Empty iff stable.
pub fn verify_stable_ranked(ranked: &RankedGraph, m: &Matching) -> Result<Vec<(usize, usize)>> {
    check_on_graph(ranked, m)?;
    let mut out = Vec::new();
    for a in 0..ranked.n_applicants {
        for &f in &ranked.adj[a] {
            if m.partner[a] == Some(f) {
                continue;
            }
            if ranked.prefers_to_partner(a, f, m.partner[a])
                && ranked.prefers_to_partner(f, a, m.partner[f])
            {
                out.push((a, f - ranked.n_applicants));
            }
        }
    }
    Ok(out)
}

pub fn verify_stable<P: Preferences + Sync>(
    prefs: &P,
    graph: &InterviewGraph,
    m: &Matching,
) -> Result<Vec<(usize, usize)>> {
    verify_stable_ranked(&RankedGraph::new(prefs, graph), m)
}

/// 1-based rank of `agent`'s partner among its neighbours; `None` when unmatched.
pub fn side_rank(ranked: &RankedGraph, m: &Matching, agent: usize) -> Option<usize> {
    let p = m.partner[agent]?;
    ranked.order(agent).iter().position(|&u| u == p).map(|r| r + 1)
}

/// Both extreme stable matchings, enough to decide availability.
#[derive(Clone, Debug)]
pub struct Availability {
    pub applicant_optimal: Matching,
    pub firm_optimal: Matching,
}

impl Availability {
    pub fn new(ranked: &RankedGraph) -> Self {
        Availability {
            applicant_optimal: deferred_acceptance_ranked(ranked, Side::Applicant, ProposalOrder::LowestIdFirst),
            firm_optimal: deferred_acceptance_ranked(ranked, Side::Firm, ProposalOrder::LowestIdFirst),
        }
    }

    /// Whether `candidate` weakly prefers `beneficiary` to its partner in every
    /// stable matching. Compared against the candidate's best stable partner.
    pub fn available(&self, ranked: &RankedGraph, candidate: usize, beneficiary: usize) -> Result<bool> {
        if candidate >= ranked.n_vertices() || !ranked.is_edge(candidate, beneficiary) {
            return Err(Error::domain(format!(
                "availability needs neighbours, {candidate} and {beneficiary} are not adjacent"
            )));
        }
        let best = if candidate < ranked.n_applicants {
            &self.applicant_optimal
        } else {
            &self.firm_optimal
        };
        Ok(match best.partner[candidate] {
            None => true,
            Some(p) => ranked.key(candidate, beneficiary) >= ranked.key(candidate, p),
        })
    }
}

pub fn available<P: Preferences + Sync>(
    prefs: &P,
    graph: &InterviewGraph,
    candidate: usize,
    beneficiary: usize,
) -> Result<bool> {
    let ranked = RankedGraph::new(prefs, graph);
    Availability::new(&ranked).available(&ranked, candidate, beneficiary)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockingPair {
    pub applicant: usize,
    pub firm: usize,
    pub applicant_gain: f64,
    pub firm_gain: f64,
    pub interviewed: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct BlockingReport {
    pub pairs: Vec<BlockingPair>,
    pub applicants_blocked: usize,
    pub firms_blocked: usize,
}

impl BlockingReport {
    pub fn is_perfect_interim_stable(&self) -> bool {
        self.pairs.is_empty()
    }

    fn from_pairs(pairs: Vec<BlockingPair>, n_firms: usize) -> Self {
        let mut firms = vec![false; n_firms];
        let mut apps = 0;
        let mut last = None;
        for p in &pairs {
            if last != Some(p.applicant) {
                apps += 1;
                last = Some(p.applicant);
            }
            firms[p.firm] = true;
        }
        BlockingReport {
            applicants_blocked: apps,
            firms_blocked: firms.iter().filter(|&&x| x).count(),
            pairs,
        }
    }
}

pub fn is_perfect_interim_stable(report: &BlockingReport) -> bool {
    report.is_perfect_interim_stable()
}

#[derive(Clone, Debug, PartialEq)]
pub struct InterimOptions {
    /// Count pairs in which both agents are unmatched.
    pub include_unmatched_pairs: bool,
    /// Restrict the scan to applicants flagged `true`.
    pub applicant_filter: Option<Vec<bool>>,
}

impl Default for InterimOptions {
    fn default() -> Self {
        InterimOptions {
            include_unmatched_pairs: true,
            applicant_filter: None,
        }
    }
}

/// An instance together with its interview graph and post-interview ranking.
pub struct MarketGraph<'a> {
    pub inst: &'a MarketInstance,
    pub graph: &'a InterviewGraph,
    pub ranked: RankedGraph,
}

impl<'a> MarketGraph<'a> {
    pub fn new(inst: &'a MarketInstance, graph: &'a InterviewGraph) -> Result<Self> {
        if graph.n_applicants() != inst.n_applicants() || graph.n_firms() != inst.n_firms() {
            return Err(Error::domain("graph and market have different agent sets"));
        }
        Ok(MarketGraph {
            inst,
            graph,
            ranked: RankedGraph::new(inst, graph),
        })
    }

    pub fn deferred_acceptance(&self, side: Side) -> Matching {
        deferred_acceptance_ranked(&self.ranked, side, ProposalOrder::LowestIdFirst)
    }

    pub fn verify_stable(&self, m: &Matching) -> Result<Vec<(usize, usize)>> {
        verify_stable_ranked(&self.ranked, m)
    }

    /// Interim blocking pairs over all applicant-firm pairs.
    ///
    /// Rejects a matching that is unstable on the graph, quoting a blocking edge.
    pub fn interim_blocking_report(&self, m: &Matching, opts: &InterimOptions) -> Result<BlockingReport> {
        let blocking = self.verify_stable(m)?;
        if let Some(&(a, j)) = blocking.first() {
            return Err(Error::contract(format!(
                "matching is not stable on the interview graph: ({a}, {j}) blocks it"
            )));
        }
        let inst = self.inst;
        let n_a = inst.n_applicants();
        let n_j = inst.n_firms();
        let firm_current: Vec<Option<PrefKey>> = (0..n_j)
            .map(|j| {
                let f = n_a + j;
                m.partner[f].map(|a| self.ranked.key(f, a).expect("matched on an edge"))
            })
            .collect();
        // No pre-interview utility can exceed this when the pre distribution is bounded.
        let pre_ceiling = inst.config().pre_dist.support_max().map(|mb| {
            let top_value = (0..n_j)
                .map(|j| inst.value(n_a + j).expect("firm id"))
                .fold(f64::NEG_INFINITY, f64::max);
            top_value + mb
        });

        let rows: Vec<Vec<BlockingPair>> = (0..n_a)
            .into_par_iter()
            .map(|a| {
                if let Some(filter) = &opts.applicant_filter {
                    if !filter[a] {
                        return Vec::new();
                    }
                }
                let mine = m.partner[a].map(|f| self.ranked.key(a, f).expect("matched on an edge"));
                if let (Some(k), Some(ceiling)) = (mine, pre_ceiling) {
                    // Edges cannot block a stable matching, and no non-edge reaches the ceiling.
                    if k.utility > ceiling {
                        return Vec::new();
                    }
                }
                let mut row = Vec::new();
                for j in 0..n_j {
                    let f = n_a + j;
                    if m.partner[a] == Some(f) {
                        continue;
                    }
                    if mine.is_none() && firm_current[j].is_none() && !opts.include_unmatched_pairs {
                        continue;
                    }
                    let edge = self.ranked.is_edge(a, f);
                    let ka = if edge {
                        self.ranked.key(a, f).expect("edge")
                    } else {
                        inst.pre_key_unchecked(a, j, Side::Applicant)
                    };
                    if mine.is_some_and(|k| ka <= k) {
                        continue;
                    }
                    let kj = if edge {
                        self.ranked.key(f, a).expect("edge")
                    } else {
                        inst.pre_key_unchecked(a, j, Side::Firm)
                    };
                    if firm_current[j].is_some_and(|k| kj <= k) {
                        continue;
                    }
                    row.push(BlockingPair {
                        applicant: a,
                        firm: j,
                        applicant_gain: ka.utility - mine.map_or(f64::NEG_INFINITY, |k| k.utility),
                        firm_gain: kj.utility - firm_current[j].map_or(f64::NEG_INFINITY, |k| k.utility),
                        interviewed: edge,
                    });
                }
                row
            })
            .collect();
        Ok(BlockingReport::from_pairs(rows.into_iter().flatten().collect(), n_j))
    }

    /// Applicants with no available firm among interviewed firms whose
    /// post-interview score is non-negative, and whether removing them leaves
    /// a perfect interim stable market.
    pub fn almost_stable_witness(&self) -> Result<Witness> {
        let inst = self.inst;
        let n_a = inst.n_applicants();
        let avail = Availability::new(&self.ranked);
        let mut members = Vec::new();
        for a in 0..n_a {
            let mut ok = false;
            for &f in self.graph.neighbors(a) {
                let j = f - n_a;
                if inst.a_unchecked(a, j, Side::Applicant) >= 0.0 && avail.available(&self.ranked, f, a)? {
                    ok = true;
                    break;
                }
            }
            if !ok {
                members.push(a);
            }
        }
        let mut keep = vec![true; self.graph.n_vertices()];
        for &a in &members {
            keep[a] = false;
        }
        let sub = self.graph.induced_subgraph(&keep);
        let sub_mg = MarketGraph::new(inst, &sub)?;
        let m = sub_mg.deferred_acceptance(Side::Applicant);
        let report = sub_mg.interim_blocking_report(
            &m,
            &InterimOptions {
                include_unmatched_pairs: true,
                applicant_filter: Some(keep[..n_a].to_vec()),
            },
        )?;
        Ok(Witness {
            members,
            verified: report.is_perfect_interim_stable(),
        })
    }

    pub fn side_rank(&self, m: &Matching, agent: usize) -> Option<usize> {
        side_rank(&self.ranked, m, agent)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Witness {
    pub members: Vec<usize>,
    pub verified: bool,
}

impl Witness {
    /// `|witness| <= epsilon * n_applicants`.
    pub fn is_epsilon_almost_stable(&self, epsilon: f64, n_applicants: usize) -> bool {
        self.verified && self.members.len() as f64 <= epsilon * n_applicants as f64
    }
}

pub fn interim_blocking_report(
    inst: &MarketInstance,
    graph: &InterviewGraph,
    m: &Matching,
) -> Result<BlockingReport> {
    MarketGraph::new(inst, graph)?.interim_blocking_report(m, &InterimOptions::default())
}

pub fn almost_stable_witness(inst: &MarketInstance, graph: &InterviewGraph) -> Result<Witness> {
    MarketGraph::new(inst, graph)?.almost_stable_witness()
}
