//! The `matchlab` command line.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::error::{Error, Result};
use crate::experiments::{self, ScenarioConfig, Sweep};
use crate::market::{compute_q, p_nonneg};
use crate::market::{MarketConfig, MarketInstance, ScoreDistribution, Side, TierSpec};
use crate::matching::{InterimOptions, MarketGraph};
use crate::oracle::{
    applicant_signaling_battery, oracle_equivalence_battery, random_tree_battery, truncation_battery,
    BatteryOutcome,
};
use crate::signaling::{build_interview_graph, general_imbalance, target_tiers, Mechanism};
use crate::treealg::{
    self, fixed_point, iterate_composition, marginal_proposal_probabilities, monotone_envelope,
    regular_tree_shape, DegreeBounds,
};

#[derive(Debug, Parser)]
#[command(name = "matchlab", version, about = "Simulate interview signaling in two-sided matching markets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario and write one CSV row per trial.
    Simulate(ScenarioArgs),
    /// Run a scenario over a list of parameter values.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Parameter and values, e.g. `d=5,10,20` (d, n_applicants or n_firms).
        #[arg(long, value_name = "PARAM=V1,V2,..")]
        sweep: Option<String>,
    },
    /// Sample one market and report its graph, matching and stability.
    Inspect {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Write the interview graph as `applicant,firm` lines.
        #[arg(long, value_name = "PATH")]
        edges_out: Option<PathBuf>,
    },
    /// Message passing on regular trees and the 18-node worked example.
    TreeMp(TreeMpArgs),
    /// Solve `f_a(f_b(x)) = x` and report the regime.
    FixedPoint(FixedPointArgs),
    /// Cross-check the fast algorithms against exhaustive enumeration.
    OracleCheck(OracleArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct ScenarioArgs {
    /// Scenario JSON file; flags below override its values.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output file (standard output if absent).
    #[arg(long, value_name = "PATH")]
    pub output: Option<PathBuf>,
    /// Base seed.
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,
    /// Trials per sweep point.
    #[arg(long, value_name = "N")]
    pub trials: Option<usize>,
    /// Worker threads; results do not depend on it.
    #[arg(long, value_name = "K", env = "MATCHLAB_THREADS")]
    pub threads: Option<usize>,
    #[arg(long, value_name = "N")]
    pub n_applicants: Option<usize>,
    #[arg(long, value_name = "N")]
    pub n_firms: Option<usize>,
    /// Signals per agent.
    #[arg(long, value_name = "D")]
    pub d: Option<usize>,
    /// applicant, firm, both, multitier or restricted.
    #[arg(long, value_name = "KIND")]
    pub mechanism: Option<String>,
    /// Pre-interview score distribution, e.g. `normal:0,1`.
    #[arg(long, value_name = "SPEC")]
    pub dist_pre: Option<String>,
    /// Post-interview score distribution, e.g. `uniform:-1,1`.
    #[arg(long, value_name = "SPEC")]
    pub dist_post: Option<String>,
    /// Tier weights, lowest tier first: "a1,a2,..;b1,b2,..".
    #[arg(long, value_name = "A;B")]
    pub tiers: Option<String>,
    /// Almost-stability threshold as a fraction of applicants.
    #[arg(long, value_name = "EPS")]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct TreeMpArgs {
    /// Children per inner node of the regular tree (the root gets d + 1).
    #[arg(long, value_name = "D", default_value_t = 3)]
    pub d: usize,
    /// Tree depth.
    #[arg(long, value_name = "M", default_value_t = 4)]
    pub m: usize,
    /// Out-degree bounds at odd depths, `lo,hi`.
    #[arg(long, value_name = "LO,HI")]
    pub odd_bounds: Option<String>,
    /// Out-degree bounds at even depths, `lo,hi`.
    #[arg(long, value_name = "LO,HI")]
    pub even_bounds: Option<String>,
    /// Print proposal passing on the 18-node worked example instead.
    #[arg(long)]
    pub worked_example: bool,
    #[arg(long, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct FixedPointArgs {
    #[arg(long, value_name = "A")]
    pub a: u64,
    #[arg(long, value_name = "B")]
    pub b: u64,
    /// Tolerance for the contraction factor.
    #[arg(long, value_name = "EPS")]
    pub epsilon: Option<f64>,
    /// Also print `(f_a∘f_b)^m(1)`.
    #[arg(long, value_name = "M")]
    pub m: Option<usize>,
    #[arg(long, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    /// Random instances per battery.
    #[arg(long, value_name = "N", default_value_t = 500)]
    pub instances: usize,
    /// Largest side size of a random instance.
    #[arg(long, value_name = "N", default_value_t = 5)]
    pub max_agents: usize,
    #[arg(long, value_name = "U64", default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_name = "K", env = "MATCHLAB_THREADS")]
    pub threads: Option<usize>,
    #[arg(long, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

/// Parses `argv` and runs the command, returning the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with_io(argv, &mut stdout.lock(), &mut stderr.lock())
}

/// [`run`] with explicit streams.
pub fn run_with_io<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                1
            } else {
                let _ = write!(out, "{text}");
                0
            };
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if e.is_contract_violation() {
                2
            } else {
                1
            }
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    match cmd {
        Command::Simulate(s) => {
            let cfg = scenario(&s, None)?;
            run_and_write(&cfg, out, err)
        }
        Command::Sweep { scenario: s, sweep } => {
            let cfg = scenario(&s, sweep.as_deref())?;
            if cfg.sweep.is_none() {
                return Err(Error::config("sweep needs --sweep PARAM=V1,V2,.. or a `sweep` entry in --config"));
            }
            run_and_write(&cfg, out, err)
        }
        Command::Inspect { scenario: s, edges_out } => inspect(&scenario(&s, None)?, edges_out.as_deref(), out),
        Command::TreeMp(a) => tree_mp(&a, out),
        Command::FixedPoint(a) => fixed_point_cmd(&a, out),
        Command::OracleCheck(a) => oracle_check(&a, out),
    }
}

fn default_scenario() -> ScenarioConfig {
    ScenarioConfig::new(
        MarketConfig::new(
            1000,
            1000,
            ScoreDistribution::normal(0.0, 1.0),
            ScoreDistribution::uniform(-1.0, 1.0),
            0,
        ),
        Mechanism::ApplicantSide { d: 10 },
    )
}

fn parse_tiers(s: &str) -> Result<TierSpec> {
    let (a, b) = s
        .split_once(';')
        .ok_or_else(|| Error::config(format!("tiers `{s}` must look like \"a1,a2;b1,b2\"")))?;
    let side = |part: &str| -> Result<Vec<f64>> {
        let w = part
            .split(',')
            .map(|x| {
                x.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::config(format!("bad tier weight `{x}`: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let total: f64 = w.iter().sum();
        if w.iter().any(|x| !(x.is_finite() && *x > 0.0)) || total <= 0.0 {
            return Err(Error::config(format!("tier weights must be positive: `{part}`")));
        }
        Ok(w.iter().map(|x| x / total).collect())
    };
    Ok(TierSpec {
        applicant_fractions: side(a)?,
        firm_fractions: side(b)?,
    })
}

/// Builds the scenario from the optional file plus flag overrides.
pub fn scenario(s: &ScenarioArgs, sweep: Option<&str>) -> Result<ScenarioConfig> {
    let mut cfg = match &s.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::config(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", p.display())))?
        }
        None => default_scenario(),
    };
    if let Some(v) = s.seed {
        cfg.market.seed = v;
    }
    if let Some(v) = s.trials {
        cfg.trials = v;
    }
    if let Some(v) = s.threads {
        cfg.threads = Some(v);
    }
    if let Some(v) = s.n_applicants {
        cfg.market.n_applicants = v;
    }
    if let Some(v) = s.n_firms {
        cfg.market.n_firms = v;
    }
    if let Some(kind) = &s.mechanism {
        let d = s.d.unwrap_or(cfg.mechanism.d());
        cfg.mechanism = Mechanism::from_tag(kind, d)?;
    } else if let Some(d) = s.d {
        cfg.mechanism = cfg.mechanism.with_d(d);
    }
    if let Some(v) = &s.dist_pre {
        cfg.market.pre_dist = v.parse()?;
    }
    if let Some(v) = &s.dist_post {
        cfg.market.post_dist = v.parse()?;
    }
    if let Some(v) = &s.tiers {
        cfg.market.tiers = parse_tiers(v)?;
    }
    if let Some(v) = s.epsilon {
        cfg.epsilon = Some(v);
    }
    if let Some(v) = &s.output {
        cfg.output = Some(v.clone());
    }
    if let Some(v) = sweep {
        cfg.sweep = Some(v.parse::<Sweep>()?);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn with_output<F>(path: Option<&Path>, out: &mut dyn Write, f: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            f(&mut w)?;
            w.flush()?;
            Ok(())
        }
        None => f(out),
    }
}

fn run_and_write(cfg: &ScenarioConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let res = experiments::run_scenario(cfg)?;
    with_output(cfg.output.as_deref(), out, |w| experiments::write_csv(&res.records, w))?;
    if let Some(eps) = cfg.epsilon {
        let ok = res.almost_stable.iter().filter(|x| **x == Some(true)).count();
        writeln!(err, "almost stable (epsilon = {eps}): {ok}/{}", res.records.len())?;
    }
    for f in &res.failures {
        writeln!(err, "trial {} at sweep point {} (seed {}) failed: {}", f.trial, f.point, f.seed, f.error)?;
    }
    Ok(if res.failures.is_empty() { 0 } else { 1 })
}

fn inspect(cfg: &ScenarioConfig, edges_out: Option<&Path>, out: &mut dyn Write) -> Result<i32> {
    let market = cfg.market.clone();
    let inst = MarketInstance::sample(market.clone())?;
    let graph = build_interview_graph(&inst, &cfg.mechanism)?;
    let mg = MarketGraph::new(&inst, &graph)?;
    let m = mg.deferred_acceptance(cfg.proposing_side);
    mg.verify_stable(&m)?;
    let report = mg.interim_blocking_report(
        &m,
        &InterimOptions {
            include_unmatched_pairs: cfg.include_unmatched_pairs,
            applicant_filter: None,
        },
    )?;
    let witness = mg.almost_stable_witness()?;
    let targets = target_tiers(&market.tiers, market.n_applicants, market.n_firms);
    let imb = general_imbalance(&market.tiers, market.n_applicants, market.n_firms);
    let degrees: Vec<usize> = (0..graph.n_vertices()).map(|v| graph.degree(v)).collect();
    let n_a = inst.n_applicants();
    let mean = |s: &[usize]| {
        if s.is_empty() {
            0.0
        } else {
            s.iter().sum::<usize>() as f64 / s.len() as f64
        }
    };
    let summary = json!({
        "seed": market.seed,
        "n_applicants": n_a,
        "n_firms": inst.n_firms(),
        "mechanism": cfg.mechanism,
        "dist_pre": market.pre_dist.to_string(),
        "dist_post": market.post_dist.to_string(),
        "applicant_tier_sizes": inst.applicant_tier_sizes(),
        "firm_tier_sizes": inst.firm_tier_sizes(),
        "target_tiers": { "applicant": targets.applicant, "firm": targets.firm },
        "generally_imbalanced": imb.generally_imbalanced,
        "gamma": imb.gamma,
        "p": p_nonneg(&market.post_dist),
        "q": compute_q(&market.pre_dist, &market.post_dist).ok(),
        "edges": graph.n_edges(),
        "mean_applicant_degree": mean(&degrees[..n_a]),
        "mean_firm_degree": mean(&degrees[n_a..]),
        "tree_excess": graph.tree_excess(),
        "proposing_side": match cfg.proposing_side { Side::Applicant => "applicant", Side::Firm => "firm" },
        "matched_pairs": m.pairs().len(),
        "unmatched_applicants": m.unmatched_applicants(),
        "unmatched_firms": m.unmatched_firms(),
        "blocking_pairs": report.pairs.len(),
        "applicants_blocked": report.applicants_blocked,
        "firms_blocked": report.firms_blocked,
        "perfect_interim_stable": report.is_perfect_interim_stable(),
        "witness_size": witness.members.len(),
        "witness_verified": witness.verified,
    });
    with_output(cfg.output.as_deref(), out, |w| {
        serde_json::to_writer_pretty(&mut *w, &summary)?;
        writeln!(w)?;
        Ok(())
    })?;
    if let Some(p) = edges_out {
        std::fs::write(p, graph.edge_list_string())?;
    }
    Ok(0)
}

fn parse_pair(s: &str) -> Result<(f64, f64)> {
    let bad = || Error::config(format!("expected `lo,hi`, got `{s}`"));
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    let a = a.trim().parse::<f64>().map_err(|_| bad())?;
    let b = b.trim().parse::<f64>().map_err(|_| bad())?;
    Ok((a, b))
}

fn tree_mp(a: &TreeMpArgs, out: &mut dyn Write) -> Result<i32> {
    let mut text = String::new();
    if a.worked_example {
        let (tree, labels) = treealg::worked_example_tree();
        let trace = tree.proposal_passing();
        let proposers: Vec<&str> = tree
            .shape()
            .children(0)
            .iter()
            .filter(|&&c| trace.proposes[c])
            .map(|&c| labels[c])
            .collect();
        text.push_str(&format!("root proposers: {}\n", proposers.join(" ")));
        for (u, v) in trace.pairs() {
            text.push_str(&format!("{} - {}\n", labels[u], labels[v]));
        }
    } else {
        if a.m == 0 {
            return Err(Error::config("--m must be at least 1"));
        }
        let d = a.d;
        if (d as f64).powi(a.m as i32) > 2e6 {
            return Err(Error::config(format!("tree with d = {d} and m = {} is too large", a.m)));
        }
        let shape = regular_tree_shape(d + 1, d, a.m);
        let mu = marginal_proposal_probabilities(&shape, &[]);
        let dp = mu[1].expect("root has children");
        let mut it = 1.0;
        for _ in 1..a.m {
            it = treealg::f_d(d as f64, it);
        }
        text.push_str(&format!("nodes = {}\n", shape.len()));
        text.push_str(&format!("mu_dp = {dp:.12}\n"));
        text.push_str(&format!("mu_iterate = {it:.12}\n"));
        let bounds = match (&a.odd_bounds, &a.even_bounds) {
            (None, None) => DegreeBounds::uniform(d as f64),
            (o, e) => DegreeBounds::new(
                o.as_deref().map(parse_pair).transpose()?.unwrap_or((d as f64, d as f64)),
                e.as_deref().map(parse_pair).transpose()?.unwrap_or((d as f64, d as f64)),
            ),
        };
        let (lo, hi) = monotone_envelope(a.m, bounds)?;
        text.push_str(&format!("envelope = [{lo:.12}, {hi:.12}]\n"));
        text.push_str(&format!("g(d,d,m) = {:.12}\n", iterate_composition(d as f64, d as f64, a.m)));
    }
    with_output(a.output.as_deref(), out, |w| Ok(w.write_all(text.as_bytes())?))?;
    Ok(0)
}

fn fixed_point_cmd(a: &FixedPointArgs, out: &mut dyn Write) -> Result<i32> {
    if let Some(e) = a.epsilon {
        if !(e.is_finite() && e > 0.0) {
            return Err(Error::config(format!("--epsilon must be positive, got {e}")));
        }
    }
    let r = fixed_point(a.a, a.b, a.epsilon);
    let mut text = format!("x_star = {:.6}\nregime = {}\n", r.x_star, r.regime);
    if let Some(x) = r.asymptotic_x_star {
        text.push_str(&format!("asymptotic = {x:.6}\n"));
    }
    if let Some(g) = r.gamma_epsilon {
        text.push_str(&format!("gamma_epsilon = {g:.6}\n"));
    }
    if let Some(m) = a.m {
        text.push_str(&format!("g_m = {:.6}\n", iterate_composition(a.a as f64, a.b as f64, m)));
    }
    with_output(a.output.as_deref(), out, |w| Ok(w.write_all(text.as_bytes())?))?;
    Ok(0)
}

fn oracle_check(a: &OracleArgs, out: &mut dyn Write) -> Result<i32> {
    if a.max_agents == 0 || a.instances == 0 {
        return Err(Error::config("--instances and --max-agents must be positive"));
    }
    if 2 * a.max_agents > crate::oracle::MAX_ORACLE_AGENTS {
        return Err(Error::config(format!(
            "--max-agents {} exceeds the exhaustive-search limit of {} agents per side",
            a.max_agents,
            crate::oracle::MAX_ORACLE_AGENTS / 2
        )));
    }
    let work = || -> Result<Vec<BatteryOutcome>> {
        Ok(vec![
            oracle_equivalence_battery(a.instances, a.max_agents, a.seed)?,
            random_tree_battery(a.instances, 2 * a.max_agents + 2, a.seed)?,
            truncation_battery(a.instances, 2 * a.max_agents, a.seed, true)?,
            applicant_signaling_battery(a.instances, a.max_agents, a.seed)?,
        ])
    };
    let outcomes = match a.threads {
        Some(0) => return Err(Error::config("--threads must be at least 1")),
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::config(format!("cannot start {k} worker threads: {e}")))?
            .install(work)?,
        None => work()?,
    };
    let mut text = String::new();
    for o in &outcomes {
        text.push_str(&format!(
            "{} {}: {} instances, {} checks, {} violations\n",
            if o.passed() { "PASS" } else { "FAIL" },
            o.name,
            o.instances,
            o.checks,
            o.violations
        ));
        if let Some(v) = &o.first_violation {
            text.push_str(&format!("  first violation: {v}\n"));
        }
    }
    let all = outcomes.iter().all(BatteryOutcome::passed);
    with_output(a.output.as_deref(), out, |w| Ok(w.write_all(text.as_bytes())?))?;
    Ok(if all { 0 } else { 2 })
}
