//! Seeded scenario runs and their summaries.

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{stream::mix_words, MarketConfig, MarketInstance, Side};
use crate::matching::{InterimOptions, MarketGraph};
use crate::signaling::{build_interview_graph, Mechanism};

pub const CSV_HEADER: &str = "trial,seed,n_applicants,n_firms,d,mechanism,dist_pre,dist_post,applicants_blocked,firms_blocked,blocking_pairs,perfect_stable,witness_size,unmatched_applicants,unmatched_firms,mean_applicant_rank,runtime_ms";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    D,
    NApplicants,
    NFirms,
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepParam::D => "d",
            SweepParam::NApplicants => "n_applicants",
            SweepParam::NFirms => "n_firms",
        })
    }
}

impl FromStr for SweepParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().replace('-', "_").as_str() {
            "d" => Ok(SweepParam::D),
            "n_applicants" => Ok(SweepParam::NApplicants),
            "n_firms" => Ok(SweepParam::NFirms),
            other => Err(Error::config(format!(
                "unknown sweep parameter `{other}` (expected d, n_applicants or n_firms)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<usize>,
}

impl FromStr for Sweep {
    type Err = Error;
    /// `param=v1,v2,...`
    fn from_str(s: &str) -> Result<Self> {
        let (p, vals) = s
            .split_once('=')
            .ok_or_else(|| Error::config(format!("sweep `{s}` must look like PARAM=v1,v2,...")))?;
        let values = vals
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::config(format!("bad sweep value `{v}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Sweep {
            param: p.parse()?,
            values,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Interim blocking pairs and the counts derived from them.
    Blocking,
    /// The almost-stability witness set.
    Witness,
    /// Mean rank of matched applicants' partners.
    Rank,
}

fn all_metrics() -> Vec<Metric> {
    vec![Metric::Blocking, Metric::Witness, Metric::Rank]
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

fn applicant() -> Side {
    Side::Applicant
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub market: MarketConfig,
    pub mechanism: Mechanism,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    #[serde(default = "one")]
    pub trials: usize,
    #[serde(default = "all_metrics")]
    pub metrics: Vec<Metric>,
    #[serde(default = "applicant")]
    pub proposing_side: Side,
    /// Witness-size threshold, as a fraction of applicants, for almost stability.
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default = "yes")]
    pub include_unmatched_pairs: bool,
    #[serde(default)]
    pub threads: Option<usize>,
    /// Record wall-clock time per trial; off by default so output is reproducible.
    #[serde(default)]
    pub record_runtime: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn new(market: MarketConfig, mechanism: Mechanism) -> Self {
        ScenarioConfig {
            market,
            mechanism,
            sweep: None,
            trials: 1,
            metrics: all_metrics(),
            proposing_side: Side::Applicant,
            epsilon: None,
            include_unmatched_pairs: true,
            threads: None,
            record_runtime: false,
            output: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::config("trials must be at least 1"));
        }
        if self.threads == Some(0) {
            return Err(Error::config("threads must be at least 1"));
        }
        if let Some(e) = self.epsilon {
            if !(e.is_finite() && e >= 0.0) {
                return Err(Error::config(format!("epsilon must be non-negative, got {e}")));
            }
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(Error::config("sweep needs at least one value"));
            }
            if s.values.contains(&0) {
                return Err(Error::config(format!("sweep values for {} must be positive", s.param)));
            }
        }
        self.market.validate()?;
        if self.mechanism.d() == 0 {
            return Err(Error::config("the number of signals d must be at least 1"));
        }
        Ok(())
    }

    /// Sweep points as `(value, market, mechanism)`; a single point without a sweep.
    fn points(&self) -> Vec<(usize, MarketConfig, Mechanism)> {
        match &self.sweep {
            None => vec![(0, self.market.clone(), self.mechanism.clone())],
            Some(s) => s
                .values
                .iter()
                .map(|&v| {
                    let mut m = self.market.clone();
                    let mut mech = self.mechanism.clone();
                    match s.param {
                        SweepParam::D => mech = mech.with_d(v),
                        SweepParam::NApplicants => m.n_applicants = v,
                        SweepParam::NFirms => m.n_firms = v,
                    }
                    (v, m, mech)
                })
                .collect(),
        }
    }
}

/// One row of the CSV output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub n_applicants: usize,
    pub n_firms: usize,
    pub d: usize,
    pub mechanism: String,
    pub dist_pre: String,
    pub dist_post: String,
    pub applicants_blocked: usize,
    pub firms_blocked: usize,
    pub blocking_pairs: usize,
    pub perfect_stable: bool,
    pub witness_size: Option<usize>,
    pub unmatched_applicants: usize,
    pub unmatched_firms: usize,
    pub mean_applicant_rank: f64,
    pub runtime_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TrialFailure {
    pub point: usize,
    pub trial: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ScenarioOutput {
    /// Sorted by sweep point, then trial.
    pub records: Vec<TrialRecord>,
    pub failures: Vec<TrialFailure>,
    /// Trials whose verified witness is at most `epsilon * n_applicants`, per record.
    pub almost_stable: Vec<Option<bool>>,
}

/// Seed of one trial: a stable mix of base seed, sweep value and trial index.
pub fn trial_seed(base: u64, sweep_value: usize, trial: usize) -> u64 {
    mix_words(&[base, sweep_value as u64, trial as u64])
}

/// Runs the sample → signal → match → report pipeline once.
pub fn run_trial(
    cfg: &ScenarioConfig,
    market: &MarketConfig,
    mech: &Mechanism,
    trial: usize,
) -> Result<(TrialRecord, Option<bool>)> {
    let start = Instant::now();
    let inst = MarketInstance::sample(market.clone())?;
    let graph = build_interview_graph(&inst, mech)?;
    let mg = MarketGraph::new(&inst, &graph)?;
    let matching = mg.deferred_acceptance(cfg.proposing_side);
    let wants = |m: Metric| cfg.metrics.contains(&m);

    let (applicants_blocked, firms_blocked, blocking_pairs) = if wants(Metric::Blocking) {
        let r = mg.interim_blocking_report(
            &matching,
            &InterimOptions {
                include_unmatched_pairs: cfg.include_unmatched_pairs,
                applicant_filter: None,
            },
        )?;
        (r.applicants_blocked, r.firms_blocked, r.pairs.len())
    } else {
        (0, 0, 0)
    };
    let witness = if wants(Metric::Witness) {
        Some(mg.almost_stable_witness()?)
    } else {
        None
    };
    let mean_applicant_rank = if wants(Metric::Rank) {
        let ranks: Vec<usize> = (0..inst.n_applicants())
            .filter_map(|a| mg.side_rank(&matching, a))
            .collect();
        if ranks.is_empty() {
            f64::NAN
        } else {
            ranks.iter().sum::<usize>() as f64 / ranks.len() as f64
        }
    } else {
        f64::NAN
    };
    let almost = match (&witness, cfg.epsilon) {
        (Some(w), Some(eps)) => Some(w.is_epsilon_almost_stable(eps, inst.n_applicants())),
        _ => None,
    };
    let runtime_ms = if cfg.record_runtime {
        start.elapsed().as_millis() as u64
    } else {
        0
    };
    Ok((
        TrialRecord {
            trial,
            seed: market.seed,
            n_applicants: market.n_applicants,
            n_firms: market.n_firms,
            d: mech.d(),
            mechanism: mech.tag().to_string(),
            dist_pre: market.pre_dist.to_string(),
            dist_post: market.post_dist.to_string(),
            applicants_blocked,
            firms_blocked,
            blocking_pairs,
            perfect_stable: blocking_pairs == 0,
            witness_size: witness.map(|w| w.members.len()),
            unmatched_applicants: matching.unmatched_applicants(),
            unmatched_firms: matching.unmatched_firms(),
            mean_applicant_rank,
            runtime_ms,
        },
        almost,
    ))
}

/// Runs every sweep point and trial. Failing trials are collected, never fatal.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioOutput> {
    cfg.validate()?;
    let points = cfg.points();
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..cfg.trials).map(move |t| (p, t)))
        .collect();
    let work = || {
        jobs.par_iter()
            .map(|&(p, t)| {
                let (value, market, mech) = &points[p];
                let mut market = market.clone();
                market.seed = trial_seed(cfg.market.seed, *value, t);
                let seed = market.seed;
                (p, t, seed, run_trial(cfg, &market, mech, t))
            })
            .collect::<Vec<_>>()
    };
    let results = match cfg.threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::config(format!("cannot start {k} worker threads: {e}")))?
            .install(work),
        None => work(),
    };
    let mut out = ScenarioOutput::default();
    for (p, t, seed, r) in results {
        match r {
            Ok((rec, almost)) => {
                out.records.push(rec);
                out.almost_stable.push(almost);
            }
            Err(e) => out.failures.push(TrialFailure {
                point: p,
                trial: t,
                seed,
                error: e.to_string(),
            }),
        }
    }
    Ok(out)
}

/// Writes records as CSV with the fixed header.
pub fn write_csv<W: Write>(records: &[TrialRecord], w: W) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wr.write_record(CSV_HEADER.split(','))?;
    for r in records {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(r: R) -> Result<Vec<TrialRecord>> {
    let mut rd = csv::Reader::from_reader(r);
    rd.deserialize().map(|x| x.map_err(Error::from)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl MeanSe {
    /// Mean and standard error (sample sd over sqrt n) of the finite values.
    pub fn of(values: impl IntoIterator<Item = f64>) -> MeanSe {
        let v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
        let n = v.len();
        if n == 0 {
            return MeanSe { mean: f64::NAN, se: f64::NAN, n };
        }
        let mean = v.iter().sum::<f64>() / n as f64;
        let se = if n < 2 {
            0.0
        } else {
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        };
        MeanSe { mean, se, n }
    }
}

/// Per-sweep-point summary.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggregateRow {
    pub n_applicants: usize,
    pub n_firms: usize,
    pub d: usize,
    pub trials: usize,
    pub applicants_blocked: MeanSe,
    pub firms_blocked: MeanSe,
    pub blocking_pairs: MeanSe,
    pub perfect_stable: MeanSe,
    pub witness_size: MeanSe,
    pub unmatched_applicants: MeanSe,
    pub unmatched_firms: MeanSe,
    pub mean_applicant_rank: MeanSe,
}

/// Groups records by `(n_applicants, n_firms, d)` in order of first appearance.
pub fn aggregate(records: &[TrialRecord]) -> Vec<AggregateRow> {
    let mut keys: Vec<(usize, usize, usize)> = Vec::new();
    for r in records {
        let k = (r.n_applicants, r.n_firms, r.d);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(na, nj, d)| {
            let g: Vec<&TrialRecord> = records
                .iter()
                .filter(|r| (r.n_applicants, r.n_firms, r.d) == (na, nj, d))
                .collect();
            let col = |f: &dyn Fn(&TrialRecord) -> f64| MeanSe::of(g.iter().map(|r| f(r)));
            AggregateRow {
                n_applicants: na,
                n_firms: nj,
                d,
                trials: g.len(),
                applicants_blocked: col(&|r| r.applicants_blocked as f64),
                firms_blocked: col(&|r| r.firms_blocked as f64),
                blocking_pairs: col(&|r| r.blocking_pairs as f64),
                perfect_stable: col(&|r| if r.perfect_stable { 1.0 } else { 0.0 }),
                witness_size: col(&|r| r.witness_size.map_or(f64::NAN, |w| w as f64)),
                unmatched_applicants: col(&|r| r.unmatched_applicants as f64),
                unmatched_firms: col(&|r| r.unmatched_firms as f64),
                mean_applicant_rank: col(&|r| r.mean_applicant_rank),
            }
        })
        .collect()
}

/// Writes an aggregate table as CSV (`metric_mean`, `metric_se` columns).
pub fn write_aggregate_csv<W: Write>(rows: &[AggregateRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let metrics = [
        "applicants_blocked",
        "firms_blocked",
        "blocking_pairs",
        "perfect_stable",
        "witness_size",
        "unmatched_applicants",
        "unmatched_firms",
        "mean_applicant_rank",
    ];
    let mut header = vec!["n_applicants".to_string(), "n_firms".into(), "d".into(), "trials".into()];
    for m in metrics {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_se"));
    }
    wr.write_record(&header)?;
    for r in rows {
        let mut row = vec![
            r.n_applicants.to_string(),
            r.n_firms.to_string(),
            r.d.to_string(),
            r.trials.to_string(),
        ];
        for s in [
            r.applicants_blocked,
            r.firms_blocked,
            r.blocking_pairs,
            r.perfect_stable,
            r.witness_size,
            r.unmatched_applicants,
            r.unmatched_firms,
            r.mean_applicant_rank,
        ] {
            row.push(format!("{:.6}", s.mean));
            row.push(format!("{:.6}", s.se));
        }
        wr.write_record(&row)?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::ScoreDistribution;

    fn small(seed: u64) -> ScenarioConfig {
        ScenarioConfig::new(
            MarketConfig::new(
                30,
                30,
                ScoreDistribution::normal(0.0, 1.0),
                ScoreDistribution::uniform(-1.0, 1.0),
                seed,
            ),
            Mechanism::ApplicantSide { d: 3 },
        )
    }

    #[test]
    fn records_are_consistent() {
        let mut cfg = small(1);
        cfg.trials = 4;
        cfg.sweep = Some("d=1,5".parse().unwrap());
        let out = run_scenario(&cfg).unwrap();
        assert!(out.failures.is_empty());
        assert_eq!(out.records.len(), 8);
        for (i, r) in out.records.iter().enumerate() {
            assert_eq!(r.d, if i < 4 { 1 } else { 5 });
            assert_eq!(r.trial, i % 4);
            assert_eq!(r.perfect_stable, r.blocking_pairs == 0);
            assert!(r.applicants_blocked <= r.n_applicants && r.firms_blocked <= r.n_firms);
            assert_eq!(r.runtime_ms, 0);
        }
    }

    #[test]
    fn csv_round_trip_and_header() {
        let mut cfg = small(2);
        cfg.trials = 2;
        let out = run_scenario(&cfg).unwrap();
        let mut buf = Vec::new();
        write_csv(&out.records, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
        let back = read_csv(&buf[..]).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].seed, out.records[0].seed);
    }

    #[test]
    fn failures_do_not_abort() {
        let mut cfg = small(3);
        cfg.sweep = Some("d=2,40,3".parse().unwrap());
        let out = run_scenario(&cfg).unwrap();
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.failures.len(), 1);
        assert_eq!(out.failures[0].point, 1);
    }

    #[test]
    fn seeds_ignore_other_sweep_points() {
        let mut a = small(4);
        a.sweep = Some("d=2,3".parse().unwrap());
        let mut b = small(4);
        b.sweep = Some("d=2,3,4".parse().unwrap());
        let ra = run_scenario(&a).unwrap().records;
        let rb = run_scenario(&b).unwrap().records;
        assert_eq!(ra[..], rb[..2]);
    }

    #[test]
    fn aggregate_basics() {
        let mut cfg = small(5);
        let rec = run_scenario(&cfg).unwrap().records;
        let agg = aggregate(&rec);
        assert_eq!(agg.len(), 1);
        assert_eq!(agg[0].applicants_blocked.mean, rec[0].applicants_blocked as f64);
        assert_eq!(agg[0].applicants_blocked.se, 0.0);
        cfg.trials = 2;
        let mut two = rec.clone();
        two.push(rec[0].clone());
        let agg = aggregate(&two);
        assert_eq!(agg[0].blocking_pairs.se, 0.0);
        assert_eq!(agg[0].trials, 2);
    }

    #[test]
    fn mean_se_values() {
        let s = MeanSe::of([1.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert!((s.se - 1.0).abs() < 1e-15);
        assert!(MeanSe::of([f64::NAN]).mean.is_nan());
    }

    #[test]
    fn scenario_json_defaults() {
        let json = r#"{
            "market": {"n_applicants": 5, "n_firms": 6, "pre_dist": "normal:0,1", "post_dist": "uniform:-1,1", "seed": 3},
            "mechanism": {"kind": "applicant", "d": 2},
            "sweep": {"param": "n_applicants", "values": [4, 5]}
        }"#;
        let cfg: ScenarioConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.trials, 1);
        assert!(cfg.include_unmatched_pairs);
        assert_eq!(cfg.proposing_side, Side::Applicant);
        assert_eq!(cfg.metrics.len(), 3);
        assert!(serde_json::from_str::<ScenarioConfig>(r#"{"market": 1}"#).is_err());
    }
}
