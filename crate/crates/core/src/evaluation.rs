//! Scoring indicator estimates against simulated truth.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dgp::Dataset;
use crate::error::{Error, Result};
use crate::format::sig6;
use crate::glmm::ModelForm;
use crate::indicators::{HospitalIndicators, ModelFits, RegionIndicators};
use crate::stats::{mean, pearson, variance};

/// Average ranks (1-based), ties sharing the mean of their positions.
pub fn midranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation; `None` for fewer than three pairs, unequal
/// lengths, non-finite input or a constant vector.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 3 || a.iter().chain(b).any(|x| !x.is_finite()) {
        return None;
    }
    pearson(&midranks(a), &midranks(b)).map(|r| r.clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tail {
    /// Smallest values (lowest adverse-outcome risk).
    Best,
    Worst,
}

/// Size of each tail set for `h` hospitals: `⌈0.1 h⌉`.
pub fn tail_size(h: usize) -> usize {
    h.div_ceil(10)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecileShare {
    pub share: f64,
    /// The estimate tied across the tail boundary; the id order decided.
    pub boundary_tie: bool,
}

fn tail_set(v: &[f64], tail: Tail, k: usize) -> (Vec<usize>, bool) {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| {
        let c = v[a].total_cmp(&v[b]);
        let c = if tail == Tail::Worst { c.reverse() } else { c };
        c.then(a.cmp(&b))
    });
    let tie = k < v.len() && v[order[k - 1]] == v[order[k]];
    order.truncate(k);
    (order, tie)
}

/// Share of the true best (or worst) tenth that the estimate places in its
/// own best (or worst) tenth. `None` when lengths differ or there are fewer
/// than ten hospitals.
pub fn decile_share(truth: &[f64], estimate: &[f64], tail: Tail) -> Option<DecileShare> {
    if truth.len() != estimate.len() || truth.len() < 10 {
        return None;
    }
    let k = tail_size(truth.len());
    let (true_set, _) = tail_set(truth, tail, k);
    let (est_set, boundary_tie) = tail_set(estimate, tail, k);
    let hits = est_set.iter().filter(|h| true_set.contains(h)).count();
    Some(DecileShare { share: hits as f64 / k as f64, boundary_tie })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Level {
    Hospital,
    Region,
}

impl Level {
    pub fn name(self) -> &'static str {
        match self {
            Level::Hospital => "hospital",
            Level::Region => "region",
        }
    }
}

/// Scored indicators. RSHOR has no ground truth and is not scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Indicator {
    Raw,
    Smr,
    Rsmr,
    Shor,
    ShorNoRegion,
    Rspor,
    RegionalSmr,
}

impl Indicator {
    pub const ALL: [Indicator; 7] = [
        Indicator::Raw,
        Indicator::Smr,
        Indicator::Rsmr,
        Indicator::Shor,
        Indicator::ShorNoRegion,
        Indicator::Rspor,
        Indicator::RegionalSmr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Indicator::Raw => "raw",
            Indicator::Smr => "smr",
            Indicator::Rsmr => "rsmr",
            Indicator::Shor => "shor",
            Indicator::ShorNoRegion => "shor_noregion",
            Indicator::Rspor => "rspor",
            Indicator::RegionalSmr => "smr_r",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Indicator::ALL.into_iter().find(|i| i.name() == name)
    }

    pub fn level(self) -> Level {
        match self {
            Indicator::Rspor | Indicator::RegionalSmr => Level::Region,
            _ => Level::Hospital,
        }
    }

    /// The fit the indicator depends on, if any.
    pub fn model(self) -> Option<ModelForm> {
        match self {
            Indicator::Raw => None,
            Indicator::Smr | Indicator::RegionalSmr => Some(ModelForm::GlmPatient),
            Indicator::Rsmr => Some(ModelForm::RandomIntercept),
            Indicator::Shor | Indicator::Rspor => Some(ModelForm::MqiFull),
            Indicator::ShorNoRegion => Some(ModelForm::MqiNoRegion),
        }
    }

    pub fn metrics(self) -> &'static [Metric] {
        match self.level() {
            Level::Hospital => &[Metric::Spearman, Metric::Best10, Metric::Worst10],
            Level::Region => &[Metric::Spearman],
        }
    }
}

impl fmt::Display for Indicator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    Spearman,
    Best10,
    Worst10,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Spearman => "spearman",
            Metric::Best10 => "best10",
            Metric::Worst10 => "worst10",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [Metric::Spearman, Metric::Best10, Metric::Worst10].into_iter().find(|m| m.name() == name)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MetricKey {
    pub indicator: Indicator,
    pub metric: Metric,
}

impl MetricKey {
    /// Every scored (indicator, metric) pair in output order.
    pub fn all() -> Vec<MetricKey> {
        Indicator::ALL
            .iter()
            .flat_map(|&indicator| indicator.metrics().iter().map(move |&metric| MetricKey { indicator, metric }))
            .collect()
    }
}

/// Metrics of one replication; `None` marks a missing value (failed fit,
/// invalid indicator or undefined correlation).
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationMetrics {
    pub values: BTreeMap<MetricKey, Option<f64>>,
    /// Model forms whose fit was missing or unusable.
    pub failed_models: Vec<ModelForm>,
    /// Decile metrics decided by the id tie-break.
    pub boundary_ties: Vec<MetricKey>,
}

impl ReplicationMetrics {
    pub fn get(&self, indicator: Indicator, metric: Metric) -> Option<f64> {
        self.values.get(&MetricKey { indicator, metric }).copied().flatten()
    }
}

fn complete(v: &[Option<f64>]) -> Option<Vec<f64>> {
    v.iter().copied().collect()
}

/// Scores every indicator of one replication against the dataset's truth.
pub fn score(
    ds: &Dataset,
    hosp: &HospitalIndicators,
    region: &RegionIndicators,
    fits: &ModelFits,
) -> ReplicationMetrics {
    let theta: Vec<f64> = ds.hospitals.iter().map(|h| h.theta).collect();
    let eta: Vec<f64> = ds.regions.iter().map(|r| r.eta).collect();
    let mut values = BTreeMap::new();
    let mut boundary_ties = Vec::new();
    for indicator in Indicator::ALL {
        let estimate = match indicator {
            Indicator::Raw => Some(hosp.raw.clone()),
            Indicator::Smr => complete(&hosp.smr),
            Indicator::Rsmr => complete(&hosp.rsmr),
            Indicator::Shor => complete(&hosp.shor),
            Indicator::ShorNoRegion => complete(&hosp.shor_noregion),
            Indicator::Rspor => complete(&region.rspor),
            Indicator::RegionalSmr => complete(&region.smr),
        };
        let truth = match indicator.level() {
            Level::Hospital => &theta,
            Level::Region => &eta,
        };
        for &metric in indicator.metrics() {
            let key = MetricKey { indicator, metric };
            let value = estimate.as_ref().and_then(|est| match metric {
                Metric::Spearman => spearman(truth, est),
                Metric::Best10 | Metric::Worst10 => {
                    let tail = if metric == Metric::Best10 { Tail::Best } else { Tail::Worst };
                    decile_share(truth, est, tail).map(|d| {
                        if d.boundary_tie {
                            boundary_ties.push(key);
                        }
                        d.share
                    })
                }
            });
            values.insert(key, value);
        }
    }
    let failed_models = ModelForm::ALL.into_iter().filter(|&f| fits.usable(f).is_none()).collect();
    ReplicationMetrics { values, failed_models, boundary_ties }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub key: MetricKey,
    /// `None` when no replication produced a value.
    pub mean: Option<f64>,
    /// `None` with fewer than two values.
    pub sd: Option<f64>,
    pub n_reps: usize,
    pub n_failed: usize,
}

/// Mean and standard deviation per metric over replications. Missing values
/// are counted in `n_failed`. The result does not depend on input order.
pub fn aggregate(metrics: &[ReplicationMetrics]) -> Vec<Aggregate> {
    MetricKey::all()
        .into_iter()
        .map(|key| {
            let mut values: Vec<f64> = metrics.iter().filter_map(|m| m.values.get(&key).copied().flatten()).collect();
            values.sort_by(f64::total_cmp);
            let n_reps = values.len();
            Aggregate {
                key,
                mean: (n_reps > 0).then(|| mean(&values)),
                sd: (n_reps > 1).then(|| variance(&values).sqrt()),
                n_reps,
                n_failed: metrics.len() - n_reps,
            }
        })
        .collect()
}

/// One line of the summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    /// Swept parameter key, or `baseline` for an unswept run.
    pub scenario_param: String,
    pub param_value: Option<f64>,
    pub aggregate: Aggregate,
}

pub const SUMMARY_HEADER: &str = "scenario_param,param_value,indicator,level,metric,mean,sd,n_reps,n_failed";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), sig6)
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], mut out: W) -> Result<()> {
    let io = |e| Error::io("writing summary", e);
    writeln!(out, "{SUMMARY_HEADER}").map_err(io)?;
    for row in rows {
        let a = &row.aggregate;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            row.scenario_param,
            row.param_value.map(sig6).unwrap_or_default(),
            a.key.indicator.name(),
            a.key.indicator.level().name(),
            a.key.metric.name(),
            opt(a.mean),
            opt(a.sd),
            a.n_reps,
            a.n_failed,
        )
        .map_err(io)?;
    }
    Ok(())
}

/// Parses a table written by [`write_summary_csv`].
pub fn read_summary_csv(text: &str) -> Result<Vec<SummaryRow>> {
    let bad = |line: usize, detail: &str| Error::Format { what: "summary", detail: format!("line {line}: {detail}") };
    let mut lines = text.lines();
    if lines.next() != Some(SUMMARY_HEADER) {
        return Err(bad(1, "unexpected header"));
    }
    let number = |s: &str, line: usize| -> Result<Option<f64>> {
        match s {
            "NA" => Ok(None),
            _ => s.parse().map(Some).map_err(|_| bad(line, "invalid number")),
        }
    };
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
        let n = i + 2;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(bad(n, "expected 9 fields"));
        }
        let indicator = Indicator::from_name(f[2]).ok_or_else(|| bad(n, "unknown indicator"))?;
        let metric = Metric::from_name(f[4]).ok_or_else(|| bad(n, "unknown metric"))?;
        if indicator.level().name() != f[3] {
            return Err(bad(n, "level does not match indicator"));
        }
        rows.push(SummaryRow {
            scenario_param: f[0].to_string(),
            param_value: if f[1].is_empty() { None } else { number(f[1], n)? },
            aggregate: Aggregate {
                key: MetricKey { indicator, metric },
                mean: number(f[5], n)?,
                sd: number(f[6], n)?,
                n_reps: f[7].parse().map_err(|_| bad(n, "invalid count"))?,
                n_failed: f[8].parse().map_err(|_| bad(n, "invalid count"))?,
            },
        });
    }
    Ok(rows)
}
