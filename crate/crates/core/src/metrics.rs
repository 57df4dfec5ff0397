//! Log reduction, confidence intervals and report files.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use thiserror::Error;

use crate::sim::log::LogEvent;
use crate::types::BundleId;

/// How replicas are turned into a cost figure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CostMode {
    /// Replicas per delivered bundle, counting the delivering hop.
    #[default]
    Replicas,
    /// Same, minus the delivering hop.
    Overhead,
}

impl CostMode {
    pub fn name(&self) -> &'static str {
        match self {
            CostMode::Replicas => "replicas",
            CostMode::Overhead => "overhead",
        }
    }
}

impl fmt::Display for CostMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CostMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "replicas" => Ok(CostMode::Replicas),
            "overhead" => Ok(CostMode::Overhead),
            other => Err(format!("unknown cost mode `{other}` (replicas|overhead)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub created: u64,
    pub delivered: u64,
    /// `None` when nothing was created.
    pub delivery_ratio: Option<f64>,
    pub replicas: u64,
    /// `None` when nothing was delivered.
    pub cost: Option<f64>,
    pub avg_latency_s: Option<f64>,
    pub refused: u64,
    pub expired: u64,
    pub aborted: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("DELIVER of `{0}` has no CREATE and its id carries no creation time")]
    UnknownCreation(String),
}

/// Folds a run's events into metrics. The result does not depend on the
/// order of events.
pub fn reduce<'a, I>(events: I, mode: CostMode) -> Result<RunMetrics, MetricsError>
where
    I: IntoIterator<Item = (f64, LogEvent, &'a str)>,
{
    let mut counts = BTreeMap::<LogEvent, u64>::new();
    let mut created_at = BTreeMap::<&str, f64>::new();
    let mut deliveries = Vec::new();
    for (t, ev, id) in events {
        *counts.entry(ev).or_default() += 1;
        match ev {
            LogEvent::Create => {
                let slot = created_at.entry(id).or_insert(t);
                *slot = slot.min(t);
            }
            LogEvent::Deliver => deliveries.push((id, t)),
            _ => {}
        }
    }
    let count = |e| counts.get(&e).copied().unwrap_or(0);
    let mut latencies = Vec::with_capacity(deliveries.len());
    for (id, t) in deliveries {
        let born = match created_at.get(id) {
            Some(&c) => c,
            None => {
                let parsed: BundleId = id
                    .parse()
                    .map_err(|_| MetricsError::UnknownCreation(id.to_string()))?;
                parsed.creation_ms as f64 / 1000.0
            }
        };
        latencies.push(t - born);
    }
    latencies.sort_by(f64::total_cmp);

    let created = count(LogEvent::Create);
    let delivered = count(LogEvent::Deliver);
    let replicas = count(LogEvent::Relay) + delivered;
    let cost = (delivered > 0).then(|| {
        let c = replicas as f64 / delivered as f64;
        match mode {
            CostMode::Replicas => c,
            CostMode::Overhead => (replicas - delivered) as f64 / delivered as f64,
        }
    });
    Ok(RunMetrics {
        created,
        delivered,
        delivery_ratio: (created > 0).then(|| delivered as f64 / created as f64),
        replicas,
        cost,
        avg_latency_s: (!latencies.is_empty())
            .then(|| latencies.iter().sum::<f64>() / latencies.len() as f64),
        refused: count(LogEvent::Refuse),
        expired: count(LogEvent::Expire),
        aborted: count(LogEvent::Abort),
    })
}

/// Two-sided 97.5% Student-t quantiles for 1..=29 degrees of freedom.
const T_975: [f64; 29] = [
    12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179, 2.160,
    2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064, 2.060, 2.056,
    2.052, 2.048, 2.045,
];

pub fn t_quantile_975(dof: usize) -> f64 {
    assert!(dof > 0, "no quantile for zero degrees of freedom");
    T_975.get(dof - 1).copied().unwrap_or(1.96)
}

/// Mean and 95% half-width of one metric across seeds.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Stat {
    /// Number of runs where the metric was defined.
    pub n: usize,
    pub mean: Option<f64>,
    pub ci: Option<f64>,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        let n = values.len();
        if n == 0 {
            return Stat::default();
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let ci = (n >= 2).then(|| {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            t_quantile_975(n - 1) * (var / n as f64).sqrt()
        });
        Stat { n, mean: Some(mean), ci }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateMetrics {
    pub runs: usize,
    pub created: Stat,
    pub delivered: Stat,
    pub delivery_ratio: Stat,
    pub replicas: Stat,
    pub cost: Stat,
    pub avg_latency_s: Stat,
    pub refused: Stat,
    pub expired: Stat,
    pub aborted: Stat,
}

/// Optional metrics (cost, latency, ratio) are averaged over the runs where
/// they are defined.
pub fn aggregate(runs: &[RunMetrics]) -> AggregateMetrics {
    let count = |f: fn(&RunMetrics) -> u64| Stat::of(&runs.iter().map(|r| f(r) as f64).collect::<Vec<_>>());
    let opt = |f: fn(&RunMetrics) -> Option<f64>| Stat::of(&runs.iter().filter_map(f).collect::<Vec<_>>());
    AggregateMetrics {
        runs: runs.len(),
        created: count(|r| r.created),
        delivered: count(|r| r.delivered),
        delivery_ratio: opt(|r| r.delivery_ratio),
        replicas: count(|r| r.replicas),
        cost: opt(|r| r.cost),
        avg_latency_s: opt(|r| r.avg_latency_s),
        refused: count(|r| r.refused),
        expired: count(|r| r.expired),
        aborted: count(|r| r.aborted),
    }
}

pub const CSV_HEADER: &str = "router,ttl_s,seeds,created,delivered_mean,delivery_ratio_mean,delivery_ratio_ci,replicas_mean,cost_mean,cost_ci,avg_latency_mean,refused_mean,expired_mean";

/// One line of the aggregate CSV. `None` is written as `NA`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub router: String,
    pub ttl_s: u64,
    pub seeds: usize,
    pub created: Option<f64>,
    pub delivered_mean: Option<f64>,
    pub delivery_ratio_mean: Option<f64>,
    pub delivery_ratio_ci: Option<f64>,
    pub replicas_mean: Option<f64>,
    pub cost_mean: Option<f64>,
    pub cost_ci: Option<f64>,
    pub avg_latency_mean: Option<f64>,
    pub refused_mean: Option<f64>,
    pub expired_mean: Option<f64>,
}

impl ReportRow {
    pub fn new(router: &str, ttl_s: u64, agg: &AggregateMetrics) -> ReportRow {
        ReportRow {
            router: router.to_string(),
            ttl_s,
            seeds: agg.runs,
            created: agg.created.mean,
            delivered_mean: agg.delivered.mean,
            delivery_ratio_mean: agg.delivery_ratio.mean,
            delivery_ratio_ci: agg.delivery_ratio.ci,
            replicas_mean: agg.replicas.mean,
            cost_mean: agg.cost.mean,
            cost_ci: agg.cost.ci,
            avg_latency_mean: agg.avg_latency_s.mean,
            refused_mean: agg.refused.mean,
            expired_mean: agg.expired.mean,
        }
    }

    fn values(&self) -> [Option<f64>; 10] {
        [
            self.created,
            self.delivered_mean,
            self.delivery_ratio_mean,
            self.delivery_ratio_ci,
            self.replicas_mean,
            self.cost_mean,
            self.cost_ci,
            self.avg_latency_mean,
            self.refused_mean,
            self.expired_mean,
        ]
    }

    /// Value of a plot metric by name.
    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "delivery_ratio" => self.delivery_ratio_mean,
            "delivery_ratio_ci" => self.delivery_ratio_ci,
            "cost" => self.cost_mean,
            "cost_ci" => self.cost_ci,
            "replicas" => self.replicas_mean,
            "avg_latency" => self.avg_latency_mean,
            _ => None,
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x}"),
        _ => "NA".to_string(),
    }
}

/// Aggregate CSV, rows sorted by (router, ttl).
pub fn emit_csv(rows: &[ReportRow]) -> String {
    let mut sorted: Vec<&ReportRow> = rows.iter().collect();
    sorted.sort_by(|a, b| (&a.router, a.ttl_s).cmp(&(&b.router, b.ttl_s)));
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in sorted {
        let _ = write!(out, "{},{},{}", r.router, r.ttl_s, r.seeds);
        for v in r.values() {
            let _ = write!(out, ",{}", fmt_opt(v));
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CsvError {
    #[error("unexpected CSV header")]
    Header,
    #[error("line {line}: {reason}")]
    Row { line: usize, reason: String },
}

pub fn parse_csv(text: &str) -> Result<Vec<ReportRow>, CsvError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == CSV_HEADER => {}
        _ => return Err(CsvError::Header),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: &str| CsvError::Row {
            line: idx + 1,
            reason: reason.to_string(),
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 13 {
            return Err(bad("expected 13 fields"));
        }
        let num = |s: &str| -> Result<Option<f64>, CsvError> {
            if s == "NA" {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad("bad number"))
            }
        };
        rows.push(ReportRow {
            router: f[0].to_string(),
            ttl_s: f[1].parse().map_err(|_| bad("bad ttl_s"))?,
            seeds: f[2].parse().map_err(|_| bad("bad seeds"))?,
            created: num(f[3])?,
            delivered_mean: num(f[4])?,
            delivery_ratio_mean: num(f[5])?,
            delivery_ratio_ci: num(f[6])?,
            replicas_mean: num(f[7])?,
            cost_mean: num(f[8])?,
            cost_ci: num(f[9])?,
            avg_latency_mean: num(f[10])?,
            refused_mean: num(f[11])?,
            expired_mean: num(f[12])?,
        });
    }
    Ok(rows)
}

pub const PLOT_METRICS: [&str; 6] = [
    "delivery_ratio",
    "delivery_ratio_ci",
    "cost",
    "cost_ci",
    "replicas",
    "avg_latency",
];

/// Whitespace-separated matrix: one row per TTL, one column per router.
pub fn plot_data(rows: &[ReportRow], metric: &str) -> String {
    let routers: BTreeSet<&str> = rows.iter().map(|r| r.router.as_str()).collect();
    let ttls: BTreeSet<u64> = rows.iter().map(|r| r.ttl_s).collect();
    let mut out = format!("# metric={metric}\nttl_s");
    for r in &routers {
        let _ = write!(out, " {r}");
    }
    out.push('\n');
    for ttl in ttls {
        let _ = write!(out, "{ttl}");
        for router in &routers {
            let v = rows
                .iter()
                .find(|r| r.router == *router && r.ttl_s == ttl)
                .and_then(|r| r.metric(metric));
            let _ = write!(out, " {}", fmt_opt(v));
        }
        out.push('\n');
    }
    out
}

pub const RUNS_HEADER: &str =
    "router,ttl_s,seed,created,delivered,delivery_ratio,replicas,cost,avg_latency_s,refused,expired,aborted";

pub fn run_csv_line(router: &str, ttl_s: u64, seed: u64, m: &RunMetrics) -> String {
    format!(
        "{router},{ttl_s},{seed},{},{},{},{},{},{},{},{},{}",
        m.created,
        m.delivered,
        fmt_opt(m.delivery_ratio),
        m.replicas,
        fmt_opt(m.cost),
        fmt_opt(m.avg_latency_s),
        m.refused,
        m.expired,
        m.aborted
    )
}
