use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use oppdtn_core::metrics::{
    aggregate, emit_csv, plot_data, run_csv_line, CostMode, ReportRow, RunMetrics, PLOT_METRICS, RUNS_HEADER,
};

/// Writes through a temp file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub struct RunResult {
    pub router: String,
    pub ttl_s: u64,
    pub seed: u64,
    pub metrics: RunMetrics,
}

/// Aggregate rows, one per (router, TTL), sorted.
pub fn rows(runs: &[RunResult]) -> Vec<ReportRow> {
    let mut groups: BTreeMap<(&str, u64), Vec<RunMetrics>> = BTreeMap::new();
    for r in runs {
        groups.entry((&r.router, r.ttl_s)).or_default().push(r.metrics.clone());
    }
    groups
        .into_iter()
        .map(|((router, ttl), ms)| ReportRow::new(router, ttl, &aggregate(&ms)))
        .collect()
}

/// `runs.csv`, `aggregate.csv`, `plots/<metric>.dat` and `report.txt`.
pub fn write_reports(out: &Path, runs: &mut [RunResult], mode: CostMode, notes: &[(&str, String)]) -> io::Result<Vec<ReportRow>> {
    runs.sort_by(|a, b| (&a.router, a.ttl_s, a.seed).cmp(&(&b.router, b.ttl_s, b.seed)));
    let mut csv = format!("{RUNS_HEADER}\n");
    for r in runs.iter() {
        csv.push_str(&run_csv_line(&r.router, r.ttl_s, r.seed, &r.metrics));
        csv.push('\n');
    }
    write_atomic(&out.join("runs.csv"), csv.as_bytes())?;

    let rows = rows(runs);
    write_atomic(&out.join("aggregate.csv"), emit_csv(&rows).as_bytes())?;
    for metric in PLOT_METRICS {
        write_atomic(&out.join("plots").join(format!("{metric}.dat")), plot_data(&rows, metric).as_bytes())?;
    }

    let mut report = String::from("oppdtn report\n");
    report.push_str(&format!("cost_mode = {mode}\n"));
    report.push_str(&format!("runs = {}\n", runs.len()));
    for (k, v) in notes {
        report.push_str(&format!("{k} = {v}\n"));
    }
    report.push_str(
        "cost = replicas per delivered bundle; replicas count every successful transfer\n\
         avg_latency is an extra metric (creation to first delivery, seconds)\n\
         confidence intervals: 95% Student-t half-width over seeds\n",
    );
    write_atomic(&out.join("report.txt"), report.as_bytes())?;
    Ok(rows)
}

/// Short human-readable table for stdout.
pub fn summary_table(rows: &[ReportRow]) -> String {
    let f = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "NA".into());
    let mut s = format!("{:<9} {:>8} {:>10} {:>10} {:>10}\n", "router", "ttl_s", "delivery", "cost", "latency_s");
    for r in rows {
        s.push_str(&format!(
            "{:<9} {:>8} {:>10} {:>10} {:>10}\n",
            r.router,
            r.ttl_s,
            f(r.delivery_ratio_mean),
            f(r.cost_mean),
            f(r.avg_latency_mean)
        ));
    }
    s
}
