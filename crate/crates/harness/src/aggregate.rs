use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use noisefield_core::metrics::SeedSummary;

use crate::config::{Direction, VERSION};
use crate::runner::{collect_files, RunRecord};
use crate::HarnessError;

/// Cross-seed statistics for one metric of one `(point, method, scale)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub point: String,
    pub method: String,
    pub scale: String,
    pub metric: String,
    /// `None` when no run of the cell produced the metric.
    pub stats: Option<SeedSummary>,
    pub n_failed: usize,
}

type Cell = (String, String, String);

fn cell(r: &RunRecord) -> Cell {
    (r.point.clone(), r.method.clone(), r.scale.name().to_string())
}

/// Groups records by cell, preserving first-seen order of methods.
fn cells(records: &[RunRecord]) -> Vec<(Cell, Vec<&RunRecord>)> {
    let mut order: Vec<Cell> = Vec::new();
    let mut groups: BTreeMap<Cell, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        let k = cell(r);
        if !groups.contains_key(&k) {
            order.push(k.clone());
        }
        groups.entry(k).or_default().push(r);
    }
    order.sort_by(|a, b| a.0.cmp(&b.0).then(a.2.cmp(&b.2)));
    order.into_iter().map(|k| {
        let g = groups.remove(&k).unwrap();
        (k, g)
    }).collect()
}

/// Per-metric mean, sample std and 95% half-width over the successful seeds
/// of each cell. Undefined values are left out of the count.
pub fn aggregate(records: &[RunRecord]) -> Vec<AggregateRow> {
    let mut rows = Vec::new();
    for ((point, method, scale), group) in cells(records) {
        let n_failed = group.iter().filter(|r| !r.ok()).count();
        let mut names = BTreeSet::new();
        for r in &group {
            if let Some(m) = &r.metrics {
                names.extend(m.values.keys().cloned());
            }
        }
        for metric in names {
            let xs: Vec<f64> = group.iter().filter_map(|r| r.metrics.as_ref()?.get(&metric)).collect();
            rows.push(AggregateRow {
                point: point.clone(),
                method: method.clone(),
                scale: scale.clone(),
                metric,
                stats: SeedSummary::of(&xs),
                n_failed,
            });
        }
    }
    rows
}

fn num(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Long-format aggregate table. Byte-identical for identical records.
pub fn aggregate_csv(rows: &[AggregateRow], config_hash: &str) -> String {
    let mut s = String::from("config_hash,version,point,method,scale,metric,mean,std,ci95,n_seeds,n_failed\n");
    for r in rows {
        let st = r.stats;
        let _ = writeln!(
            s,
            "{config_hash},{VERSION},{},{},{},{},{},{},{},{},{}",
            r.point,
            r.method,
            r.scale,
            r.metric,
            num(st.map(|x| x.mean)),
            num(st.map(|x| x.std)),
            num(st.map(|x| x.ci95)),
            st.map_or(0, |x| x.n),
            r.n_failed
        );
    }
    s
}

/// One row per run and metric, carrying the seed.
pub fn runs_csv(records: &[RunRecord]) -> String {
    let mut s = String::from("config_hash,version,point,method,scale,seed,metric,value,error\n");
    for r in records {
        match &r.metrics {
            Some(m) => {
                for (k, v) in &m.values {
                    let _ = writeln!(s, "{},{},{},{},{},{},{k},{},", r.config_hash, r.version, r.point, r.method, r.scale.name(), r.seed, num(*v));
                }
            }
            None => {
                let err = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
                let _ = writeln!(s, "{},{},{},{},{},{},,,{err}", r.config_hash, r.version, r.point, r.method, r.scale.name(), r.seed);
            }
        }
    }
    s
}

/// Per-tick wall time aggregated over seeds, with each method's ratio to the
/// fastest method of its `(point, scale)`. Hardware-dependent.
pub fn runtime_csv(records: &[RunRecord]) -> String {
    let mut per: Vec<(Cell, Option<SeedSummary>, Option<SeedSummary>)> = Vec::new();
    for (k, group) in cells(records) {
        let pick = |name: &str| {
            let xs: Vec<f64> = group.iter().filter_map(|r| r.timing.as_ref()?.get(name)).collect();
            SeedSummary::of(&xs)
        };
        let main = pick("tick_ms_mean").or_else(|| pick("generate_ms"));
        per.push((k, main, pick("tick_ms_median")));
    }
    let mut fastest: BTreeMap<(String, String), f64> = BTreeMap::new();
    for ((p, _, sc), m, _) in &per {
        if let Some(m) = m {
            let e = fastest.entry((p.clone(), sc.clone())).or_insert(f64::INFINITY);
            *e = e.min(m.mean);
        }
    }
    let mut s = String::from("# wall-clock timings; hardware-dependent, compare only within one file\n");
    s.push_str("point,method,scale,ms_mean,ms_ci95,ms_median,n_seeds,relative_to_fastest\n");
    for ((p, method, sc), m, med) in &per {
        let rel = m.and_then(|m| fastest.get(&(p.clone(), sc.clone())).map(|f| m.mean / f));
        let _ = writeln!(
            s,
            "{p},{method},{sc},{},{},{},{},{}",
            num(m.map(|x| x.mean)),
            num(m.map(|x| x.ci95)),
            num(med.map(|x| x.mean)),
            m.map_or(0, |x| x.n),
            num(rel)
        );
    }
    s
}

/// The headline columns reported for each direction.
pub fn headline_metrics(direction: Direction) -> &'static [&'static str] {
    match direction {
        Direction::Crowd => &["s_dir_5", "jerk_mean", "coverage"],
        Direction::Action => &["coverage", "duty", "hf_lf", "fano"],
        Direction::Spawn => &["front_coherence", "isi_cv", "coverage_distance"],
        Direction::Worldgen => &["histogram_error", "spacing_ratio_min", "points", "shortfall"],
    }
}

/// Wide table: one row per cell with mean and 95% half-width of the headline
/// metrics, plus mean per-tick runtime.
pub fn table_csv(records: &[RunRecord]) -> String {
    let Some(direction) = records.first().map(|r| r.direction) else {
        return String::new();
    };
    let cols = headline_metrics(direction);
    let mut s = String::from("point,method,scale");
    for c in cols {
        let _ = write!(s, ",{c},{c}_ci95");
    }
    s.push_str(",runtime_ms,runtime_ms_ci95,n_seeds\n");
    for ((p, method, sc), group) in cells(records) {
        let _ = write!(s, "{p},{method},{sc}");
        let ok: Vec<&&RunRecord> = group.iter().filter(|r| r.ok()).collect();
        for c in cols {
            let xs: Vec<f64> = ok.iter().filter_map(|r| r.metrics.as_ref()?.get(c)).collect();
            let st = SeedSummary::of(&xs);
            let _ = write!(s, ",{},{}", num(st.map(|x| x.mean)), num(st.map(|x| x.ci95)));
        }
        let t: Vec<f64> = ok
            .iter()
            .filter_map(|r| r.timing.as_ref().and_then(|t| t.get("tick_ms_mean").or_else(|| t.get("generate_ms"))))
            .collect();
        let st = SeedSummary::of(&t);
        let _ = writeln!(s, ",{},{},{}", num(st.map(|x| x.mean)), num(st.map(|x| x.ci95)), ok.len());
    }
    s
}

pub fn write_tables(root: &Path, records: &[RunRecord]) -> Result<(), HarnessError> {
    let hash = records.first().map_or("", |r| r.config_hash.as_str());
    fs::write(root.join("aggregate.csv"), aggregate_csv(&aggregate(records), hash))?;
    fs::write(root.join("runs.csv"), runs_csv(records))?;
    fs::write(root.join("runtime.csv"), runtime_csv(records))?;
    fs::write(root.join("table.csv"), table_csv(records))?;
    let failed: Vec<String> = records
        .iter()
        .filter_map(|r| r.error.as_ref().map(|e| format!("{}/{}/{}/seed_{}: {e}", r.point, r.method, r.scale.name(), r.seed)))
        .collect();
    if !failed.is_empty() {
        fs::write(root.join("failures.txt"), failed.join("\n") + "\n")?;
    }
    Ok(())
}

/// Reloads every `run.json` (and its `timing.json`) under `root`, sorted by
/// path so the result does not depend on directory listing order.
pub fn load_records(root: &Path) -> Result<Vec<RunRecord>, HarnessError> {
    let mut files = Vec::new();
    collect_files(root, root, &mut files)?;
    files.retain(|f| f.file_name().is_some_and(|n| n == "run.json"));
    files.sort();
    let mut out = Vec::with_capacity(files.len());
    for rel in files {
        let path = root.join(&rel);
        let mut rec: RunRecord = serde_json::from_str(&fs::read_to_string(&path)?)?;
        let timing = path.with_file_name("timing.json");
        if timing.exists() {
            rec.timing = serde_json::from_str(&fs::read_to_string(timing)?).ok();
        }
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use noisefield_core::crowd::Scale;
    use noisefield_core::metrics::MetricReport;

    fn record(method: &str, seed: u64, x: Option<f64>) -> RunRecord {
        let metrics = x.map(|v| {
            let mut m = MetricReport::default();
            m.set("x", Some(v));
            m
        });
        RunRecord {
            version: VERSION.into(),
            config_hash: "abc".into(),
            direction: Direction::Crowd,
            method: method.into(),
            scale: Scale::Medium,
            seed,
            point: "default".into(),
            settings: BTreeMap::new(),
            error: x.is_none().then(|| "boom".to_string()),
            metrics,
            timing: None,
        }
    }

    #[test]
    fn single_seed_has_zero_spread() {
        let rows = aggregate(&[record("a", 0, Some(4.0))]);
        let st = rows[0].stats.unwrap();
        assert_eq!((st.mean, st.std, st.ci95, st.n), (4.0, 0.0, 0.0, 1));
    }

    #[test]
    fn two_seeds_sample_std() {
        let rows = aggregate(&[record("a", 0, Some(1.0)), record("a", 1, Some(3.0))]);
        let st = rows[0].stats.unwrap();
        assert_eq!(st.mean, 2.0);
        assert!((st.std - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn identical_files_aggregate_to_themselves() {
        let rows = aggregate(&[record("a", 0, Some(0.37)), record("a", 1, Some(0.37)), record("a", 2, Some(0.37))]);
        assert_eq!(rows[0].stats.unwrap().mean, 0.37);
    }

    #[test]
    fn failed_runs_are_flagged_and_excluded() {
        let rows = aggregate(&[record("a", 0, Some(1.0)), record("a", 1, None), record("b", 0, None)]);
        assert_eq!(rows.len(), 1);
        assert_eq!((rows[0].stats.unwrap().n, rows[0].n_failed), (1, 1));
        let csv = runs_csv(&[record("b", 0, None)]);
        assert!(csv.lines().nth(1).unwrap().ends_with(",boom"));
    }

    #[test]
    fn aggregate_table_is_stable() {
        let recs = [record("b", 0, Some(1.0)), record("a", 0, Some(2.0))];
        let a = aggregate_csv(&aggregate(&recs), "abc");
        let b = aggregate_csv(&aggregate(&recs), "abc");
        assert_eq!(a, b);
        assert!(a.lines().nth(1).unwrap().starts_with("abc,noisefield"));
        assert_eq!(a.lines().count(), 3);
    }
}
