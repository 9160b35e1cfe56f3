//! One-axis parameter sweeps.

use std::cmp::Ordering;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use toml::{Table, Value};

use crate::config::{set_path, ExperimentConfig, SchedulerKind};
use crate::error::CliError;
use crate::experiment::run;
use crate::output::SummaryRow;

/// A resolved sweep point.
#[derive(Debug, Clone)]
pub struct Point {
    pub value: String,
    pub config: ExperimentConfig,
}

/// Display form of an axis value; strings are written bare.
pub fn value_label(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Expand `doc` over `values` of `axis`, once per scheduler in
/// `schedulers` (or once with the config's own scheduler when empty).
/// Every point is resolved before anything runs, so a bad value is a
/// config error.
pub fn expand(
    doc: &Table,
    origin: &Path,
    axis: &str,
    values: &[Value],
    schedulers: &[SchedulerKind],
) -> Result<Vec<Point>, CliError> {
    let base_dir = origin.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    let bad = |msg: String| CliError::Config { path: origin.to_path_buf(), msg };
    if values.is_empty() {
        return Err(bad("sweep needs at least one value".into()));
    }
    let kinds: Vec<Option<SchedulerKind>> =
        if schedulers.is_empty() { vec![None] } else { schedulers.iter().copied().map(Some).collect() };
    let mut points = Vec::new();
    for kind in kinds {
        for v in values {
            let mut d = doc.clone();
            d.remove("sweep");
            if let Some(k) = kind {
                d.insert("scheduler".into(), Value::String(k.as_str().into()));
            }
            set_path(&mut d, axis, v.clone()).map_err(|e| bad(format!("axis: {e}")))?;
            let config = ExperimentConfig::from_table(d, &base_dir, origin)?;
            points.push(Point { value: value_label(v), config });
        }
    }
    Ok(points)
}

fn compare_values(a: &str, b: &str) -> Ordering {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x.total_cmp(&y),
        _ => a.cmp(b),
    }
}

/// Sort rows by axis value (numerically when both parse), then scheduler.
pub fn sort_rows(rows: &mut [SummaryRow]) {
    rows.sort_by(|a, b| compare_values(&a.value, &b.value).then_with(|| a.scheduler.cmp(&b.scheduler)));
}

/// Run every point on `jobs` worker threads and return sorted summaries.
pub fn run_points(axis: &str, points: &[Point], jobs: usize) -> Result<Vec<SummaryRow>, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    let results: Vec<Result<SummaryRow, CliError>> = pool.install(|| {
        points
            .par_iter()
            .map(|p| {
                let mut row = run(&p.config)?.summary;
                row.axis = axis.to_string();
                row.value = p.value.clone();
                Ok(row)
            })
            .collect()
    });
    let mut rows = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    sort_rows(&mut rows);
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_values_sort_numerically() {
        let mk = |v: &str, s: &str| {
            let mut r = SummaryRow::new(s, 0, &feather_core::Metrics::from_records(&[], &[], 0, 0));
            r.value = v.into();
            r
        };
        let mut rows = vec![mk("100", "fcfs"), mk("5", "lpm"), mk("20", "fcfs"), mk("5", "fcfs")];
        sort_rows(&mut rows);
        let got: Vec<(&str, &str)> = rows.iter().map(|r| (r.value.as_str(), r.scheduler.as_str())).collect();
        assert_eq!(got, [("5", "fcfs"), ("5", "lpm"), ("20", "fcfs"), ("100", "fcfs")]);
    }
}
