//! Executes plans and writes per-run and aggregated CSVs.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::path::{Path, PathBuf};

use ndnqos::metrics::{export_csv, fmt_pct, ExportError};
use ndnqos::sweep::run_batch_jobs;
use ndnqos::SimError;
use thiserror::Error;

use crate::plan::{ExperimentPlan, PlanPoint};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("run {slug} failed: {source}")]
    Sim {
        slug: String,
        #[source]
        source: SimError,
    },
    #[error("run {slug}: {source}")]
    Export {
        slug: String,
        #[source]
        source: ExportError,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {msg}")]
    Malformed { path: PathBuf, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub run_dirs: Vec<PathBuf>,
    pub aggregates: Vec<PathBuf>,
}

pub const AGG_SUCCESS_HEADER: [&str; 9] = [
    "config",
    "rank",
    "pit_size",
    "cs_size",
    "traffic",
    "runs",
    "mean_success_rate_pct",
    "min_success_rate_pct",
    "max_success_rate_pct",
];
pub const AGG_LOAD_HEADER: [&str; 9] = [
    "config",
    "minute",
    "runs",
    "mean_out_requests",
    "min_out_requests",
    "max_out_requests",
    "mean_in_responses",
    "min_in_responses",
    "max_in_responses",
];
pub const AGG_CACHE_HEADER: [&str; 7] = [
    "config",
    "cs_size",
    "strategy",
    "runs",
    "mean_hit_ratio_pct",
    "min_hit_ratio_pct",
    "max_hit_ratio_pct",
];

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Runs every plan point, writes `out/<slug>/*.csv`, then the aggregates.
pub fn run_plan(plan: &ExperimentPlan) -> Result<RunReport, RunError> {
    let points = plan.points();
    let params: Vec<_> = points.iter().map(|p| p.params.clone()).collect();
    let results = run_batch_jobs(&params, plan.jobs.unwrap_or_else(default_jobs));

    let mut report = RunReport::default();
    for (point, result) in points.iter().zip(results) {
        let log = result.map_err(|source| RunError::Sim {
            slug: point.slug.clone(),
            source,
        })?;
        let dir = plan.out_dir.join(&point.slug);
        export_csv(&log, &dir).map_err(|source| RunError::Export {
            slug: point.slug.clone(),
            source,
        })?;
        report.run_dirs.push(dir);
    }
    report.aggregates = aggregate(&plan.out_dir, &points)?;
    Ok(report)
}

#[derive(Debug, Default)]
struct Stat {
    values: Vec<f64>,
}

impl Stat {
    fn push(&mut self, v: f64) {
        self.values.push(v);
    }

    fn cells(&self) -> [String; 3] {
        let n = self.values.len().max(1) as f64;
        let mean = self.values.iter().sum::<f64>() / n;
        let min = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        [fmt_pct(mean), fmt_pct(min), fmt_pct(max)]
    }
}

fn read_rows(path: &Path) -> Result<Vec<csv::StringRecord>, RunError> {
    let wrap = |source| RunError::Csv {
        path: path.to_owned(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(wrap)?;
    reader.records().collect::<Result<_, _>>().map_err(wrap)
}

fn field<'a>(path: &Path, row: &'a csv::StringRecord, idx: usize) -> Result<&'a str, RunError> {
    row.get(idx).ok_or_else(|| RunError::Malformed {
        path: path.to_owned(),
        msg: format!("missing column {idx}"),
    })
}

fn number(path: &Path, row: &csv::StringRecord, idx: usize) -> Result<f64, RunError> {
    let cell = field(path, row, idx)?;
    cell.parse().map_err(|_| RunError::Malformed {
        path: path.to_owned(),
        msg: format!("`{cell}` is not a number"),
    })
}

fn write_rows(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), RunError> {
    let wrap = |source| RunError::Csv {
        path: path.to_owned(),
        source,
    };
    let file = File::create(path).map_err(|source| RunError::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file);
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        w.write_record(row).map_err(wrap)?;
    }
    w.flush().map_err(|source| RunError::Io {
        path: path.to_owned(),
        source,
    })
}

/// Mean, min and max over seeds of the per-run CSVs found under `out_dir`.
pub fn aggregate(out_dir: &Path, points: &[PlanPoint]) -> Result<Vec<PathBuf>, RunError> {
    fs::create_dir_all(out_dir).map_err(|source| RunError::Io {
        path: out_dir.to_owned(),
        source,
    })?;
    let mut success: BTreeMap<(String, u32, u64, u64, String), Stat> = BTreeMap::new();
    let mut load: BTreeMap<(String, u64), (Stat, Stat)> = BTreeMap::new();
    let mut hits: BTreeMap<(String, u64, String), Stat> = BTreeMap::new();

    for point in points {
        let dir = out_dir.join(&point.slug);

        let path = dir.join("success_by_rank.csv");
        for row in read_rows(&path)? {
            let key = (
                point.config.clone(),
                number(&path, &row, 0)? as u32,
                number(&path, &row, 1)? as u64,
                number(&path, &row, 2)? as u64,
                field(&path, &row, 3)?.to_owned(),
            );
            success.entry(key).or_default().push(number(&path, &row, 4)?);
        }

        let path = dir.join("gateway_load.csv");
        for row in read_rows(&path)? {
            let slot = load.entry((point.config.clone(), number(&path, &row, 0)? as u64)).or_default();
            slot.0.push(number(&path, &row, 1)?);
            slot.1.push(number(&path, &row, 2)?);
        }

        let path = dir.join("cache_hits.csv");
        for row in read_rows(&path)? {
            let key = (
                point.config.clone(),
                number(&path, &row, 0)? as u64,
                field(&path, &row, 1)?.to_owned(),
            );
            hits.entry(key).or_default().push(number(&path, &row, 2)?);
        }
    }

    let mut written = Vec::new();

    let rows = success
        .into_iter()
        .map(|((config, rank, pit, cs, traffic), stat)| {
            let mut row = vec![
                config,
                rank.to_string(),
                pit.to_string(),
                cs.to_string(),
                traffic,
                stat.values.len().to_string(),
            ];
            row.extend(stat.cells());
            row
        })
        .collect();
    let path = out_dir.join("success_by_rank.csv");
    write_rows(&path, &AGG_SUCCESS_HEADER, rows)?;
    written.push(path);

    let rows = load
        .into_iter()
        .map(|((config, minute), (out, inc))| {
            let mut row = vec![config, minute.to_string(), out.values.len().to_string()];
            row.extend(out.cells());
            row.extend(inc.cells());
            row
        })
        .collect();
    let path = out_dir.join("gateway_load.csv");
    write_rows(&path, &AGG_LOAD_HEADER, rows)?;
    written.push(path);

    let rows = hits
        .into_iter()
        .map(|((config, cs, strategy), stat)| {
            let mut row = vec![config, cs.to_string(), strategy, stat.values.len().to_string()];
            row.extend(stat.cells());
            row
        })
        .collect();
    let path = out_dir.join("cache_hits.csv");
    write_rows(&path, &AGG_CACHE_HEADER, rows)?;
    written.push(path);

    Ok(written)
}
