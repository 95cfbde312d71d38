use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::{ExperimentError, RunOutput, TrialRecord};
use crate::geometry::format_f64;

/// One aggregate of `summary.csv`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub scheme: String,
    pub radius: f64,
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (0 for a single value).
    pub std: f64,
}

impl SummaryRow {
    pub fn from_values(scheme: &str, radius: f64, metric: &str, values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self {
            scheme: scheme.to_string(),
            radius,
            metric: metric.to_string(),
            n,
            mean,
            std,
        }
    }
}

/// Mean and standard deviation of every metric per (scheme, radius), over
/// rows with status `ok`, in row order.
pub fn summarize(records: &[TrialRecord]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, u64, String), Vec<f64>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_ok()) {
        for (name, &v) in &r.metrics {
            groups
                .entry((r.scheme.clone(), r.radius.to_bits(), name.clone()))
                .or_default()
                .push(v);
        }
    }
    groups
        .into_iter()
        .map(|((scheme, radius, metric), values)| {
            SummaryRow::from_values(&scheme, f64::from_bits(radius), &metric, &values)
        })
        .collect()
}

/// Share of pairs in which `better` has a strictly smaller `metric` than
/// `worse`, reported as scheme `"{better}_vs_{worse}"`, metric
/// `"{metric}_win"`. The std column is that of the 0/1 indicator.
pub(crate) fn paired_win_rate(records: &[TrialRecord], better: &str, worse: &str, metric: &str) -> Vec<SummaryRow> {
    let mut by_pair: BTreeMap<(u64, usize), (Option<f64>, Option<f64>)> = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_ok()) {
        let slot = by_pair.entry((r.radius.to_bits(), r.pair)).or_default();
        if r.scheme == better {
            slot.0 = r.metric(metric);
        } else if r.scheme == worse {
            slot.1 = r.metric(metric);
        }
    }
    let mut per_radius: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for ((radius, _), pair) in by_pair {
        if let (Some(b), Some(w)) = pair {
            per_radius
                .entry(radius)
                .or_default()
                .push(if b < w { 1.0 } else { 0.0 });
        }
    }
    per_radius
        .into_iter()
        .map(|(radius, wins)| {
            SummaryRow::from_values(
                &format!("{better}_vs_{worse}"),
                f64::from_bits(radius),
                &format!("{metric}_win"),
                &wins,
            )
        })
        .collect()
}

pub fn format_metric(v: f64) -> String {
    format_f64(v)
}

fn write_trials<W: Write>(records: &[TrialRecord], out: W) -> Result<(), ExperimentError> {
    let mut names: Vec<&str> = records
        .iter()
        .flat_map(|r| r.metrics.keys().map(String::as_str))
        .collect();
    names.sort_unstable();
    names.dedup();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        "trial",
        "seed_master",
        "seed_stream",
        "pair",
        "scheme",
        "radius",
        "status",
    ];
    header.extend(&names);
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.trial.to_string(),
            r.seed.master.to_string(),
            r.seed.stream.to_string(),
            r.pair.to_string(),
            r.scheme.clone(),
            format_f64(r.radius),
            r.status.clone(),
        ];
        row.extend(names.iter().map(|n| r.metric(n).map(format_f64).unwrap_or_default()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_summary<W: Write>(rows: &[SummaryRow], out: W) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scheme", "radius", "metric", "n", "mean", "std"])?;
    for r in rows {
        w.write_record([
            r.scheme.clone(),
            format_f64(r.radius),
            r.metric.clone(),
            r.n.to_string(),
            format_f64(r.mean),
            format_f64(r.std),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `trials.csv`, `summary.csv` and `meta.json` into `dir`.
pub fn write_outputs(output: &RunOutput, dir: impl AsRef<Path>) -> Result<(), ExperimentError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_trials(
        &output.records,
        std::io::BufWriter::new(std::fs::File::create(dir.join("trials.csv"))?),
    )?;
    write_summary(
        &output.summary,
        std::io::BufWriter::new(std::fs::File::create(dir.join("summary.csv"))?),
    )?;
    let mut meta = serde_json::to_string_pretty(&output.meta)?;
    meta.push('\n');
    std::fs::write(dir.join("meta.json"), meta)?;
    Ok(())
}
