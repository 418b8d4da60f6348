use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{Histogram, ReportBundle, ReportError, TableRow};
use crate::numfmt::{format_index, format_value};
use crate::rating::Rating;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(ReportError::UnsupportedFormat(other.to_owned())),
        }
    }
}

/// Pretty JSON with a trailing newline. Field order follows the struct
/// definitions and every map is ordered, so equal bundles give equal bytes.
pub fn to_canonical_json(bundle: &ReportBundle) -> String {
    let mut s = serde_json::to_string_pretty(bundle).expect("bundle serializes");
    s.push('\n');
    s
}

pub fn parse_bundle(text: &str) -> Result<ReportBundle, ReportError> {
    Ok(serde_json::from_str(text)?)
}

/// Writes the bundle. JSON goes to `path` itself; CSV treats `path` as a
/// directory and writes one file per table.
pub fn export_report(
    bundle: &ReportBundle,
    format: ReportFormat,
    path: &Path,
) -> Result<Vec<PathBuf>, ReportError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ReportError::Io { path, source }
    };
    match format {
        ReportFormat::Json => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(io(parent))?;
            }
            fs::write(path, to_canonical_json(bundle)).map_err(io(path))?;
            Ok(vec![path.to_path_buf()])
        }
        ReportFormat::Csv => {
            fs::create_dir_all(path).map_err(io(path))?;
            let files = [
                ("experiments.csv", experiments_csv(bundle)?),
                ("best_per_dataset.csv", best_csv(bundle)?),
                ("scatter.csv", scatter_csv(bundle)?),
                (
                    "distribution_by_dataset.csv",
                    histogram_csv("dataset", &bundle.distributions.by_dataset)?,
                ),
                (
                    "distribution_by_method.csv",
                    histogram_csv("method", &bundle.distributions.by_method)?,
                ),
            ];
            let mut written = Vec::new();
            for (name, bytes) in files {
                let file = path.join(name);
                fs::write(&file, bytes).map_err(io(&file))?;
                written.push(file);
            }
            Ok(written)
        }
    }
}

fn metric_keys(bundle: &ReportBundle) -> Vec<&str> {
    bundle.scheme.metrics.iter().map(|m| m.key.as_str()).collect()
}

fn metric_header(keys: &[&str]) -> Vec<String> {
    keys.iter()
        .flat_map(|k| [format!("{k}_value"), format!("{k}_index"), format!("{k}_rating")])
        .collect()
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>, ReportError> {
    w.into_inner()
        .map_err(|e| ReportError::Csv(csv::Error::from(e.into_error())))
}

fn experiments_csv(bundle: &ReportBundle) -> Result<Vec<u8>, ReportError> {
    let keys = metric_keys(bundle);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["experiment", "task", "dataset", "method", "environment", "compound"]
        .map(String::from)
        .to_vec();
    header.extend(metric_header(&keys));
    w.write_record(&header)?;
    for r in &bundle.experiments {
        let cfg = &r.record.configuration;
        let mut row = vec![
            r.record.id.clone(),
            cfg.task.clone(),
            cfg.dataset.clone(),
            cfg.method.clone(),
            r.record.environment.id.clone(),
            r.compound.to_string(),
        ];
        for k in &keys {
            row.push(r.record.value(k).map(format_value).unwrap_or_default());
            row.push(r.index(k).map(format_index).unwrap_or_default());
            row.push(
                r.metric_ratings
                    .get(*k)
                    .map(Rating::to_string)
                    .unwrap_or_default(),
            );
        }
        w.write_record(&row)?;
    }
    finish(w)
}

fn best_csv(bundle: &ReportBundle) -> Result<Vec<u8>, ReportError> {
    let keys = metric_keys(bundle);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = [
        "dataset",
        "dataset_size",
        "method",
        "experiment",
        "environment",
        "compound",
    ]
    .map(String::from)
    .to_vec();
    header.extend(metric_header(&keys));
    w.write_record(&header)?;
    for row in &bundle.best_per_dataset {
        w.write_record(best_row(row, &keys))?;
    }
    finish(w)
}

fn best_row(row: &TableRow, keys: &[&str]) -> Vec<String> {
    let mut out = vec![
        row.dataset.clone(),
        row.dataset_size.map(|s| s.to_string()).unwrap_or_default(),
        row.method.clone(),
        row.experiment.clone(),
        row.environment.clone(),
        row.compound.to_string(),
    ];
    for k in keys {
        match row.metrics.iter().find(|c| c.key == *k) {
            Some(c) => out.extend([format_value(c.value), format_index(c.index), c.rating.to_string()]),
            None => out.extend([String::new(), String::new(), String::new()]),
        }
    }
    out
}

fn scatter_csv(bundle: &ReportBundle) -> Result<Vec<u8>, ReportError> {
    let s = &bundle.scatter;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "experiment",
        "dataset",
        "method",
        "environment",
        &format!("{}_index", s.x_key),
        &format!("{}_index", s.y_key),
        &format!("{}_value", s.x_key),
        &format!("{}_value", s.y_key),
        "compound",
        "reference",
    ])?;
    for p in &s.points {
        w.write_record([
            p.experiment.as_str(),
            &p.dataset,
            &p.method,
            &p.environment,
            &format_index(p.x),
            &format_index(p.y),
            &format_value(p.x_value),
            &format_value(p.y_value),
            &p.compound.to_string(),
            if p.reference { "true" } else { "false" },
        ])?;
    }
    finish(w)
}

fn histogram_csv(
    key: &str,
    hist: &std::collections::BTreeMap<String, Histogram>,
) -> Result<Vec<u8>, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([key, "A", "B", "C", "D", "E"])?;
    for (name, h) in hist {
        let mut row = vec![name.clone()];
        row.extend(Rating::ALL.iter().map(|r| h.get(r).copied().unwrap_or(0).to_string()));
        w.write_record(&row)?;
    }
    finish(w)
}
