//! Log documents and their reduction to experiment records.
//!
//! A log is a single JSON document (or one document per line in `.jsonl`
//! files) with an explicit `schema_version`. Each metric carries a list of
//! samples; quality metrics keep their last sample and every other group is
//! averaged.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

use crate::experiment::{
    validate_record, Configuration, Environment, ExperimentRecord, Violation,
    FLAG_NO_PROBABILITIES,
};
use crate::metric::{
    MetricGroup, MetricRegistry, EMISSIONS, POWER_DRAW, RUNNING_TIME, TOP1_ACCURACY,
    TOP5_ACCURACY,
};

pub const SCHEMA_VERSION: u64 = 1;

const JOULES_PER_KWH: f64 = 3.6e6;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed log document: {0}")]
    Schema(String),
    #[error("unsupported schema_version {0} (supported: {SCHEMA_VERSION})")]
    Version(u64),
    #[error("no samples for required metric `{0}`")]
    Aggregation(String),
    #[error("`{TOP5_ACCURACY}` missing and record is not flagged `{FLAG_NO_PROBABILITIES}`")]
    MissingMetric(String),
    #[error("experiment `{id}` is invalid: {}", join_violations(.violations))]
    Invalid {
        id: String,
        violations: Vec<Violation>,
    },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no experiment records could be loaded ({} file error(s))", .errors.len())]
    CorpusEmpty { errors: Vec<(PathBuf, IngestError)> },
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawSample")]
pub struct Sample {
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<f64>,
}

impl Sample {
    pub fn new(value: f64) -> Self {
        Self {
            value,
            timestamp: None,
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawSample {
    Bare(f64),
    Full {
        value: f64,
        #[serde(default)]
        timestamp: Option<f64>,
    },
}

impl From<RawSample> for Sample {
    fn from(raw: RawSample) -> Self {
        match raw {
            RawSample::Bare(value) => Sample {
                value,
                timestamp: None,
            },
            RawSample::Full { value, timestamp } => Sample { value, timestamp },
        }
    }
}

/// One experiment log as stored on disk. Unknown top-level fields are kept in
/// `extra` and written back unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogDocument {
    pub schema_version: u64,
    pub id: String,
    pub configuration: Configuration,
    pub environment: Environment,
    #[serde(default)]
    pub measurements: BTreeMap<String, Vec<Sample>>,
    #[serde(default)]
    pub flags: BTreeSet<String>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl LogDocument {
    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("log document serializes");
        s.push('\n');
        s
    }
}

pub fn parse_log(bytes: &[u8]) -> Result<LogDocument, IngestError> {
    let value: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| IngestError::Schema(e.to_string()))?;
    parse_value(value)
}

fn parse_value(value: serde_json::Value) -> Result<LogDocument, IngestError> {
    let version = value
        .get("schema_version")
        .ok_or_else(|| IngestError::Schema("missing `schema_version`".into()))?
        .as_u64()
        .ok_or_else(|| IngestError::Schema("`schema_version` must be a positive integer".into()))?;
    if version != SCHEMA_VERSION {
        return Err(IngestError::Version(version));
    }
    let doc: LogDocument =
        serde_json::from_value(value).map_err(|e| IngestError::Schema(e.to_string()))?;
    if let Some((key, _)) = doc.measurements.iter().find(|(_, s)| s.is_empty()) {
        return Err(IngestError::Schema(format!("metric `{key}` has no samples")));
    }
    Ok(doc)
}

/// Parses every non-blank line of a `.jsonl` file as a document.
pub fn parse_log_lines(bytes: &[u8]) -> Result<Vec<LogDocument>, IngestError> {
    let text = std::str::from_utf8(bytes).map_err(|e| IngestError::Schema(e.to_string()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| parse_log(l.as_bytes()))
        .collect()
}

fn mean(samples: &[Sample]) -> f64 {
    // Sorting first makes the sum independent of sample order.
    let mut values: Vec<f64> = samples.iter().map(|s| s.value).collect();
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

/// Reduces a document's samples to one value per metric, fills the top-5
/// gap where allowed and validates the result.
pub fn aggregate(doc: &LogDocument, registry: &MetricRegistry) -> Result<ExperimentRecord, IngestError> {
    let mut values = BTreeMap::new();
    for (key, samples) in &doc.measurements {
        let Some(last) = samples.last() else {
            return Err(IngestError::Aggregation(key.clone()));
        };
        let value = match registry.get(key).map(|m| m.group) {
            Some(MetricGroup::Quality) => last.value,
            _ => mean(samples),
        };
        values.insert(key.clone(), value);
    }

    let mut record = ExperimentRecord {
        id: doc.id.clone(),
        configuration: doc.configuration.clone(),
        environment: doc.environment.clone(),
        values,
        flags: doc.flags.clone(),
    };

    if registry.contains(TOP5_ACCURACY) && !record.values.contains_key(TOP5_ACCURACY) {
        record = apply_top5_fallback(record)?;
    }
    for m in registry.metrics() {
        if !m.optional && !record.values.contains_key(&m.key) {
            return Err(IngestError::Aggregation(m.key.clone()));
        }
    }

    validate_record(&record, registry).map_err(|violations| IngestError::Invalid {
        id: record.id.clone(),
        violations,
    })?;
    Ok(record)
}

/// Substitutes top-1 accuracy for a missing top-5 accuracy on models flagged
/// as having no class probabilities.
pub fn apply_top5_fallback(mut record: ExperimentRecord) -> Result<ExperimentRecord, IngestError> {
    if record.values.contains_key(TOP5_ACCURACY) {
        return Ok(record);
    }
    if !record.has_flag(FLAG_NO_PROBABILITIES) {
        return Err(IngestError::MissingMetric(TOP5_ACCURACY.into()));
    }
    if let Some(top1) = record.value(TOP1_ACCURACY) {
        record.values.insert(TOP5_ACCURACY.into(), top1);
    }
    Ok(record)
}

/// Adds `emissions_g` from power draw, running time and the environment's
/// energy mix. Records without an energy mix are returned unchanged.
pub fn derive_emissions(mut record: ExperimentRecord) -> ExperimentRecord {
    let Some(mix) = record.environment.energy_mix else {
        return record;
    };
    let (Some(power), Some(time)) = (record.value(POWER_DRAW), record.value(RUNNING_TIME)) else {
        return record;
    };
    let grams = power * time / JOULES_PER_KWH * mix;
    if grams > 0.0 && grams.is_finite() {
        record.values.insert(EMISSIONS.into(), grams);
    } else {
        warn!("{}: skipping emissions, derived value {grams} is not positive", record.id);
    }
    record
}

/// Result of loading a set of log files.
#[derive(Debug, Default)]
pub struct Corpus {
    pub records: Vec<ExperimentRecord>,
    pub warnings: Vec<String>,
    pub errors: Vec<(PathBuf, IngestError)>,
}

impl Corpus {
    /// Whether any record carries a derived emissions value.
    pub fn has_emissions(&self) -> bool {
        self.records.iter().any(|r| r.values.contains_key(EMISSIONS))
    }
}

fn collect_files(paths: &[PathBuf]) -> (Vec<PathBuf>, Vec<(PathBuf, IngestError)>) {
    let mut files = Vec::new();
    let mut errors = Vec::new();
    for path in paths {
        if path.is_dir() {
            for entry in WalkDir::new(path).sort_by_file_name() {
                match entry {
                    Ok(e) if e.file_type().is_file() && is_log_file(e.path()) => {
                        files.push(e.into_path())
                    }
                    Ok(_) => {}
                    Err(e) => errors.push((
                        path.clone(),
                        IngestError::Io {
                            path: e.path().unwrap_or(path).to_path_buf(),
                            source: e.into(),
                        },
                    )),
                }
            }
        } else {
            files.push(path.clone());
        }
    }
    (files, errors)
}

fn is_log_file(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("json") | Some("jsonl")
    )
}

fn load_file(path: &Path) -> Result<Vec<LogDocument>, IngestError> {
    let bytes = fs::read(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if path.extension().and_then(|e| e.to_str()) == Some("jsonl") {
        parse_log_lines(&bytes)
    } else {
        parse_log(&bytes).map(|d| vec![d])
    }
}

/// Loads, aggregates and deduplicates every log under `paths`.
///
/// Files are visited in path order; a later record with an already seen id
/// replaces the earlier one. The output is ordered by
/// (dataset, method, environment, id).
pub fn load_corpus(paths: &[PathBuf], registry: &MetricRegistry) -> Result<Corpus, IngestError> {
    let (files, mut errors) = collect_files(paths);
    let mut warnings = Vec::new();
    let mut by_id: BTreeMap<String, (PathBuf, ExperimentRecord)> = BTreeMap::new();

    for file in files {
        let docs = match load_file(&file) {
            Ok(docs) => docs,
            Err(e) => {
                errors.push((file, e));
                continue;
            }
        };
        for doc in docs {
            match aggregate(&doc, registry) {
                Ok(record) => {
                    let record = derive_emissions(record);
                    if let Some((prev, _)) = by_id.get(&record.id) {
                        let msg = format!(
                            "duplicate experiment id `{}`: {} replaces {}",
                            record.id,
                            file.display(),
                            prev.display()
                        );
                        warn!("{msg}");
                        warnings.push(msg);
                    }
                    by_id.insert(record.id.clone(), (file.clone(), record));
                }
                Err(e) => errors.push((file.clone(), e)),
            }
        }
    }

    if by_id.is_empty() {
        return Err(IngestError::CorpusEmpty { errors });
    }
    let mut records: Vec<ExperimentRecord> = by_id.into_values().map(|(_, r)| r).collect();
    records.sort_by(|a, b| corpus_order(a).cmp(&corpus_order(b)));
    Ok(Corpus {
        records,
        warnings,
        errors,
    })
}

fn corpus_order(r: &ExperimentRecord) -> (&str, &str, &str, &str) {
    (
        &r.configuration.dataset,
        &r.configuration.method,
        &r.environment.id,
        &r.id,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{default_registry, F1_SCORE};

    fn doc_json(measurements: &str, flags: &str) -> String {
        format!(
            r#"{{
              "schema_version": 1,
              "id": "covertype_lr",
              "configuration": {{"task": "inference", "dataset": "covertype", "method": "LR",
                                 "hyperparameters": {{"C": 0.5}}}},
              "environment": {{"id": "ws-1", "hardware": "x86", "software": "py"}},
              "measurements": {{ {measurements} }},
              "flags": [{flags}],
              "notes": {{"operator": "ci"}}
            }}"#
        )
    }

    const ALL: &str = r#""top1_accuracy": [0.5, 0.83], "top5_accuracy": [0.95], "f1_score": [0.91],
        "flops": [1000], "parameters": [55], "model_size_bytes": [440],
        "power_draw": [{"value": 10.0, "timestamp": 0.0}, {"value": 14.0, "timestamp": 0.1}],
        "running_time": [0.25]"#;

    #[test]
    fn parse_keeps_unknown_fields() {
        let doc = parse_log(doc_json(ALL, "").as_bytes()).unwrap();
        assert_eq!(doc.measurements.len(), 8);
        assert!(doc.extra.contains_key("notes"));
        let again = parse_log(doc.to_json_pretty().as_bytes()).unwrap();
        assert_eq!(again, doc);
    }

    #[test]
    fn parse_errors() {
        let text = doc_json(ALL, "");
        assert!(matches!(
            parse_log(&text.as_bytes()[..text.len() / 2]),
            Err(IngestError::Schema(_))
        ));
        let v999 = text.replace("\"schema_version\": 1", "\"schema_version\": 999");
        assert!(matches!(parse_log(v999.as_bytes()), Err(IngestError::Version(999))));
        let empty = doc_json(r#""f1_score": []"#, "");
        assert!(matches!(parse_log(empty.as_bytes()), Err(IngestError::Schema(_))));
        let no_version = text.replace("\"schema_version\": 1,", "");
        assert!(matches!(parse_log(no_version.as_bytes()), Err(IngestError::Schema(_))));
    }

    #[test]
    fn aggregate_reduces_by_group() {
        let doc = parse_log(doc_json(ALL, "").as_bytes()).unwrap();
        let r = aggregate(&doc, &default_registry()).unwrap();
        assert_eq!(r.value(POWER_DRAW), Some(12.0));
        assert_eq!(r.value(F1_SCORE), Some(0.91));
        assert_eq!(r.value(TOP1_ACCURACY), Some(0.83));
    }

    #[test]
    fn aggregate_missing_running_time() {
        let mut doc = parse_log(doc_json(ALL, "").as_bytes()).unwrap();
        doc.measurements.remove(RUNNING_TIME);
        let err = aggregate(&doc, &default_registry()).unwrap_err();
        assert!(matches!(&err, IngestError::Aggregation(k) if k == RUNNING_TIME));
        assert_eq!(err.to_string(), "no samples for required metric `running_time`");
    }

    #[test]
    fn aggregate_rejects_zero_values() {
        let m = ALL.replace("\"parameters\": [55]", "\"parameters\": [0]");
        let doc = parse_log(doc_json(&m, "").as_bytes()).unwrap();
        assert!(matches!(
            aggregate(&doc, &default_registry()),
            Err(IngestError::Invalid { .. })
        ));
    }

    #[test]
    fn top5_fallback_rules() {
        let no_top5 = ALL.replace(r#""top5_accuracy": [0.95], "#, "");
        let flagged = parse_log(doc_json(&no_top5, "\"no_probabilities\"").as_bytes()).unwrap();
        let r = aggregate(&flagged, &default_registry()).unwrap();
        assert_eq!(r.value(TOP5_ACCURACY), Some(0.83));

        let unflagged = parse_log(doc_json(&no_top5, "").as_bytes()).unwrap();
        assert!(matches!(
            aggregate(&unflagged, &default_registry()),
            Err(IngestError::MissingMetric(_))
        ));

        let with_top5 = parse_log(doc_json(ALL, "\"no_probabilities\"").as_bytes()).unwrap();
        let r = aggregate(&with_top5, &default_registry()).unwrap();
        assert_eq!(r.value(TOP5_ACCURACY), Some(0.95));
    }

    #[test]
    fn emissions_from_energy_mix() {
        let doc = parse_log(doc_json(ALL, "").as_bytes()).unwrap();
        let mut r = aggregate(&doc, &default_registry()).unwrap();
        assert_eq!(derive_emissions(r.clone()), r);

        r.values.insert(POWER_DRAW.into(), 100.0);
        r.values.insert(RUNNING_TIME.into(), 36.0);
        r.environment.energy_mix = Some(400.0);
        let e = derive_emissions(r).value(EMISSIONS).unwrap();
        assert!((e - 0.4).abs() < 1e-12, "{e}");
    }

    #[test]
    fn bare_and_object_samples_are_equivalent() {
        let a: Vec<Sample> = serde_json::from_str("[1.5, {\"value\": 2.5}]").unwrap();
        assert_eq!(a, vec![Sample::new(1.5), Sample::new(2.5)]);
    }
}
