//! Experiment records: a configuration run in an environment, plus the
//! aggregated metric values it produced.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::metric::MetricRegistry;

/// Flag marking a model that cannot produce class probabilities.
pub const FLAG_NO_PROBABILITIES: &str = "no_probabilities";

/// Scalar hyperparameter value. Stored for provenance only, never interpreted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HyperValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

impl fmt::Display for HyperValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HyperValue::Bool(b) => write!(f, "{b}"),
            HyperValue::Int(i) => write!(f, "{i}"),
            HyperValue::Float(x) => write!(f, "{x}"),
            HyperValue::Str(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub task: String,
    pub dataset: String,
    pub method: String,
    #[serde(default)]
    pub hyperparameters: BTreeMap<String, HyperValue>,
    /// Number of instances in the dataset; used only to order report tables.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_size: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub id: String,
    #[serde(default)]
    pub hardware: String,
    #[serde(default)]
    pub software: String,
    /// Grid carbon intensity in gCO2/kWh.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_mix: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub id: String,
    pub configuration: Configuration,
    pub environment: Environment,
    pub values: BTreeMap<String, f64>,
    #[serde(default)]
    pub flags: BTreeSet<String>,
}

impl ExperimentRecord {
    pub fn value(&self, key: &str) -> Option<f64> {
        self.values.get(key).copied()
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.flags.contains(flag)
    }

    pub fn dataset(&self) -> &str {
        &self.configuration.dataset
    }

    pub fn method(&self) -> &str {
        &self.configuration.method
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    UnknownMetric { key: String, value: f64 },
    NonPositiveValue { key: String, value: f64 },
    NonFiniteValue { key: String, value: f64 },
    MissingMetric { key: String },
    EmptyField { field: &'static str },
    NegativeEnergyMix { value: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnknownMetric { key, value } => {
                write!(f, "unknown metric `{key}` (value {value})")
            }
            Violation::NonPositiveValue { key, value } => {
                write!(f, "non-positive value for `{key}`: {value}")
            }
            Violation::NonFiniteValue { key, value } => {
                write!(f, "non-finite value for `{key}`: {value}")
            }
            Violation::MissingMetric { key } => write!(f, "missing required metric `{key}`"),
            Violation::EmptyField { field } => write!(f, "`{field}` must not be empty"),
            Violation::NegativeEnergyMix { value } => {
                write!(f, "energy mix must be non-negative, got {value}")
            }
        }
    }
}

/// Checks a record against the registry and the record invariants, returning
/// every violation found.
pub fn validate_record(
    record: &ExperimentRecord,
    registry: &MetricRegistry,
) -> Result<(), Vec<Violation>> {
    let mut violations = Vec::new();

    let cfg = &record.configuration;
    for (field, value) in [
        ("id", &record.id),
        ("configuration.task", &cfg.task),
        ("configuration.dataset", &cfg.dataset),
        ("configuration.method", &cfg.method),
        ("environment.id", &record.environment.id),
    ] {
        if value.trim().is_empty() {
            violations.push(Violation::EmptyField { field });
        }
    }
    if let Some(mix) = record.environment.energy_mix {
        if mix.is_nan() || mix < 0.0 {
            violations.push(Violation::NegativeEnergyMix { value: mix });
        }
    }

    for (key, &value) in &record.values {
        if !registry.contains(key) {
            violations.push(Violation::UnknownMetric {
                key: key.clone(),
                value,
            });
        } else if !value.is_finite() {
            violations.push(Violation::NonFiniteValue {
                key: key.clone(),
                value,
            });
        } else if value <= 0.0 {
            violations.push(Violation::NonPositiveValue {
                key: key.clone(),
                value,
            });
        }
    }
    for m in registry.metrics() {
        if !m.optional && !record.values.contains_key(&m.key) {
            violations.push(Violation::MissingMetric { key: m.key.clone() });
        }
    }

    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}
