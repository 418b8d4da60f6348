//! Metric definitions and the weighted metric registry.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TOP1_ACCURACY: &str = "top1_accuracy";
pub const TOP5_ACCURACY: &str = "top5_accuracy";
pub const F1_SCORE: &str = "f1_score";
pub const FLOPS: &str = "flops";
pub const PARAMETERS: &str = "parameters";
pub const MODEL_SIZE: &str = "model_size_bytes";
pub const POWER_DRAW: &str = "power_draw";
pub const RUNNING_TIME: &str = "running_time";
pub const EMISSIONS: &str = "emissions_g";

/// Group sums closer to one than this are left untouched by normalization,
/// which keeps `normalize_weights` exactly idempotent.
const NORMALIZED_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("duplicate metric key `{0}`")]
    DuplicateKey(String),
    #[error("metric `{key}` has invalid weight {weight}")]
    InvalidWeight { key: String, weight: f64 },
    #[error("metric group `{0}` has no weighted metrics")]
    EmptyGroup(MetricGroup),
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
    #[error("metric key must not be empty")]
    EmptyKey,
    #[error("invalid registry file: {0}")]
    Parse(String),
    #[error("cannot read registry file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricGroup {
    Complexity,
    Quality,
    Resources,
}

impl MetricGroup {
    pub const ALL: [MetricGroup; 3] = [
        MetricGroup::Complexity,
        MetricGroup::Quality,
        MetricGroup::Resources,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricGroup::Complexity => "complexity",
            MetricGroup::Quality => "quality",
            MetricGroup::Resources => "resources",
        }
    }
}

impl fmt::Display for MetricGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Whether larger measured values are an improvement (`+1`) or a
/// deterioration (`-1`). Serialized as the bare integer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Direction {
    HigherIsBetter,
    LowerIsBetter,
}

impl Direction {
    pub fn sign(self) -> i8 {
        match self {
            Direction::HigherIsBetter => 1,
            Direction::LowerIsBetter => -1,
        }
    }
}

impl TryFrom<i8> for Direction {
    type Error = String;

    fn try_from(value: i8) -> Result<Self, Self::Error> {
        match value {
            1 => Ok(Direction::HigherIsBetter),
            -1 => Ok(Direction::LowerIsBetter),
            other => Err(format!("direction must be +1 or -1, got {other}")),
        }
    }
}

impl From<Direction> for i8 {
    fn from(d: Direction) -> i8 {
        d.sign()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDefinition {
    pub key: String,
    #[serde(default)]
    pub display_name: String,
    pub group: MetricGroup,
    pub direction: Direction,
    #[serde(default)]
    pub unit: String,
    pub weight: f64,
    /// Optional metrics may be absent from a log without failing ingestion.
    #[serde(default)]
    pub optional: bool,
}

impl MetricDefinition {
    pub fn new(
        key: &str,
        display_name: &str,
        group: MetricGroup,
        direction: Direction,
        unit: &str,
        weight: f64,
    ) -> Self {
        Self {
            key: key.to_owned(),
            display_name: display_name.to_owned(),
            group,
            direction,
            unit: unit.to_owned(),
            weight,
            optional: false,
        }
    }

    pub fn optional(mut self) -> Self {
        self.optional = true;
        self
    }

    pub fn label(&self) -> &str {
        if self.display_name.is_empty() {
            &self.key
        } else {
            &self.display_name
        }
    }
}

/// Ordered collection of metric definitions with unique keys.
///
/// Weights are stored as given; [`MetricRegistry::normalize_weights`] returns
/// a copy in which the weights of every group sum to one. Zero weights are
/// allowed (the metric is rated but ignored by the compound rating), negative
/// or non-finite weights are not.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRegistry {
    metrics: Vec<MetricDefinition>,
}

#[derive(Deserialize)]
struct RegistryFile {
    metrics: Vec<MetricDefinition>,
}

impl MetricRegistry {
    pub fn new(metrics: Vec<MetricDefinition>) -> Result<Self, RegistryError> {
        let mut seen = BTreeSet::new();
        for m in &metrics {
            if m.key.is_empty() {
                return Err(RegistryError::EmptyKey);
            }
            if !seen.insert(m.key.as_str()) {
                return Err(RegistryError::DuplicateKey(m.key.clone()));
            }
            if !m.weight.is_finite() || m.weight < 0.0 {
                return Err(RegistryError::InvalidWeight {
                    key: m.key.clone(),
                    weight: m.weight,
                });
            }
        }
        Ok(Self { metrics })
    }

    pub fn from_toml_str(text: &str) -> Result<Self, RegistryError> {
        let file: RegistryFile =
            toml::from_str(text).map_err(|e| RegistryError::Parse(e.to_string()))?;
        Self::new(file.metrics)
    }

    pub fn from_path(path: &Path) -> Result<Self, RegistryError> {
        let text = std::fs::read_to_string(path).map_err(|e| RegistryError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        #[derive(Serialize)]
        struct Out<'a> {
            metrics: &'a [MetricDefinition],
        }
        toml::to_string(&Out {
            metrics: &self.metrics,
        })
        .expect("registry serializes to toml")
    }

    pub fn metrics(&self) -> &[MetricDefinition] {
        &self.metrics
    }

    pub fn len(&self) -> usize {
        self.metrics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.metrics.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&MetricDefinition> {
        self.metrics.iter().find(|m| m.key == key)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.get(key).is_some()
    }

    /// Groups that have at least one metric, in canonical order.
    pub fn groups(&self) -> Vec<MetricGroup> {
        let present: BTreeSet<MetricGroup> = self.metrics.iter().map(|m| m.group).collect();
        present.into_iter().collect()
    }

    pub fn group_sum(&self, group: MetricGroup) -> f64 {
        self.metrics
            .iter()
            .filter(|m| m.group == group)
            .map(|m| m.weight)
            .sum()
    }

    /// Divides each weight by its group's total. Groups already summing to one
    /// are left bit-for-bit unchanged.
    pub fn normalize_weights(&self) -> Result<Self, RegistryError> {
        let mut sums: BTreeMap<MetricGroup, f64> = BTreeMap::new();
        for m in &self.metrics {
            *sums.entry(m.group).or_default() += m.weight;
        }
        for (group, sum) in &sums {
            if sum.is_nan() || *sum <= 0.0 {
                return Err(RegistryError::EmptyGroup(*group));
            }
        }
        let metrics = self
            .metrics
            .iter()
            .map(|m| {
                let sum = sums[&m.group];
                let mut m = m.clone();
                if (sum - 1.0).abs() > NORMALIZED_EPS {
                    m.weight /= sum;
                }
                m
            })
            .collect();
        Ok(Self { metrics })
    }

    /// The metric carrying the single highest weight, or `None` when the
    /// maximum is shared.
    pub fn highest_weighted(&self) -> Option<&MetricDefinition> {
        let max = self
            .metrics
            .iter()
            .map(|m| m.weight)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut top = self.metrics.iter().filter(|m| m.weight == max);
        let first = top.next()?;
        top.next().is_none().then_some(first)
    }

    /// Replaces raw weights for the given keys.
    pub fn with_weights(&self, overrides: &BTreeMap<String, f64>) -> Result<Self, RegistryError> {
        let mut metrics = self.metrics.clone();
        for (key, weight) in overrides {
            let m = metrics
                .iter_mut()
                .find(|m| &m.key == key)
                .ok_or_else(|| RegistryError::UnknownMetric(key.clone()))?;
            m.weight = *weight;
        }
        Self::new(metrics)
    }

    /// Adds the derived emissions metric (resources group, weight 0) unless a
    /// definition for it already exists.
    pub fn with_emissions(&self) -> Self {
        if self.contains(EMISSIONS) {
            return self.clone();
        }
        let mut metrics = self.metrics.clone();
        metrics.push(
            MetricDefinition::new(
                EMISSIONS,
                "CO2 emissions",
                MetricGroup::Resources,
                Direction::LowerIsBetter,
                "g",
                0.0,
            )
            .optional(),
        );
        Self { metrics }
    }
}

/// The built-in eight-metric registry, already normalized.
pub fn default_registry() -> MetricRegistry {
    use Direction::*;
    use MetricGroup::*;
    let metrics = vec![
        MetricDefinition::new(TOP1_ACCURACY, "Top-1 accuracy", Quality, HigherIsBetter, "", 0.4),
        MetricDefinition::new(TOP5_ACCURACY, "Top-5 accuracy", Quality, HigherIsBetter, "", 0.2),
        MetricDefinition::new(F1_SCORE, "F1 score", Quality, HigherIsBetter, "", 0.4),
        MetricDefinition::new(FLOPS, "FLOPs", Complexity, LowerIsBetter, "FLOP", 0.5),
        MetricDefinition::new(PARAMETERS, "Parameters", Complexity, LowerIsBetter, "", 0.25),
        MetricDefinition::new(MODEL_SIZE, "Model size", Complexity, LowerIsBetter, "B", 0.25),
        MetricDefinition::new(POWER_DRAW, "Power draw", Resources, LowerIsBetter, "W", 0.7),
        MetricDefinition::new(RUNNING_TIME, "Running time", Resources, LowerIsBetter, "s", 0.3),
    ];
    MetricRegistry::new(metrics)
        .and_then(|r| r.normalize_weights())
        .expect("default registry is valid")
}
