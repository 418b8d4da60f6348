use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Boundaries, MedianTie, RatingError};
use crate::experiment::ExperimentRecord;
use crate::metric::{Direction, MetricGroup, MetricRegistry, RegistryError, EMISSIONS};

/// Experiments are only comparable within one (task, dataset, environment).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupKey {
    pub task: String,
    pub dataset: String,
    pub environment: String,
}

impl GroupKey {
    pub fn of(record: &ExperimentRecord) -> Self {
        Self {
            task: record.configuration.task.clone(),
            dataset: record.configuration.dataset.clone(),
            environment: record.environment.id.clone(),
        }
    }
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(task={}, dataset={}, environment={})",
            self.task, self.dataset, self.environment
        )
    }
}

/// A validation failure attributed to one input field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    fn new(field: impl Into<String>, message: impl fmt::Display) -> Self {
        Self {
            field: field.into(),
            message: message.to_string(),
        }
    }
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Reference binding. Group fields are optional; when given they must agree
/// with the referenced experiment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub environment: Option<String>,
    pub experiment: String,
}

impl ReferenceEntry {
    pub fn for_id(id: &str) -> Self {
        Self {
            task: None,
            dataset: None,
            environment: None,
            experiment: id.to_owned(),
        }
    }
}

/// User-facing scheme settings, as read from a scheme file or an API request.
/// Every field is optional and layered over the defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSpec {
    /// Raw (pre-normalization) weight overrides by metric key.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub references: Option<Vec<ReferenceEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub median: Option<MedianTie>,
    /// Pick a reference automatically for groups without one (default true).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auto_reference: Option<bool>,
}

impl SchemeSpec {
    pub fn from_toml_str(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn from_path(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read scheme file {}: {e}", path.display()))?;
        Self::from_toml_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// `other` layered over `self`: weights merge key by key, references
    /// are appended (later bindings win), scalars are replaced.
    pub fn merged(&self, other: &SchemeSpec) -> SchemeSpec {
        let weights = match (&self.weights, &other.weights) {
            (Some(a), Some(b)) => {
                let mut w = a.clone();
                w.extend(b.iter().map(|(k, v)| (k.clone(), *v)));
                Some(w)
            }
            (a, b) => b.clone().or_else(|| a.clone()),
        };
        let references = match (&self.references, &other.references) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).cloned().collect()),
            (a, b) => b.clone().or_else(|| a.clone()),
        };
        SchemeSpec {
            weights,
            bins: other.bins.or(self.bins),
            references,
            median: other.median.or(self.median),
            auto_reference: other.auto_reference.or(self.auto_reference),
        }
    }

    /// Validates the settings against `registry` and `records` and binds a
    /// reference for every group present in `records`.
    pub fn build(
        &self,
        registry: &MetricRegistry,
        records: &[ExperimentRecord],
    ) -> Result<RatingScheme, RatingError> {
        let mut errors = Vec::new();

        let mut registry = registry.clone();
        if records.iter().any(|r| r.values.contains_key(EMISSIONS)) {
            registry = registry.with_emissions();
        }
        if let Some(weights) = &self.weights {
            for (key, w) in weights {
                if !registry.contains(key) {
                    errors.push(FieldError::new(format!("weights.{key}"), "unknown metric"));
                } else if !(*w > 0.0 && w.is_finite()) {
                    errors.push(FieldError::new(
                        format!("weights.{key}"),
                        format_args!("weight must be positive, got {w}"),
                    ));
                }
            }
            if errors.is_empty() {
                match registry.with_weights(weights) {
                    Ok(r) => registry = r,
                    Err(e) => errors.push(FieldError::new("weights", e)),
                }
            }
        }
        let normalized = match registry.normalize_weights() {
            Ok(r) => Some(r),
            Err(e @ RegistryError::EmptyGroup(_)) => {
                errors.push(FieldError::new("weights", e));
                None
            }
            Err(e) => return Err(e.into()),
        };

        let boundaries = match self.bins {
            Some(b) => match Boundaries::new(b) {
                Ok(b) => Some(b),
                Err(e) => {
                    errors.push(FieldError::new("bins", e));
                    None
                }
            },
            None => Some(Boundaries::default()),
        };

        let by_id: BTreeMap<&str, &ExperimentRecord> =
            records.iter().map(|r| (r.id.as_str(), r)).collect();
        let mut bound: BTreeMap<GroupKey, &ExperimentRecord> = BTreeMap::new();
        for (i, entry) in self.references.iter().flatten().enumerate() {
            let Some(record) = by_id.get(entry.experiment.as_str()) else {
                errors.push(FieldError::new(
                    format!("references[{i}].experiment"),
                    format_args!("unknown experiment `{}`", entry.experiment),
                ));
                continue;
            };
            let actual = GroupKey::of(record);
            let expected = GroupKey {
                task: entry.task.clone().unwrap_or_else(|| actual.task.clone()),
                dataset: entry.dataset.clone().unwrap_or_else(|| actual.dataset.clone()),
                environment: entry
                    .environment
                    .clone()
                    .unwrap_or_else(|| actual.environment.clone()),
            };
            if expected != actual {
                errors.push(FieldError::new(
                    format!("references[{i}]"),
                    RatingError::ReferenceMismatch {
                        id: entry.experiment.clone(),
                        expected: Box::new(expected),
                        actual: Box::new(actual),
                    },
                ));
                continue;
            }
            bound.insert(actual, record);
        }

        if !errors.is_empty() {
            return Err(RatingError::InvalidScheme(errors));
        }
        let (Some(registry), Some(boundaries)) = (normalized, boundaries) else {
            unreachable!("errors were collected above");
        };

        let mut scheme = RatingScheme {
            registry,
            boundaries,
            tie: self.median.unwrap_or_default(),
            references: BTreeMap::new(),
        };
        let mut groups: BTreeMap<GroupKey, Vec<&ExperimentRecord>> = BTreeMap::new();
        for r in records {
            groups.entry(GroupKey::of(r)).or_default().push(r);
        }
        let auto = self.auto_reference.unwrap_or(true);
        for (key, members) in groups {
            let reference = match bound.remove(&key) {
                Some(r) => r,
                None if auto => {
                    let id = auto_select_reference(&members).expect("group is non-empty");
                    members.iter().find(|r| r.id == id).copied().expect("id from group")
                }
                None => return Err(RatingError::MissingReference(Box::new(key))),
            };
            scheme.references.insert(key, reference.clone());
        }
        Ok(scheme)
    }
}

/// Fully resolved rating configuration: normalized registry, bin boundaries
/// and one reference experiment per group.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingScheme {
    registry: MetricRegistry,
    boundaries: Boundaries,
    tie: MedianTie,
    references: BTreeMap<GroupKey, ExperimentRecord>,
}

impl RatingScheme {
    pub fn new(
        registry: &MetricRegistry,
        boundaries: Boundaries,
        tie: MedianTie,
    ) -> Result<Self, RatingError> {
        Ok(Self {
            registry: registry.normalize_weights()?,
            boundaries,
            tie,
            references: BTreeMap::new(),
        })
    }

    /// Makes `record` the reference of its group, replacing any previous one.
    pub fn bind_reference(&mut self, record: ExperimentRecord) {
        self.references.insert(GroupKey::of(&record), record);
    }

    pub fn registry(&self) -> &MetricRegistry {
        &self.registry
    }

    pub fn boundaries(&self) -> &Boundaries {
        &self.boundaries
    }

    pub fn tie(&self) -> MedianTie {
        self.tie
    }

    pub fn reference_for(&self, key: &GroupKey) -> Option<&ExperimentRecord> {
        self.references.get(key)
    }

    pub fn references(&self) -> impl Iterator<Item = (&GroupKey, &ExperimentRecord)> {
        self.references.iter()
    }

    pub fn is_reference(&self, record: &ExperimentRecord) -> bool {
        self.reference_for(&GroupKey::of(record))
            .is_some_and(|r| r.id == record.id)
    }

    pub fn summary(&self) -> SchemeSummary {
        let mut summary = SchemeSummary {
            hash: String::new(),
            bins: self.boundaries.values(),
            median: self.tie,
            metrics: self
                .registry
                .metrics()
                .iter()
                .map(|m| SchemeMetric {
                    key: m.key.clone(),
                    group: m.group,
                    direction: m.direction,
                    unit: m.unit.clone(),
                    weight: m.weight,
                })
                .collect(),
            references: self
                .references
                .iter()
                .map(|(k, r)| ReferenceEntry {
                    task: Some(k.task.clone()),
                    dataset: Some(k.dataset.clone()),
                    environment: Some(k.environment.clone()),
                    experiment: r.id.clone(),
                })
                .collect(),
        };
        let canonical = serde_json::to_vec(&summary).expect("summary serializes");
        let digest = Sha256::digest(&canonical);
        summary.hash = hex::encode(&digest[..8]);
        summary
    }

    /// Short content hash identifying this scheme.
    pub fn hash(&self) -> String {
        self.summary().hash
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeMetric {
    pub key: String,
    pub group: MetricGroup,
    pub direction: Direction,
    pub unit: String,
    pub weight: f64,
}

/// Serializable description of a resolved scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeSummary {
    pub hash: String,
    pub bins: [f64; 4],
    pub median: MedianTie,
    pub metrics: Vec<SchemeMetric>,
    pub references: Vec<ReferenceEntry>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// The most typical experiment of a group: the one whose values are closest
/// to the per-metric medians in summed absolute log distance. Ties go to the
/// lexicographically smallest id.
pub fn auto_select_reference<'a>(records: &[&'a ExperimentRecord]) -> Option<&'a str> {
    let keys: BTreeSet<&str> = records
        .iter()
        .flat_map(|r| r.values.keys().map(String::as_str))
        .collect();
    let medians: BTreeMap<&str, f64> = keys
        .into_iter()
        .map(|k| {
            let mut v: Vec<f64> = records.iter().filter_map(|r| r.value(k)).collect();
            (k, median(&mut v))
        })
        .collect();

    records
        .iter()
        .map(|r| {
            let distance: f64 = r
                .values
                .iter()
                .map(|(k, v)| (v / medians[k.as_str()]).ln().abs())
                .sum();
            (distance, r.id.as_str())
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)))
        .map(|(_, id)| id)
}
