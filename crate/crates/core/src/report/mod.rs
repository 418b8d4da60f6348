//! Report bundles: best method per dataset, index scatter series and rating
//! distributions, built from a rated corpus.

mod export;

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metric::{MetricGroup, MetricRegistry, F1_SCORE, POWER_DRAW};
use crate::rating::{RatedExperiment, Rating, RatingScheme, SchemeSummary};

pub use export::{export_report, parse_bundle, to_canonical_json, ReportFormat};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
    #[error("unsupported report format `{0}` (expected json or csv)")]
    UnsupportedFormat(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid report document: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Rating counts for one group, with every letter present.
pub type Histogram = BTreeMap<Rating, usize>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricCell {
    pub key: String,
    pub unit: String,
    pub value: f64,
    pub index: f64,
    pub rating: Rating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub dataset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_size: Option<u64>,
    pub method: String,
    pub experiment: String,
    pub environment: String,
    pub compound: Rating,
    pub metrics: Vec<MetricCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub experiment: String,
    pub dataset: String,
    pub method: String,
    pub environment: String,
    /// Index coordinates.
    pub x: f64,
    pub y: f64,
    /// Measured values, for tooltips.
    pub x_value: f64,
    pub y_value: f64,
    pub compound: Rating,
    pub reference: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterSeries {
    pub x_key: String,
    pub y_key: String,
    pub x_unit: String,
    pub y_unit: String,
    /// Grid lines, identical on both axes.
    pub grid: [f64; 4],
    pub points: Vec<ScatterPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupBy {
    Dataset,
    Method,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distributions {
    pub by_dataset: BTreeMap<String, Histogram>,
    pub by_method: BTreeMap<String, Histogram>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub schema_version: u32,
    pub scheme: SchemeSummary,
    pub experiments: Vec<RatedExperiment>,
    pub best_per_dataset: Vec<TableRow>,
    pub scatter: ScatterSeries,
    pub distributions: Distributions,
}

fn power_index(r: &RatedExperiment) -> f64 {
    r.index(POWER_DRAW).unwrap_or(0.0)
}

/// Better first: compound rating, then power-draw index, then method name
/// and id for determinism.
fn best_order(a: &RatedExperiment, b: &RatedExperiment) -> Ordering {
    a.compound
        .cmp(&b.compound)
        .then_with(|| power_index(b).total_cmp(&power_index(a)))
        .then_with(|| a.record.method().cmp(b.record.method()))
        .then_with(|| a.record.id.cmp(&b.record.id))
}

fn cells(r: &RatedExperiment, registry: &MetricRegistry) -> Vec<MetricCell> {
    registry
        .metrics()
        .iter()
        .filter_map(|m| {
            Some(MetricCell {
                key: m.key.clone(),
                unit: m.unit.clone(),
                value: r.record.value(&m.key)?,
                index: r.index(&m.key)?,
                rating: *r.metric_ratings.get(&m.key)?,
            })
        })
        .collect()
}

/// The most efficient experiment of every dataset. Rows are ordered by
/// dataset size where known (smallest first), then by dataset name.
pub fn best_per_dataset(rated: &[RatedExperiment], registry: &MetricRegistry) -> Vec<TableRow> {
    let mut best: BTreeMap<&str, &RatedExperiment> = BTreeMap::new();
    let mut sizes: BTreeMap<&str, u64> = BTreeMap::new();
    for r in rated {
        let dataset = r.record.dataset();
        if let Some(size) = r.record.configuration.dataset_size {
            let s = sizes.entry(dataset).or_insert(size);
            *s = (*s).max(size);
        }
        match best.get(dataset) {
            Some(current) if best_order(current, r) != Ordering::Greater => {}
            _ => {
                best.insert(dataset, r);
            }
        }
    }
    let mut rows: Vec<TableRow> = best
        .into_iter()
        .map(|(dataset, r)| TableRow {
            dataset: dataset.to_owned(),
            dataset_size: sizes.get(dataset).copied(),
            method: r.record.method().to_owned(),
            experiment: r.record.id.clone(),
            environment: r.record.environment.id.clone(),
            compound: r.compound,
            metrics: cells(r, registry),
        })
        .collect();
    rows.sort_by(|a, b| {
        (a.dataset_size.is_none(), a.dataset_size, &a.dataset).cmp(&(
            b.dataset_size.is_none(),
            b.dataset_size,
            &b.dataset,
        ))
    });
    rows
}

/// Index-space scatter of two metrics with the scheme's bins as grid lines.
pub fn scatter_series(
    rated: &[RatedExperiment],
    scheme: &RatingScheme,
    x_key: &str,
    y_key: &str,
) -> Result<ScatterSeries, ReportError> {
    let registry = scheme.registry();
    let unit = |key: &str| {
        registry
            .get(key)
            .map(|m| m.unit.clone())
            .ok_or_else(|| ReportError::UnknownMetric(key.to_owned()))
    };
    let (x_unit, y_unit) = (unit(x_key)?, unit(y_key)?);
    let mut points = Vec::with_capacity(rated.len());
    for r in rated {
        let coord = |key: &str| -> Result<(f64, f64), ReportError> {
            match (r.index(key), r.record.value(key)) {
                (Some(i), Some(v)) => Ok((i, v)),
                _ => Err(ReportError::UnknownMetric(key.to_owned())),
            }
        };
        let (x, x_value) = coord(x_key)?;
        let (y, y_value) = coord(y_key)?;
        points.push(ScatterPoint {
            experiment: r.record.id.clone(),
            dataset: r.record.dataset().to_owned(),
            method: r.record.method().to_owned(),
            environment: r.record.environment.id.clone(),
            x,
            y,
            x_value,
            y_value,
            compound: r.compound,
            reference: scheme.is_reference(&r.record),
        });
    }
    Ok(ScatterSeries {
        x_key: x_key.to_owned(),
        y_key: y_key.to_owned(),
        x_unit,
        y_unit,
        grid: scheme.boundaries().values(),
        points,
    })
}

pub fn empty_histogram() -> Histogram {
    Rating::ALL.iter().map(|&r| (r, 0)).collect()
}

/// Compound-rating counts per dataset or per method.
pub fn rating_distributions(rated: &[RatedExperiment], group_by: GroupBy) -> BTreeMap<String, Histogram> {
    let mut out: BTreeMap<String, Histogram> = BTreeMap::new();
    for r in rated {
        let key = match group_by {
            GroupBy::Dataset => r.record.dataset(),
            GroupBy::Method => r.record.method(),
        };
        *out.entry(key.to_owned())
            .or_insert_with(empty_histogram)
            .entry(r.compound)
            .or_default() += 1;
    }
    out
}

/// Power draw against F1 score when both exist, otherwise the top-weighted
/// resources and quality metrics.
pub fn default_scatter_axes(registry: &MetricRegistry) -> Option<(String, String)> {
    let top = |group: MetricGroup| {
        registry
            .metrics()
            .iter()
            .filter(|m| m.group == group)
            .fold(None::<&crate::metric::MetricDefinition>, |best, m| match best {
                Some(b) if b.weight >= m.weight => Some(b),
                _ => Some(m),
            })
            .map(|m| m.key.clone())
    };
    let x = if registry.contains(POWER_DRAW) {
        Some(POWER_DRAW.to_owned())
    } else {
        top(MetricGroup::Resources)
    }?;
    let y = if registry.contains(F1_SCORE) {
        Some(F1_SCORE.to_owned())
    } else {
        top(MetricGroup::Quality)
    }?;
    Some((x, y))
}

/// Assembles the full bundle for a rated corpus.
pub fn build_bundle(rated: Vec<RatedExperiment>, scheme: &RatingScheme) -> Result<ReportBundle, ReportError> {
    let registry = scheme.registry();
    let (x, y) = default_scatter_axes(registry)
        .ok_or_else(|| ReportError::UnknownMetric(POWER_DRAW.to_owned()))?;
    let scatter = scatter_series(&rated, scheme, &x, &y)?;
    Ok(ReportBundle {
        schema_version: REPORT_SCHEMA_VERSION,
        scheme: scheme.summary(),
        best_per_dataset: best_per_dataset(&rated, registry),
        distributions: Distributions {
            by_dataset: rating_distributions(&rated, GroupBy::Dataset),
            by_method: rating_distributions(&rated, GroupBy::Method),
        },
        scatter,
        experiments: rated,
    })
}
