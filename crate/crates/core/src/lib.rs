//! Efficiency index scoring for machine-learning experiments.
//!
//! Raw measurement logs are aggregated into per-experiment metric values,
//! projected onto a reference-relative index scale, binned into A-E ratings
//! and summarised by a weighted-median compound rating. The crate also
//! renders energy labels, builds report bundles and ships a small probe for
//! measuring energy, wall time and peak memory of a command.

pub mod experiment;
pub mod ingest;
pub mod labels;
pub mod measure;
pub mod metric;
pub mod numfmt;
pub mod pipeline;
pub mod rating;
pub mod report;

pub use experiment::{
    validate_record, Configuration, Environment, ExperimentRecord, HyperValue, Violation,
};
pub use metric::{default_registry, Direction, MetricDefinition, MetricGroup, MetricRegistry};
pub use rating::{
    assign_rating, compute_index, weighted_median, Boundaries, GroupKey, MedianTie, RatedExperiment,
    Rating, RatingScheme,
};
pub use report::ReportBundle;
