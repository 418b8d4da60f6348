//! Records to report bundle, shared by the command line and the server.

use thiserror::Error;

use crate::experiment::ExperimentRecord;
use crate::metric::MetricRegistry;
use crate::rating::{rate_corpus, RatingError, RatingScheme, SchemeSpec};
use crate::report::{build_bundle, ReportBundle, ReportError};

/// Environment variable naming a default scheme file.
pub const SCHEME_ENV: &str = "EFFINDEX_SCHEME";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Rating(#[from] RatingError),
    #[error(transparent)]
    Report(#[from] ReportError),
}

#[derive(Debug, Clone)]
pub struct RatingRun {
    pub scheme: RatingScheme,
    pub bundle: ReportBundle,
}

pub fn rate_records(
    records: &[ExperimentRecord],
    registry: &MetricRegistry,
    spec: &SchemeSpec,
) -> Result<RatingRun, PipelineError> {
    rate_with_scheme(records, spec.build(registry, records)?)
}

pub fn rate_with_scheme(
    records: &[ExperimentRecord],
    scheme: RatingScheme,
) -> Result<RatingRun, PipelineError> {
    let rated = rate_corpus(records, &scheme)?;
    let bundle = build_bundle(rated, &scheme)?;
    Ok(RatingRun { scheme, bundle })
}
