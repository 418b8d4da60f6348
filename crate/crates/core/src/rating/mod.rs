//! Index scores, rating bins and compound ratings.
//!
//! A metric value is compared against the value of a reference experiment
//! measured in the same environment: `(value / reference) ^ direction`. The
//! resulting index is 1 for the reference itself and above 1 whenever the
//! experiment improves on it. Indices are binned into five ratings, and the
//! ratings of all metrics are summarised by their weighted median.

mod median;
mod rate;
mod scheme;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metric::{Direction, RegistryError};

pub use median::{weighted_median, MedianTie, TIE_TOLERANCE};
pub use rate::{rate_corpus, rate_experiment, RatedExperiment};
pub use scheme::{
    auto_select_reference, FieldError, GroupKey, RatingScheme, ReferenceEntry, SchemeMetric,
    SchemeSpec, SchemeSummary,
};

#[derive(Debug, Error)]
pub enum RatingError {
    #[error("{0}")]
    Domain(String),
    #[error("weighted median of an empty list")]
    EmptyInput,
    #[error("invalid weight {0} (weights must be finite and > 0)")]
    InvalidWeight(f64),
    #[error("invalid bin boundaries: {0}")]
    InvalidBoundaries(String),
    #[error("no reference experiment for group {0}")]
    MissingReference(Box<GroupKey>),
    #[error("reference `{id}` does not exist")]
    UnknownReference { id: String },
    #[error("reference `{id}` belongs to group {actual}, not {expected}")]
    ReferenceMismatch {
        id: String,
        expected: Box<GroupKey>,
        actual: Box<GroupKey>,
    },
    #[error("reference `{reference}` has no value for metric `{key}`")]
    MissingReferenceValue { key: String, reference: String },
    #[error("invalid scheme: {}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidScheme(Vec<FieldError>),
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

/// Letter rating, `A` best and `E` worst.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum Rating {
    A,
    B,
    C,
    D,
    E,
}

impl Rating {
    pub const ALL: [Rating; 5] = [Rating::A, Rating::B, Rating::C, Rating::D, Rating::E];

    pub fn ordinal(self) -> u8 {
        self as u8
    }

    pub fn from_ordinal(ordinal: u8) -> Option<Rating> {
        Self::ALL.get(ordinal as usize).copied()
    }

    pub fn letter(self) -> char {
        (b'A' + self.ordinal()) as char
    }
}

impl fmt::Display for Rating {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// Four strictly decreasing, positive index thresholds shared by every metric.
///
/// A: `i > b1`, B: `b2 < i <= b1`, C: `b3 <= i <= b2`, D: `b4 <= i < b3`,
/// E: `i < b4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct Boundaries([f64; 4]);

impl Boundaries {
    pub fn new(b: [f64; 4]) -> Result<Self, RatingError> {
        if b.iter().any(|x| !x.is_finite() || *x <= 0.0) {
            return Err(RatingError::InvalidBoundaries(format!(
                "{b:?}: every boundary must be finite and positive"
            )));
        }
        if !b.windows(2).all(|w| w[0] > w[1]) {
            return Err(RatingError::InvalidBoundaries(format!(
                "{b:?}: boundaries must be strictly decreasing"
            )));
        }
        Ok(Self(b))
    }

    pub fn values(&self) -> [f64; 4] {
        self.0
    }
}

impl Default for Boundaries {
    fn default() -> Self {
        Self([1.5, 1.15, 1.0 / 1.15, 1.0 / 1.5])
    }
}

impl TryFrom<[f64; 4]> for Boundaries {
    type Error = RatingError;

    fn try_from(b: [f64; 4]) -> Result<Self, Self::Error> {
        Self::new(b)
    }
}

impl From<Boundaries> for [f64; 4] {
    fn from(b: Boundaries) -> Self {
        b.0
    }
}

/// `(value / ref_value) ^ direction`.
pub fn compute_index(value: f64, ref_value: f64, direction: Direction) -> Result<f64, RatingError> {
    if !(value > 0.0 && value.is_finite()) || !(ref_value > 0.0 && ref_value.is_finite()) {
        return Err(RatingError::Domain(format!(
            "index needs positive finite values, got {value} and reference {ref_value}"
        )));
    }
    Ok(match direction {
        Direction::HigherIsBetter => value / ref_value,
        Direction::LowerIsBetter => ref_value / value,
    })
}

pub fn assign_rating(index: f64, boundaries: &Boundaries) -> Result<Rating, RatingError> {
    if index.is_nan() || index <= 0.0 {
        return Err(RatingError::Domain(format!(
            "rating needs a positive index, got {index}"
        )));
    }
    let [b1, b2, b3, b4] = boundaries.0;
    Ok(if index > b1 {
        Rating::A
    } else if index > b2 {
        Rating::B
    } else if index >= b3 {
        Rating::C
    } else if index >= b4 {
        Rating::D
    } else {
        Rating::E
    })
}
