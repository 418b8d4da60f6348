use serde::{Deserialize, Serialize};

use super::{Rating, RatingError};

/// Which rating wins when the cumulative weight hits exactly half the total.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MedianTie {
    /// The better rating (first one reaching half the weight).
    #[default]
    Lower,
    /// The worse rating (first one exceeding half the weight).
    Upper,
}

/// Relative tolerance under which the cumulative weight counts as exactly
/// half the total.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Weighted median of ratings ordered A (first) to E.
///
/// Weights must be finite and strictly positive; drop zero-weight entries
/// before calling. A cumulative weight within [`TIE_TOLERANCE`] of half the
/// total is treated as a tie, so proportional weight vectors agree.
pub fn weighted_median(ratings: &[(Rating, f64)], tie: MedianTie) -> Result<Rating, RatingError> {
    if ratings.is_empty() {
        return Err(RatingError::EmptyInput);
    }
    let mut mass = [0.0f64; 5];
    for &(rating, weight) in ratings {
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(RatingError::InvalidWeight(weight));
        }
        mass[rating.ordinal() as usize] += weight;
    }
    let total: f64 = mass.iter().sum();
    let half = total / 2.0;
    let slack = half * TIE_TOLERANCE;

    let mut cumulative = 0.0;
    let mut last = None;
    for rating in Rating::ALL {
        let m = mass[rating.ordinal() as usize];
        if m == 0.0 {
            continue;
        }
        cumulative += m;
        last = Some(rating);
        let reached = match tie {
            MedianTie::Lower => cumulative >= half - slack,
            MedianTie::Upper => cumulative > half + slack,
        };
        if reached {
            return Ok(rating);
        }
    }
    // Only reachable through rounding in the cumulative sum.
    last.ok_or(RatingError::EmptyInput)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Rating::*;

    fn lower(r: &[(Rating, f64)]) -> Rating {
        weighted_median(r, MedianTie::Lower).unwrap()
    }

    #[test]
    fn examples() {
        assert_eq!(lower(&[(A, 0.1), (A, 3.0)]), A);
        assert_eq!(lower(&[(A, 0.2), (C, 0.5), (E, 0.3)]), C);
        assert_eq!(lower(&[(A, 1.0), (B, 1.0), (D, 1.0), (E, 1.0)]), B);
        assert_eq!(
            weighted_median(&[(A, 1.0), (B, 1.0), (D, 1.0), (E, 1.0)], MedianTie::Upper).unwrap(),
            D
        );
    }

    #[test]
    fn rounding_noise_at_half_is_a_tie() {
        let w = 0.4 * (1.0 + 1e-15);
        assert_eq!(lower(&[(C, w), (C, 0.6), (D, 1.0 - 1e-15)]), C);
        assert_eq!(
            weighted_median(&[(C, 1.0 + 1e-15), (D, 1.0)], MedianTie::Upper).unwrap(),
            D
        );
        assert_eq!(lower(&[(C, 1.0 - 1e-12), (D, 1.0)]), C);
        assert_eq!(lower(&[(C, 1.0 - 1e-6), (D, 1.0)]), D);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            weighted_median(&[], MedianTie::Lower),
            Err(RatingError::EmptyInput)
        ));
        assert!(matches!(
            weighted_median(&[(A, 0.0)], MedianTie::Lower),
            Err(RatingError::InvalidWeight(_))
        ));
        assert!(matches!(
            weighted_median(&[(A, -1.0)], MedianTie::Lower),
            Err(RatingError::InvalidWeight(_))
        ));
    }

    fn entries() -> impl Strategy<Value = Vec<(Rating, f64)>> {
        prop::collection::vec((0u8..5, 0.01f64..10.0), 1..12).prop_map(|v| {
            v.into_iter()
                .map(|(o, w)| (Rating::from_ordinal(o).unwrap(), w))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn within_input_range(e in entries()) {
            let m = lower(&e);
            let min = e.iter().map(|x| x.0).min().unwrap();
            let max = e.iter().map(|x| x.0).max().unwrap();
            prop_assert!(min <= m && m <= max);
        }

        #[test]
        fn scale_invariant(e in entries(), k in 0u32..8) {
            // Powers of two keep every partial sum exact.
            let c = 2f64.powi(k as i32 - 4);
            let scaled: Vec<_> = e.iter().map(|&(r, w)| (r, w * c)).collect();
            prop_assert_eq!(lower(&e), lower(&scaled));
        }

        #[test]
        fn equal_weights_odd_count_is_plain_median(ords in prop::collection::vec(0u8..5, 1..6)) {
            let mut ords = ords;
            if ords.len() % 2 == 0 {
                ords.pop();
            }
            prop_assume!(!ords.is_empty());
            let e: Vec<_> = ords.iter().map(|&o| (Rating::from_ordinal(o).unwrap(), 1.0)).collect();
            let mut sorted = ords.clone();
            sorted.sort();
            prop_assert_eq!(lower(&e).ordinal(), sorted[sorted.len() / 2]);
        }
    }
}
