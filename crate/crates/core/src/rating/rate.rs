use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{assign_rating, compute_index, weighted_median, GroupKey, Rating, RatingError, RatingScheme};
use crate::experiment::ExperimentRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatedExperiment {
    pub record: ExperimentRecord,
    pub index_scores: BTreeMap<String, f64>,
    pub metric_ratings: BTreeMap<String, Rating>,
    pub compound: Rating,
}

impl RatedExperiment {
    pub fn id(&self) -> &str {
        &self.record.id
    }

    pub fn index(&self, key: &str) -> Option<f64> {
        self.index_scores.get(key).copied()
    }
}

/// Rates one record against the reference of its own group.
pub fn rate_experiment(
    record: &ExperimentRecord,
    scheme: &RatingScheme,
) -> Result<RatedExperiment, RatingError> {
    let key = GroupKey::of(record);
    let reference = scheme
        .reference_for(&key)
        .ok_or_else(|| RatingError::MissingReference(Box::new(key)))?;

    let mut index_scores = BTreeMap::new();
    let mut metric_ratings = BTreeMap::new();
    let mut weighted = Vec::new();
    for metric in scheme.registry().metrics() {
        let (value, ref_value) = match (record.value(&metric.key), reference.value(&metric.key)) {
            (Some(v), Some(r)) => (v, r),
            (Some(_), None) if !metric.optional => {
                return Err(RatingError::MissingReferenceValue {
                    key: metric.key.clone(),
                    reference: reference.id.clone(),
                })
            }
            _ => continue,
        };
        let index = compute_index(value, ref_value, metric.direction)?;
        let rating = assign_rating(index, scheme.boundaries())?;
        index_scores.insert(metric.key.clone(), index);
        metric_ratings.insert(metric.key.clone(), rating);
        if metric.weight > 0.0 {
            weighted.push((rating, metric.weight));
        }
    }
    let compound = weighted_median(&weighted, scheme.tie())?;

    Ok(RatedExperiment {
        record: record.clone(),
        index_scores,
        metric_ratings,
        compound,
    })
}

/// Rates every record; output order follows input order.
pub fn rate_corpus(
    records: &[ExperimentRecord],
    scheme: &RatingScheme,
) -> Result<Vec<RatedExperiment>, RatingError> {
    records.iter().map(|r| rate_experiment(r, scheme)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::fixtures::full_record;
    use crate::metric::{default_registry, MetricRegistry, POWER_DRAW};
    use crate::rating::{Boundaries, MedianTie};

    fn scheme_for(reference: &ExperimentRecord) -> RatingScheme {
        let mut s =
            RatingScheme::new(&default_registry(), Boundaries::default(), MedianTie::Lower).unwrap();
        s.bind_reference(reference.clone());
        s
    }

    #[test]
    fn reference_rates_itself_c() {
        let r = full_record("ref");
        let rated = rate_experiment(&r, &scheme_for(&r)).unwrap();
        assert_eq!(rated.index_scores.len(), 8);
        assert!(rated.index_scores.values().all(|&i| i == 1.0));
        assert!(rated.metric_ratings.values().all(|&x| x == Rating::C));
        assert_eq!(rated.compound, Rating::C);
    }

    #[test]
    fn halved_power_only_moves_power() {
        let r = full_record("ref");
        let mut x = full_record("x");
        x.values.insert(POWER_DRAW.into(), 20.0);
        let rated = rate_experiment(&x, &scheme_for(&r)).unwrap();
        assert_eq!(rated.index(POWER_DRAW), Some(2.0));
        assert_eq!(rated.metric_ratings[POWER_DRAW], Rating::A);
        assert_eq!(
            rated.metric_ratings.values().filter(|&&x| x == Rating::C).count(),
            7
        );
        assert_eq!(rated.compound, Rating::C);
    }

    #[test]
    fn other_environment_has_no_reference() {
        let r = full_record("ref");
        let mut x = full_record("x");
        x.environment.id = "elsewhere".into();
        assert!(matches!(
            rate_experiment(&x, &scheme_for(&r)),
            Err(RatingError::MissingReference(k)) if k.environment == "elsewhere"
        ));
    }

    #[test]
    fn zero_weight_metric_is_rated_but_not_counted() {
        let reg = default_registry().with_emissions();
        let mut r = full_record("ref");
        r.values.insert("emissions_g".into(), 1.0);
        let mut x = r.clone();
        x.id = "x".into();
        x.values.insert("emissions_g".into(), 0.01);
        let mut s = RatingScheme::new(&reg, Boundaries::default(), MedianTie::Lower).unwrap();
        s.bind_reference(r);
        let rated = rate_experiment(&x, &s).unwrap();
        assert_eq!(rated.metric_ratings["emissions_g"], Rating::A);
        assert_eq!(rated.compound, Rating::C);
    }

    #[test]
    fn record_metric_missing_from_reference() {
        let reg = MetricRegistry::new(default_registry().metrics().to_vec()).unwrap();
        let mut r = full_record("ref");
        r.values.remove(POWER_DRAW);
        let x = full_record("x");
        let mut s = RatingScheme::new(&reg, Boundaries::default(), MedianTie::Lower).unwrap();
        s.bind_reference(r);
        assert!(matches!(
            rate_experiment(&x, &s),
            Err(RatingError::MissingReferenceValue { .. })
        ));
    }
}
