#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use effindex::metric::*;
use effindex::rating::TIE_TOLERANCE;
use effindex::{Configuration, Environment, ExperimentRecord, MedianTie, Rating};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn record(id: &str, dataset: &str, method: &str, overrides: &[(&str, f64)]) -> ExperimentRecord {
    let mut values: BTreeMap<String, f64> = [
        (TOP1_ACCURACY, 0.8),
        (TOP5_ACCURACY, 0.95),
        (F1_SCORE, 0.78),
        (FLOPS, 2.0e6),
        (PARAMETERS, 1200.0),
        (MODEL_SIZE, 9600.0),
        (POWER_DRAW, 40.0),
        (RUNNING_TIME, 0.5),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_owned(), v))
    .collect();
    for (k, v) in overrides {
        values.insert((*k).to_owned(), *v);
    }
    ExperimentRecord {
        id: id.into(),
        configuration: Configuration {
            task: "inference".into(),
            dataset: dataset.into(),
            method: method.into(),
            hyperparameters: BTreeMap::new(),
            dataset_size: None,
        },
        environment: Environment {
            id: "bench".into(),
            hardware: String::new(),
            software: String::new(),
            energy_mix: None,
        },
        values,
        flags: BTreeSet::new(),
    }
}

/// Sorts the entries by rating, walks them one at a time and returns the
/// rating of the entry at which the running weight first reaches (or, for
/// the upper rule, passes) half the total, up to the tie tolerance.
pub fn median_by_scan(entries: &[(Rating, f64)], tie: MedianTie) -> Rating {
    let mut sorted: Vec<(u8, f64)> = entries.iter().map(|(r, w)| (r.ordinal(), *w)).collect();
    sorted.sort_by_key(|e| e.0);
    let total: f64 = sorted.iter().map(|e| e.1).sum();
    let half = total / 2.0;
    let slack = half * TIE_TOLERANCE;
    let mut run = 0.0;
    for (ord, w) in &sorted {
        run += w;
        let hit = match tie {
            MedianTie::Lower => run >= half - slack,
            MedianTie::Upper => run > half + slack,
        };
        if hit {
            return Rating::from_ordinal(*ord).unwrap();
        }
    }
    Rating::from_ordinal(sorted.last().unwrap().0).unwrap()
}

/// Minimisers of the weighted absolute deviation over the five ordinals;
/// the lower rule takes the smallest, the upper rule the largest. Exact
/// only when weight sums are exact (integer weights).
pub fn median_by_deviation(entries: &[(Rating, f64)], tie: MedianTie) -> Rating {
    let cost = |x: u8| -> f64 {
        entries
            .iter()
            .map(|(r, w)| w * (r.ordinal() as f64 - x as f64).abs())
            .sum()
    };
    let costs: Vec<f64> = (0..5).map(cost).collect();
    let best = costs.iter().cloned().fold(f64::INFINITY, f64::min);
    let minimisers: Vec<u8> = (0..5).filter(|&x| costs[x as usize] == best).collect();
    let pick = match tie {
        MedianTie::Lower => minimisers[0],
        MedianTie::Upper => *minimisers.last().unwrap(),
    };
    Rating::from_ordinal(pick).unwrap()
}

/// Bin lookup written as a table of half-open intervals.
pub fn bin_by_table(index: f64, b: [f64; 4]) -> Rating {
    let table = [
        (Rating::A, b[0], f64::INFINITY, false, true),
        (Rating::B, b[1], b[0], false, true),
        (Rating::C, b[2], b[1], true, true),
        (Rating::D, b[3], b[2], true, false),
        (Rating::E, 0.0, b[3], false, false),
    ];
    let hits: Vec<Rating> = table
        .iter()
        .filter(|(_, lo, hi, lo_in, hi_in)| {
            let above = if *lo_in { index >= *lo } else { index > *lo };
            let below = if *hi_in { index <= *hi } else { index < *hi };
            above && below
        })
        .map(|t| t.0)
        .collect();
    assert_eq!(hits.len(), 1, "index {index} falls into {hits:?} under {b:?}");
    hits[0]
}
