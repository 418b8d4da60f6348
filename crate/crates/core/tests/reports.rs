mod common;

use std::collections::BTreeMap;
use std::fs;

use common::{fixtures, record};
use effindex::ingest::load_corpus;
use effindex::metric::*;
use effindex::pipeline::{rate_records, RatingRun};
use effindex::rating::{ReferenceEntry, SchemeSpec};
use effindex::report::{
    best_per_dataset, export_report, parse_bundle, rating_distributions, scatter_series,
    to_canonical_json, GroupBy, ReportError, ReportFormat,
};
use effindex::{default_registry, Rating, RatedExperiment};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn corpus_run() -> RatingRun {
    let reg = default_registry();
    let corpus = load_corpus(&[fixtures().join("logs")], &reg).unwrap();
    rate_records(&corpus.records, &reg, &SchemeSpec::default()).unwrap()
}

/// Exhaustive pick: among all candidates of a dataset, keep those with the
/// best compound, then those with the largest power-draw index, then the
/// smallest method name.
fn best_oracle(rated: &[RatedExperiment], dataset: &str) -> String {
    let cands: Vec<&RatedExperiment> = rated.iter().filter(|r| r.record.dataset() == dataset).collect();
    let best_c = cands.iter().map(|r| r.compound).min().unwrap();
    let cands: Vec<_> = cands.into_iter().filter(|r| r.compound == best_c).collect();
    let best_p = cands
        .iter()
        .map(|r| r.index(POWER_DRAW).unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    let mut cands: Vec<_> = cands
        .into_iter()
        .filter(|r| r.index(POWER_DRAW).unwrap() == best_p)
        .map(|r| r.record.method().to_owned())
        .collect();
    cands.sort();
    cands.remove(0)
}

#[test]
fn bundle_shape() {
    let run = corpus_run();
    let b = &run.bundle;
    assert_eq!(b.experiments.len(), 100);
    assert_eq!(b.best_per_dataset.len(), 10);
    assert_eq!(b.scatter.points.len(), 100);
    assert_eq!(b.scatter.grid, run.scheme.boundaries().values());
    assert_eq!((b.scatter.x_key.as_str(), b.scatter.y_key.as_str()), (POWER_DRAW, F1_SCORE));
    for (name, hist) in &b.distributions.by_dataset {
        assert_eq!(hist.len(), 5);
        let n = b.experiments.iter().filter(|r| r.record.dataset() == name).count();
        assert_eq!(hist.values().sum::<usize>(), n);
    }
    for (name, hist) in &b.distributions.by_method {
        let n = b.experiments.iter().filter(|r| r.record.method() == name).count();
        assert_eq!(hist.values().sum::<usize>(), n);
    }
}

#[test]
fn table_rows_match_oracle_and_size_order() {
    let run = corpus_run();
    let rows = &run.bundle.best_per_dataset;
    for row in rows {
        assert_eq!(row.method, best_oracle(&run.bundle.experiments, &row.dataset), "{}", row.dataset);
        assert_eq!(row.metrics.len(), 8);
    }
    let sizes: Vec<u64> = rows.iter().map(|r| r.dataset_size.unwrap()).collect();
    assert!(sizes.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(rows[0].dataset, "iris");
    assert_eq!(rows[9].dataset, "covertype");
}

#[test]
fn scatter_points_follow_compound_and_reference() {
    let run = corpus_run();
    let by_id: BTreeMap<&str, &RatedExperiment> =
        run.bundle.experiments.iter().map(|r| (r.id(), r)).collect();
    let mut references = 0;
    for p in &run.bundle.scatter.points {
        assert_eq!(p.compound, by_id[p.experiment.as_str()].compound);
        if p.reference {
            references += 1;
            assert_eq!((p.x, p.y), (1.0, 1.0));
        }
    }
    assert_eq!(references, 10);
}

#[test]
fn half_power_doubles_x() {
    let reference = record("ref", "d", "R", &[]);
    let half = record("half", "d", "H", &[(POWER_DRAW, 20.0)]);
    let records = vec![reference, half];
    let spec = SchemeSpec {
        references: Some(vec![ReferenceEntry::for_id("ref")]),
        ..SchemeSpec::default()
    };
    let run = rate_records(&records, &default_registry(), &spec).unwrap();
    let s = scatter_series(&run.bundle.experiments, &run.scheme, POWER_DRAW, F1_SCORE).unwrap();
    let p = s.points.iter().find(|p| p.experiment == "half").unwrap();
    assert_eq!((p.x, p.y), (2.0, 1.0));
    assert!(matches!(
        scatter_series(&run.bundle.experiments, &run.scheme, "nope", F1_SCORE),
        Err(ReportError::UnknownMetric(_))
    ));
}

#[test]
fn distribution_examples() {
    assert!(rating_distributions(&[], GroupBy::Dataset).is_empty());
    let run = corpus_run();
    let one_method: Vec<_> = run
        .bundle
        .experiments
        .iter()
        .filter(|r| r.record.method() == "LR" && ["iris", "wine"].contains(&r.record.dataset()))
        .cloned()
        .collect();
    let h = rating_distributions(&one_method, GroupBy::Method);
    assert_eq!(h.len(), 1);
    assert_eq!(h["LR"].values().sum::<usize>(), 2);
}

#[test]
fn tie_fixture_prefers_better_power() {
    let reg = default_registry();
    let corpus = load_corpus(&[fixtures().join("tie")], &reg).unwrap();
    let spec = SchemeSpec::from_path(&fixtures().join("tie/scheme.toml")).unwrap();
    let run = rate_records(&corpus.records, &reg, &spec).unwrap();
    let by_method: BTreeMap<&str, &RatedExperiment> =
        run.bundle.experiments.iter().map(|r| (r.record.method(), r)).collect();
    assert_eq!(by_method["Alpha"].compound, Rating::B);
    assert_eq!(by_method["Beta"].compound, Rating::B);
    assert!(by_method["Beta"].index(POWER_DRAW) > by_method["Alpha"].index(POWER_DRAW));
    assert_eq!(run.bundle.best_per_dataset[0].method, "Beta");
    assert_eq!(best_oracle(&run.bundle.experiments, "toy"), "Beta");
}

#[test]
fn json_export_is_a_fixpoint() {
    let run = corpus_run();
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    export_report(&run.bundle, ReportFormat::Json, &a).unwrap();
    export_report(&run.bundle, ReportFormat::Json, &b).unwrap();
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    let parsed = parse_bundle(&text).unwrap();
    assert_eq!(parsed.experiments.len(), 100);
    assert_eq!(to_canonical_json(&parsed), text);
}

#[test]
fn csv_export_tables() {
    let run = corpus_run();
    let dir = tempfile::tempdir().unwrap();
    let files = export_report(&run.bundle, ReportFormat::Csv, dir.path()).unwrap();
    assert_eq!(files.len(), 5);
    let read = |name: &str| {
        let mut r = csv::Reader::from_path(dir.path().join(name)).unwrap();
        let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
        let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
        (header, rows)
    };
    let (h, rows) = read("experiments.csv");
    assert_eq!(h.len(), 6 + 3 * 8);
    assert_eq!(rows.len(), 100);
    let (h, rows) = read("best_per_dataset.csv");
    assert_eq!(&h[..3], ["dataset", "dataset_size", "method"]);
    assert_eq!(rows.len(), 10);
    let (_, rows) = read("distribution_by_method.csv");
    let total: usize = rows
        .iter()
        .map(|r| (1..6).map(|i| r[i].parse::<usize>().unwrap()).sum::<usize>())
        .sum();
    assert_eq!(total, 100);

    let again = tempfile::tempdir().unwrap();
    export_report(&run.bundle, ReportFormat::Csv, again.path()).unwrap();
    for f in &files {
        let name = f.file_name().unwrap();
        assert_eq!(fs::read(f).unwrap(), fs::read(again.path().join(name)).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn best_per_dataset_ignores_input_order(seed in any::<u64>()) {
        let run = corpus_run();
        let reg = run.scheme.registry();
        let expected = best_per_dataset(&run.bundle.experiments, reg);
        let mut shuffled = run.bundle.experiments.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(best_per_dataset(&shuffled, reg), expected);
    }
}
