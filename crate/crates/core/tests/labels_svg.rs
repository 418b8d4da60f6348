mod common;

use std::fs;

use common::{fixtures, record};
use effindex::ingest::load_corpus;
use effindex::labels::{
    render_label, render_label_batch, LabelManifest, LabelSpec, DEFAULT_PALETTE, MANIFEST_FILE,
};
use effindex::pipeline::{rate_records, RatingRun};
use effindex::rating::SchemeSpec;
use effindex::{default_registry, Rating, RatedExperiment};

fn corpus_run() -> RatingRun {
    let reg = default_registry();
    let corpus = load_corpus(&[fixtures().join("logs")], &reg).unwrap();
    rate_records(&corpus.records, &reg, &SchemeSpec::default()).unwrap()
}

fn palette_color(r: Rating) -> &'static str {
    DEFAULT_PALETTE[r.ordinal() as usize]
}

fn check_label(svg: &str, rated: &RatedExperiment, displayed: &[String]) {
    let doc = roxmltree::Document::parse(svg).expect("well-formed SVG");
    let root = doc.root_element();
    assert_eq!(root.tag_name().name(), "svg");
    assert_eq!(root.attribute("data-experiment"), Some(rated.id()));
    assert_eq!(root.attribute("data-compound"), Some(rated.compound.to_string().as_str()));

    let highlighted: Vec<_> = doc
        .descendants()
        .filter(|n| n.attribute("class") == Some("band") && n.attribute("data-compound") == Some("true"))
        .map(|n| n.attribute("data-rating").unwrap().to_owned())
        .collect();
    assert_eq!(highlighted, [rated.compound.to_string()]);

    let rows: Vec<_> = doc
        .descendants()
        .filter(|n| n.attribute("class") == Some("metric"))
        .collect();
    assert_eq!(rows.len(), displayed.len());
    for (row, key) in rows.iter().zip(displayed) {
        assert_eq!(row.attribute("data-key"), Some(key.as_str()));
        let expected = rated.metric_ratings[key];
        assert_eq!(row.attribute("data-rating"), Some(expected.to_string().as_str()));
        let swatch = row
            .descendants()
            .find(|n| n.attribute("class") == Some("swatch"))
            .unwrap();
        assert_eq!(swatch.attribute("fill"), Some(palette_color(expected)));
    }
}

#[test]
fn every_fixture_label_is_deterministic_and_consistent() {
    let run = corpus_run();
    let reg = run.scheme.registry();
    for rated in &run.bundle.experiments {
        let spec = LabelSpec::new(rated.clone(), reg);
        let a = render_label(&spec).unwrap();
        let b = render_label(&LabelSpec::new(rated.clone(), reg)).unwrap();
        assert_eq!(a, b);
        check_label(&a, rated, &spec.displayed);
    }
}

#[test]
fn all_metrics_displayed() {
    let run = corpus_run();
    let rated = &run.bundle.experiments[17];
    let keys: Vec<String> = run.scheme.registry().metrics().iter().map(|m| m.key.clone()).collect();
    let spec = LabelSpec::new(rated.clone(), run.scheme.registry()).with_displayed(keys.clone());
    check_label(&render_label(&spec).unwrap(), rated, &keys);
}

#[test]
fn markup_in_names_is_escaped() {
    let mut r = record("a&b<\"c\">", "d<1>", "M&M", &[]);
    r.environment.id = "e'1".into();
    let reg = default_registry();
    let run = rate_records(&[r], &reg, &SchemeSpec::default()).unwrap();
    let rated = &run.bundle.experiments[0];
    let svg = render_label(&LabelSpec::new(rated.clone(), run.scheme.registry())).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    assert_eq!(doc.root_element().attribute("data-experiment"), Some("a&b<\"c\">"));
    assert!(doc.descendants().any(|n| n.text() == Some("M&M")));
}

#[test]
fn unknown_displayed_metric() {
    let run = corpus_run();
    let spec = LabelSpec::new(run.bundle.experiments[0].clone(), run.scheme.registry())
        .with_displayed(["nope"]);
    assert!(render_label(&spec).is_err());
}

#[test]
fn batch_writes_manifest() {
    let run = corpus_run();
    let dir = tempfile::tempdir().unwrap();
    let manifest = render_label_batch(&run.bundle.experiments, run.scheme.registry(), dir.path()).unwrap();
    assert_eq!(manifest.labels.len(), 100);
    let on_disk: LabelManifest =
        serde_json::from_str(&fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(on_disk, manifest);
    let svgs = fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "svg"))
        .count();
    assert_eq!(svgs, 100);
    let first = &manifest.labels[0];
    let text = fs::read_to_string(dir.path().join(&first.file)).unwrap();
    assert!(text.contains(&format!("data-experiment=\"{}\"", first.experiment)));
}
