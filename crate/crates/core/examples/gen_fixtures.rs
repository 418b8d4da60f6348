//! Regenerates the synthetic log corpus under `fixtures/`.
//!
//! ```text
//! cargo run -p effindex --example gen_fixtures -- fixtures
//! ```
//!
//! Output is a pure function of the seed below.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use effindex::experiment::FLAG_NO_PROBABILITIES;
use effindex::ingest::{LogDocument, Sample, SCHEMA_VERSION};
use effindex::metric::*;
use effindex::{Configuration, Environment, HyperValue};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 0x5eed_2024;
const TASK: &str = "inference";
const REPETITIONS: usize = 5;

struct Dataset {
    name: &'static str,
    size: u64,
    features: u64,
    classes: u64,
    /// Accuracy a strong model reaches.
    ceiling: f64,
}

const DATASETS: [Dataset; 10] = [
    Dataset { name: "iris", size: 150, features: 4, classes: 3, ceiling: 0.97 },
    Dataset { name: "wine", size: 178, features: 13, classes: 3, ceiling: 0.98 },
    Dataset { name: "breast_cancer", size: 569, features: 30, classes: 2, ceiling: 0.97 },
    Dataset { name: "credit_g", size: 1000, features: 61, classes: 2, ceiling: 0.77 },
    Dataset { name: "digits", size: 1797, features: 64, classes: 10, ceiling: 0.98 },
    Dataset { name: "lfw_people", size: 13233, features: 2914, classes: 62, ceiling: 0.72 },
    Dataset { name: "twenty_newsgroups", size: 18846, features: 10000, classes: 20, ceiling: 0.86 },
    Dataset { name: "adult", size: 48842, features: 108, classes: 2, ceiling: 0.87 },
    Dataset { name: "mnist", size: 70000, features: 784, classes: 10, ceiling: 0.98 },
    Dataset { name: "covertype", size: 581012, features: 54, classes: 7, ceiling: 0.95 },
];

struct Method {
    name: &'static str,
    probabilities: bool,
    /// Mean package power in watts during inference.
    watts: f64,
    /// Fraction of the dataset ceiling the method reaches.
    skill: f64,
    hyperparameters: &'static [(&'static str, HyperConst)],
}

#[derive(Clone, Copy)]
enum HyperConst {
    Int(i64),
    Float(f64),
    Str(&'static str),
    Bool(bool),
}

const METHODS: [Method; 10] = [
    Method { name: "kNN", probabilities: true, watts: 58.0, skill: 0.93,
        hyperparameters: &[("n_neighbors", HyperConst::Int(5)), ("weights", HyperConst::Str("uniform"))] },
    Method { name: "SVM", probabilities: false, watts: 61.0, skill: 0.97,
        hyperparameters: &[("kernel", HyperConst::Str("rbf")), ("C", HyperConst::Float(1.0))] },
    Method { name: "GNB", probabilities: true, watts: 36.0, skill: 0.82,
        hyperparameters: &[("var_smoothing", HyperConst::Float(1e-9))] },
    Method { name: "LR", probabilities: true, watts: 41.0, skill: 0.94,
        hyperparameters: &[("C", HyperConst::Float(1.0)), ("max_iter", HyperConst::Int(500))] },
    Method { name: "RR", probabilities: false, watts: 39.0, skill: 0.92,
        hyperparameters: &[("alpha", HyperConst::Float(1.0))] },
    Method { name: "SGD", probabilities: false, watts: 38.0, skill: 0.90,
        hyperparameters: &[("loss", HyperConst::Str("hinge")), ("early_stopping", HyperConst::Bool(false))] },
    Method { name: "AB", probabilities: true, watts: 47.0, skill: 0.91,
        hyperparameters: &[("n_estimators", HyperConst::Int(50))] },
    Method { name: "RF", probabilities: true, watts: 96.0, skill: 0.99,
        hyperparameters: &[("n_estimators", HyperConst::Int(100)), ("n_jobs", HyperConst::Int(-1))] },
    Method { name: "XRF", probabilities: true, watts: 92.0, skill: 0.985,
        hyperparameters: &[("n_estimators", HyperConst::Int(100)), ("n_jobs", HyperConst::Int(-1))] },
    Method { name: "MLP", probabilities: true, watts: 72.0, skill: 0.98,
        hyperparameters: &[("hidden_layer_sizes", HyperConst::Str("100")), ("max_iter", HyperConst::Int(200))] },
];

/// (parameters, flops per predicted instance, seconds per predicted instance)
fn complexity(m: &Method, d: &Dataset) -> (f64, f64, f64) {
    let n_train = d.size as f64 * 0.8;
    let f = d.features as f64;
    let k = d.classes as f64;
    let (params, flops) = match m.name {
        "kNN" => (n_train * f, 3.0 * n_train * f),
        "SVM" => {
            let sv = (0.3 * n_train).max(10.0);
            (sv * f + sv, 3.0 * sv * f)
        }
        "GNB" => (2.0 * k * f + k, 4.0 * k * f),
        "LR" | "RR" | "SGD" => (k * f + k, 2.0 * k * f),
        "AB" => (50.0 * 3.0, 50.0 * 2.0),
        "RF" | "XRF" => {
            let depth = n_train.log2().max(2.0);
            let nodes = 100.0 * n_train.min(2f64.powf(depth)) * 0.6;
            (3.0 * nodes, 100.0 * depth * 2.0)
        }
        "MLP" => (f * 100.0 + 100.0 + 100.0 * k + k, 2.0 * (f * 100.0 + 100.0 * k)),
        other => unreachable!("unknown method {other}"),
    };
    // Tree ensembles and neighbour search are memory bound; linear models are not.
    let seconds_per_flop = match m.name {
        "kNN" | "SVM" => 2.5e-10,
        "RF" | "XRF" | "AB" => 4.0e-9,
        _ => 1.0e-9,
    };
    let overhead = 2.0e-6;
    (params, flops, overhead + flops * seconds_per_flop)
}

fn round_sig(x: f64, digits: usize) -> f64 {
    format!("{:.*e}", digits - 1, x).parse().unwrap()
}

fn jitter(rng: &mut ChaCha8Rng, spread: f64) -> f64 {
    1.0 + rng.random_range(-spread..spread)
}

fn environment() -> Environment {
    Environment {
        id: "workstation-a".into(),
        hardware: "x86-64 workstation, 12 cores, 64 GB RAM".into(),
        software: "python 3.11, scikit-learn 1.4".into(),
        energy_mix: None,
    }
}

fn hyper(m: &Method) -> BTreeMap<String, HyperValue> {
    m.hyperparameters
        .iter()
        .map(|(k, v)| {
            let v = match *v {
                HyperConst::Int(i) => HyperValue::Int(i),
                HyperConst::Float(x) => HyperValue::Float(x),
                HyperConst::Str(s) => HyperValue::Str(s.into()),
                HyperConst::Bool(b) => HyperValue::Bool(b),
            };
            (k.to_string(), v)
        })
        .collect()
}

fn synth(m: &Method, d: &Dataset, rng: &mut ChaCha8Rng) -> LogDocument {
    let n_test = (d.size as f64 * 0.2).ceil();
    let (params, flops_per, secs_per) = complexity(m, d);
    let mut measurements: BTreeMap<String, Vec<Sample>> = BTreeMap::new();

    let mut t = 0.0;
    let mut power = Vec::new();
    let mut time = Vec::new();
    for _ in 0..REPETITIONS {
        let secs = round_sig(n_test * secs_per * jitter(rng, 0.08) + 0.004, 5);
        t += secs;
        time.push(Sample { value: secs, timestamp: Some(round_sig(t, 6)) });
        power.push(Sample {
            value: round_sig(m.watts * jitter(rng, 0.05), 5),
            timestamp: Some(round_sig(t, 6)),
        });
    }
    measurements.insert(RUNNING_TIME.into(), time);
    measurements.insert(POWER_DRAW.into(), power);

    measurements.insert(PARAMETERS.into(), vec![Sample::new(params.round())]);
    measurements.insert(FLOPS.into(), vec![Sample::new((flops_per * n_test).round())]);
    let size_bytes = (params * 8.0 + 2048.0 + rng.random_range(0.0..512.0)).round();
    measurements.insert(MODEL_SIZE.into(), vec![Sample::new(size_bytes)]);

    let top1 = (d.ceiling * m.skill * jitter(rng, 0.015)).min(0.999);
    let chance = 1.0 / d.classes as f64;
    let top1 = round_sig(top1.max(chance * 1.2), 4);
    measurements.insert(TOP1_ACCURACY.into(), vec![Sample::new(top1)]);
    if m.probabilities {
        let top5 = if d.classes <= 5 {
            1.0
        } else {
            round_sig(top1 + (1.0 - top1) * rng.random_range(0.55..0.9), 4)
        };
        measurements.insert(TOP5_ACCURACY.into(), vec![Sample::new(top5)]);
    }
    let f1_gap = if d.classes == 2 { rng.random_range(0.01..0.06) } else { rng.random_range(0.0..0.03) };
    let f1 = round_sig((top1 - f1_gap).max(0.05), 4);
    measurements.insert(F1_SCORE.into(), vec![Sample::new(f1)]);

    let mut flags = BTreeSet::new();
    if !m.probabilities {
        flags.insert(FLAG_NO_PROBABILITIES.to_owned());
    }
    LogDocument {
        schema_version: SCHEMA_VERSION,
        id: format!("{}-{}", d.name, m.name.to_lowercase()),
        configuration: Configuration {
            task: TASK.into(),
            dataset: d.name.into(),
            method: m.name.into(),
            hyperparameters: hyper(m),
            dataset_size: Some(d.size),
        },
        environment: environment(),
        measurements,
        flags,
        extra: BTreeMap::new(),
    }
}

fn single(id: &str, method: &str, watts: f64, top1: f64, f1: f64) -> LogDocument {
    let v = |x: f64| vec![Sample::new(x)];
    let measurements = [
        (TOP1_ACCURACY, v(top1)),
        (TOP5_ACCURACY, v(1.0)),
        (F1_SCORE, v(f1)),
        (FLOPS, v(1.0e6)),
        (PARAMETERS, v(1000.0)),
        (MODEL_SIZE, v(10_000.0)),
        (POWER_DRAW, v(watts)),
        (RUNNING_TIME, v(2.0)),
    ]
    .into_iter()
    .map(|(k, s)| (k.to_owned(), s))
    .collect();
    LogDocument {
        schema_version: SCHEMA_VERSION,
        id: id.into(),
        configuration: Configuration {
            task: TASK.into(),
            dataset: "toy".into(),
            method: method.into(),
            hyperparameters: BTreeMap::new(),
            dataset_size: Some(500),
        },
        environment: environment(),
        measurements,
        flags: BTreeSet::new(),
        extra: BTreeMap::new(),
    }
}

/// Two methods share the best compound rating in one dataset and differ
/// only in power draw. Everything is relative to the explicit reference
/// `toy-ref` (see `tie/scheme.toml`).
fn tie_corpus() -> Vec<LogDocument> {
    vec![
        single("toy-ref", "REF", 50.0, 0.80, 0.80),
        // Power 50/35 = 1.43 (B), 50/25 = 2.0 (A). Accuracy 0.96/0.8 = 1.2 (B).
        single("toy-alpha", "Alpha", 35.0, 0.96, 0.96),
        single("toy-beta", "Beta", 25.0, 0.96, 0.96),
        single("toy-gamma", "Gamma", 70.0, 0.70, 0.70),
    ]
}

fn top5_pair() -> (LogDocument, LogDocument) {
    let mut with_flag = single("top5-flagged", "RR", 40.0, 0.83, 0.81);
    with_flag.measurements.remove(TOP5_ACCURACY);
    with_flag.flags.insert(FLAG_NO_PROBABILITIES.to_owned());
    let mut without = with_flag.clone();
    without.id = "top5-unflagged".into();
    without.flags.clear();
    (with_flag, without)
}

fn write(path: PathBuf, doc: &LogDocument) {
    fs::write(&path, doc.to_json_pretty()).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
}

fn main() {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    let logs = root.join("logs");
    let tie = root.join("tie");
    let top5 = root.join("top5");
    for dir in [&logs, &tie, &top5] {
        fs::create_dir_all(dir).unwrap();
    }

    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    for d in &DATASETS {
        for m in &METHODS {
            let doc = synth(m, d, &mut rng);
            write(logs.join(format!("{}_{}.json", d.name, m.name.to_lowercase())), &doc);
        }
    }

    for doc in tie_corpus() {
        write(tie.join(format!("{}.json", doc.id)), &doc);
    }
    fs::write(
        tie.join("scheme.toml"),
        "auto_reference = false\n\n[[references]]\nexperiment = \"toy-ref\"\n",
    )
    .unwrap();

    let (with_flag, without) = top5_pair();
    write(top5.join("flagged.json"), &with_flag);
    write(top5.join("unflagged.json"), &without);

    let count = fs::read_dir(&logs).unwrap().count();
    eprintln!("wrote {count} logs under {}", Path::new(&logs).display());
}
