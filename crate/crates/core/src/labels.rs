//! Energy-label style SVG rendering.
//!
//! Output is a standalone SVG 1.1 document built from fixed layout
//! constants, so identical input always yields identical bytes. Machine
//! readable attributes (`data-rating`, `data-key`, `data-compound`) make the
//! label easy to check after parsing.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metric::{MetricGroup, MetricRegistry};
use crate::numfmt::{format_index, format_value};
use crate::rating::{RatedExperiment, Rating};

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("unknown metric `{0}` for this experiment")]
    UnknownMetric(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{} label(s) failed, first: {}", .errors.len(), .errors[0])]
    Batch {
        manifest: LabelManifest,
        errors: Vec<LabelError>,
    },
}

pub const DEFAULT_PALETTE: [&str; 5] = ["#00a651", "#8dc63f", "#fff200", "#f7941d", "#ed1c24"];

mod style {
    pub const WIDTH: u32 = 360;
    pub const MARGIN: u32 = 16;
    pub const HEADER_HEIGHT: u32 = 84;
    pub const BAND_HEIGHT: u32 = 26;
    pub const BAND_GAP: u32 = 6;
    pub const BAND_MIN_WIDTH: u32 = 110;
    pub const BAND_STEP: u32 = 28;
    pub const ARROW_TIP: u32 = 13;
    pub const MARKER_X: u32 = 272;
    pub const SECTION_GAP: u32 = 18;
    pub const ROW_HEIGHT: u32 = 40;
    pub const SWATCH: u32 = 28;
    pub const FOOTER: u32 = 18;
    pub const FONT: &str = "sans-serif";
}

/// Everything needed to draw one label.
#[derive(Debug, Clone)]
pub struct LabelSpec {
    pub rated: RatedExperiment,
    /// (display name, unit) per metric key.
    pub metric_info: BTreeMap<String, (String, String)>,
    pub displayed: Vec<String>,
    pub palette: [String; 5],
    pub width: u32,
}

impl LabelSpec {
    /// Spec showing the highest-weighted metric of every group.
    pub fn new(rated: RatedExperiment, registry: &MetricRegistry) -> Self {
        let displayed = default_displayed(&rated, registry);
        let metric_info = registry
            .metrics()
            .iter()
            .map(|m| (m.key.clone(), (m.label().to_owned(), m.unit.clone())))
            .collect();
        Self {
            rated,
            metric_info,
            displayed,
            palette: DEFAULT_PALETTE.map(String::from),
            width: style::WIDTH,
        }
    }

    pub fn with_displayed<I, S>(mut self, keys: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.displayed = keys.into_iter().map(Into::into).collect();
        self
    }

    pub fn color(&self, rating: Rating) -> &str {
        &self.palette[rating.ordinal() as usize]
    }

    pub fn height(&self) -> u32 {
        style::HEADER_HEIGHT
            + 5 * (style::BAND_HEIGHT + style::BAND_GAP)
            + style::SECTION_GAP
            + self.displayed.len() as u32 * style::ROW_HEIGHT
            + style::FOOTER
            + style::MARGIN
    }
}

/// First metric (in registry order) with the largest weight in each group.
fn default_displayed(rated: &RatedExperiment, registry: &MetricRegistry) -> Vec<String> {
    let mut best: BTreeMap<MetricGroup, (f64, &str)> = BTreeMap::new();
    for m in registry.metrics() {
        if !rated.index_scores.contains_key(&m.key) {
            continue;
        }
        let slot = best.entry(m.group).or_insert((m.weight, &m.key));
        if m.weight > slot.0 {
            *slot = (m.weight, &m.key);
        }
    }
    let chosen: BTreeSet<&str> = best.values().map(|(_, k)| *k).collect();
    registry
        .metrics()
        .iter()
        .filter(|m| chosen.contains(m.key.as_str()))
        .map(|m| m.key.clone())
        .collect()
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn text_color(rating: Rating) -> &'static str {
    match rating {
        Rating::C | Rating::B => "#1a1a1a",
        _ => "#ffffff",
    }
}

pub fn render_label(spec: &LabelSpec) -> Result<String, LabelError> {
    let rated = &spec.rated;
    for key in &spec.displayed {
        if !rated.index_scores.contains_key(key) {
            return Err(LabelError::UnknownMetric(key.clone()));
        }
    }
    let cfg = &rated.record.configuration;
    let env = &rated.record.environment;
    let (w, h) = (spec.width, spec.height());
    let m = style::MARGIN;
    let font = style::FONT;
    let mut s = String::new();

    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}" data-experiment="{}" data-compound="{}">"#,
        escape(&rated.record.id),
        rated.compound
    );
    let _ = writeln!(
        s,
        r##"<rect x="1" y="1" width="{}" height="{}" rx="8" fill="#ffffff" stroke="#333333" stroke-width="2"/>"##,
        w - 2,
        h - 2
    );

    // Header
    let _ = writeln!(s, r##"<g class="header" font-family="{font}" fill="#1a1a1a">"##);
    let _ = writeln!(
        s,
        r#"<text x="{m}" y="{}" font-size="20" font-weight="bold">{}</text>"#,
        m + 18,
        escape(&cfg.method)
    );
    let _ = writeln!(
        s,
        r#"<text x="{m}" y="{}" font-size="13">Dataset: {}</text>"#,
        m + 38,
        escape(&cfg.dataset)
    );
    let _ = writeln!(
        s,
        r#"<text x="{m}" y="{}" font-size="13">Task: {}</text>"#,
        m + 55,
        escape(&cfg.task)
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="11" text-anchor="end">Environment: {}</text>"#,
        w - m,
        m + 55,
        escape(&env.id)
    );
    s.push_str("</g>\n");

    // Rating scale
    let _ = writeln!(s, r#"<g class="scale" font-family="{font}">"#);
    for rating in Rating::ALL {
        let o = rating.ordinal() as u32;
        let y = style::HEADER_HEIGHT + o * (style::BAND_HEIGHT + style::BAND_GAP);
        let bw = style::BAND_MIN_WIDTH + o * style::BAND_STEP;
        let bh = style::BAND_HEIGHT;
        let is_compound = rating == rated.compound;
        let _ = writeln!(
            s,
            r#"<g class="band" data-rating="{rating}" data-compound="{is_compound}">"#
        );
        let stroke = if is_compound {
            r##" stroke="#1a1a1a" stroke-width="3""##
        } else {
            ""
        };
        let _ = writeln!(
            s,
            r#"<polygon points="{m},{y} {x1},{y} {tip},{mid} {x1},{y2} {m},{y2}" fill="{}"{stroke}/>"#,
            spec.color(rating),
            x1 = m + bw,
            tip = m + bw + style::ARROW_TIP,
            mid = y + bh / 2,
            y2 = y + bh,
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="18" font-weight="bold" fill="{}">{rating}</text>"#,
            m + 8,
            y + bh - 7,
            text_color(rating)
        );
        if is_compound {
            let mx = style::MARKER_X;
            let _ = writeln!(
                s,
                r##"<polygon class="compound-marker" points="{mx},{mid} {},{y0} {},{y0} {},{y3} {},{y3}" fill="#1a1a1a"/>"##,
                mx + 16,
                w - m,
                w - m,
                mx + 16,
                mid = y + bh / 2,
                y0 = y - 4,
                y3 = y + bh + 4,
            );
            let _ = writeln!(
                s,
                r##"<text class="compound-letter" x="{}" y="{}" font-size="24" font-weight="bold" fill="#ffffff" text-anchor="middle">{rating}</text>"##,
                (mx + 16 + w - m) / 2,
                y + bh - 4
            );
        }
        s.push_str("</g>\n");
    }
    s.push_str("</g>\n");

    // Metric rows
    let rows_top = style::HEADER_HEIGHT + 5 * (style::BAND_HEIGHT + style::BAND_GAP) + style::SECTION_GAP;
    let _ = writeln!(s, r#"<g class="metrics" font-family="{font}">"#);
    for (i, key) in spec.displayed.iter().enumerate() {
        let y = rows_top + i as u32 * style::ROW_HEIGHT;
        let rating = rated.metric_ratings[key];
        let index = rated.index_scores[key];
        let (name, unit) = spec
            .metric_info
            .get(key)
            .cloned()
            .unwrap_or_else(|| (key.clone(), String::new()));
        let value = rated
            .record
            .value(key)
            .map(|v| {
                if unit.is_empty() {
                    format_value(v)
                } else {
                    format!("{}\u{2009}{}", format_value(v), unit)
                }
            })
            .unwrap_or_default();
        let _ = writeln!(
            s,
            r#"<g class="metric" data-key="{}" data-rating="{rating}">"#,
            escape(key)
        );
        let _ = writeln!(
            s,
            r#"<rect class="swatch" x="{m}" y="{y}" width="{sw}" height="{sw}" rx="4" fill="{}"/>"#,
            spec.color(rating),
            sw = style::SWATCH
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="16" font-weight="bold" fill="{}" text-anchor="middle">{rating}</text>"#,
            m + style::SWATCH / 2,
            y + 20,
            text_color(rating)
        );
        let tx = m + style::SWATCH + 10;
        let _ = writeln!(
            s,
            r##"<text class="name" x="{tx}" y="{}" font-size="13" fill="#1a1a1a">{}</text>"##,
            y + 12,
            escape(&name)
        );
        let _ = writeln!(
            s,
            r##"<text class="value" x="{tx}" y="{}" font-size="11" fill="#555555">{}</text>"##,
            y + 26,
            escape(&value)
        );
        let _ = writeln!(
            s,
            r##"<text class="index" x="{}" y="{}" font-size="15" fill="#1a1a1a" text-anchor="end">{}</text>"##,
            w - m,
            y + 19,
            format_index(index)
        );
        s.push_str("</g>\n");
    }
    s.push_str("</g>\n");

    let _ = writeln!(
        s,
        r##"<text class="footer" x="{}" y="{}" font-family="{font}" font-size="9" fill="#777777" text-anchor="end">index relative to environment reference</text>"##,
        w - m,
        h - m + 4
    );
    s.push_str("</svg>\n");
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelManifestEntry {
    pub file: String,
    pub experiment: String,
    pub compound: Rating,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelManifest {
    pub labels: Vec<LabelManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn sanitize(part: &str) -> String {
    part.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// `<dataset>_<method>_<environment>.svg`, sanitized.
pub fn label_file_stem(rated: &RatedExperiment) -> String {
    let cfg = &rated.record.configuration;
    format!(
        "{}_{}_{}",
        sanitize(&cfg.dataset),
        sanitize(&cfg.method),
        sanitize(&rated.record.environment.id)
    )
}

/// Renders one label per experiment into `dir` and writes `manifest.json`.
/// Failures are collected; the manifest lists the labels that were written.
pub fn render_label_batch(
    rated: &[RatedExperiment],
    registry: &MetricRegistry,
    dir: &Path,
) -> Result<LabelManifest, LabelError> {
    fs::create_dir_all(dir).map_err(|source| LabelError::Io {
        path: dir.to_path_buf(),
        source,
    })?;

    let mut used = BTreeSet::new();
    let mut manifest = LabelManifest::default();
    let mut errors = Vec::new();
    for r in rated {
        let stem = label_file_stem(r);
        let mut name = format!("{stem}.svg");
        let mut n = 2;
        while !used.insert(name.clone()) {
            name = format!("{stem}_{n}.svg");
            n += 1;
        }
        let svg = match render_label(&LabelSpec::new(r.clone(), registry)) {
            Ok(svg) => svg,
            Err(e) => {
                errors.push(e);
                continue;
            }
        };
        let path = dir.join(&name);
        match fs::write(&path, svg) {
            Ok(()) => manifest.labels.push(LabelManifestEntry {
                file: name,
                experiment: r.record.id.clone(),
                compound: r.compound,
            }),
            Err(source) => errors.push(LabelError::Io { path, source }),
        }
    }

    let path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    if let Err(source) = fs::write(&path, text) {
        errors.push(LabelError::Io { path, source });
    }

    if errors.is_empty() {
        Ok(manifest)
    } else {
        Err(LabelError::Batch { manifest, errors })
    }
}
