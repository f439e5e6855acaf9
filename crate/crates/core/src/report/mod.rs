//! Static SVG figures with CSV sidecars: association heatmaps, bias-score
//! bars and per-class distribution charts.

mod svg;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io;

use serde::Serialize;

use crate::association::{AssociationRow, Direction, NEG_LOG10_THRESHOLD};
use crate::metrics::{BiasScore, ClassDistribution};

use svg::{escape, num, Svg};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("nothing to plot: {0}")]
    Empty(&'static str),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// How infinite odds ratios are printed in cells.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum InfiniteDisplay {
    /// The `∞` sign.
    #[default]
    Symbol,
    /// The Haldane-Anscombe corrected value (+0.5 per cell).
    Haldane,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapStyle {
    pub omit_below_one: bool,
    /// −log10 p at which color intensity saturates.
    pub intensity_ceiling: f64,
    pub infinite: InfiniteDisplay,
    pub cell_width: f64,
    pub cell_height: f64,
    pub title: Option<String>,
}

impl Default for HeatmapStyle {
    fn default() -> Self {
        HeatmapStyle {
            omit_below_one: true,
            intensity_ceiling: 10.0,
            infinite: InfiniteDisplay::Symbol,
            cell_width: 110.0,
            cell_height: 26.0,
            title: None,
        }
    }
}

/// A rendered figure and its sidecar table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Figure {
    pub svg: String,
    pub csv: String,
}

#[derive(Debug, Clone, Serialize)]
struct HeatmapCell<'a> {
    condition: &'a str,
    subject: &'a str,
    direction: Direction,
    text: String,
    intensity: String,
    omitted: bool,
    odds_ratio: f64,
    p: f64,
    neg_log10_p: f64,
    significant: bool,
}

/// Text printed in a heatmap cell.
pub fn cell_text(row: &AssociationRow, style: &HeatmapStyle) -> String {
    if style.omit_below_one && row.omitted() {
        return String::new();
    }
    let value = if row.odds_ratio.is_infinite() {
        match style.infinite {
            InfiniteDisplay::Symbol => "∞".to_string(),
            InfiniteDisplay::Haldane => {
                let h = |x: u64| x as f64 + 0.5;
                format!("{:.2}", (h(row.a) * h(row.d)) / (h(row.b) * h(row.c)))
            }
        }
    } else {
        format!("{:.2}", row.odds_ratio)
    };
    if row.significant {
        format!("{value}*")
    } else {
        value
    }
}

/// Intensity in [0, 1] from −log10 p, clamped at the style ceiling.
pub fn intensity(row: &AssociationRow, style: &HeatmapStyle) -> f64 {
    let ceiling = style.intensity_ceiling.max(f64::MIN_POSITIVE);
    (row.neg_log10_p / ceiling).clamp(0.0, 1.0)
}

fn color(t: f64) -> String {
    // white to deep blue
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(255.0, 8.0), lerp(255.0, 48.0), lerp(255.0, 107.0))
}

/// Conditions as rows, subjects as columns. Rows with several directions get
/// one row per (condition, direction).
pub fn heatmap(rows: &[AssociationRow], style: &HeatmapStyle) -> Result<Figure, ReportError> {
    if rows.is_empty() {
        return Err(ReportError::Empty("association table"));
    }
    let mut subjects: Vec<&str> = Vec::new();
    let mut row_keys: Vec<(&str, Direction)> = Vec::new();
    for r in rows {
        if !subjects.contains(&r.subject.as_str()) {
            subjects.push(&r.subject);
        }
        if !row_keys.contains(&(r.condition.as_str(), r.direction)) {
            row_keys.push((&r.condition, r.direction));
        }
    }
    let directions: BTreeSet<Direction> = rows.iter().map(|r| r.direction).collect();
    let label_of = |(c, d): (&str, Direction)| {
        if directions.len() > 1 {
            format!("{c} ({d})")
        } else {
            c.to_string()
        }
    };
    let index: BTreeMap<(&str, &str, Direction), &AssociationRow> = rows
        .iter()
        .map(|r| ((r.condition.as_str(), r.subject.as_str(), r.direction), r))
        .collect();

    let label_w = 12.0 + 7.0 * row_keys.iter().map(|k| label_of(*k).chars().count()).max().unwrap_or(0) as f64;
    let header_h = 40.0 + if style.title.is_some() { 24.0 } else { 0.0 };
    let width = label_w + style.cell_width * subjects.len() as f64 + 20.0;
    let height = header_h + style.cell_height * row_keys.len() as f64 + 20.0;
    let mut svg = Svg::new(width, height);
    if let Some(title) = &style.title {
        svg.text(width / 2.0, 18.0, "middle", 14.0, title);
    }
    for (j, s) in subjects.iter().enumerate() {
        let x = label_w + style.cell_width * (j as f64 + 0.5);
        svg.text(x, header_h - 12.0, "middle", 11.0, s);
    }
    let mut sidecar = csv::Writer::from_writer(Vec::new());
    for (i, key) in row_keys.iter().enumerate() {
        let y = header_h + style.cell_height * i as f64;
        svg.text(label_w - 6.0, y + style.cell_height * 0.65, "end", 11.0, &label_of(*key));
        for (j, s) in subjects.iter().enumerate() {
            let x = label_w + style.cell_width * j as f64;
            let Some(r) = index.get(&(key.0, *s, key.1)) else {
                svg.rect(x, y, style.cell_width, style.cell_height, "#f0f0f0", Some("#ffffff"));
                continue;
            };
            let omitted = style.omit_below_one && r.omitted();
            let t = if omitted { 0.0 } else { intensity(r, style) };
            svg.rect(x, y, style.cell_width, style.cell_height, &color(t), Some("#ffffff"));
            let text = cell_text(r, style);
            let ink = if t > 0.55 { "#ffffff" } else { "#000000" };
            svg.text_colored(x + style.cell_width / 2.0, y + style.cell_height * 0.65, "middle", 11.0, ink, &text);
            sidecar.serialize(HeatmapCell {
                condition: key.0,
                subject: s,
                direction: key.1,
                text,
                intensity: num(t),
                omitted,
                odds_ratio: r.odds_ratio,
                p: r.p,
                neg_log10_p: r.neg_log10_p,
                significant: r.significant,
            })?;
        }
    }
    let csv = String::from_utf8(sidecar.into_inner().map_err(|e| e.into_error())?)
        .expect("csv output is utf-8");
    Ok(Figure { svg: svg.finish(), csv })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChartStyle {
    pub bar_height: f64,
    pub half_width: f64,
    pub title: Option<String>,
}

impl Default for ChartStyle {
    fn default() -> Self {
        ChartStyle {
            bar_height: 22.0,
            half_width: 240.0,
            title: None,
        }
    }
}

/// Signed horizontal bars on a [−3, 3] axis; zero is the neutral line.
pub fn score_chart(scores: &[BiasScore], style: &ChartStyle) -> Result<Figure, ReportError> {
    if scores.is_empty() {
        return Err(ReportError::Empty("score table"));
    }
    let label = |s: &BiasScore| {
        if s.format == "all" {
            s.subject.clone()
        } else {
            format!("{} [{}]", s.subject, s.format)
        }
    };
    let label_w = 12.0 + 7.0 * scores.iter().map(|s| label(s).chars().count()).max().unwrap_or(0) as f64;
    let top = 30.0 + if style.title.is_some() { 24.0 } else { 0.0 };
    let zero_x = label_w + 20.0 + style.half_width;
    let width = zero_x + style.half_width + 70.0;
    let height = top + style.bar_height * scores.len() as f64 + 40.0;
    let scale = style.half_width / 3.0;
    let mut svg = Svg::new(width, height);
    if let Some(title) = &style.title {
        svg.text(width / 2.0, 18.0, "middle", 14.0, title);
    }
    svg.text(zero_x - style.half_width, top - 10.0, "start", 11.0, "Féminin");
    svg.text(zero_x + style.half_width, top - 10.0, "end", 11.0, "Masculin");
    let mut sidecar = csv::Writer::from_writer(Vec::new());
    for (i, s) in scores.iter().enumerate() {
        let y = top + style.bar_height * i as f64;
        svg.text(label_w, y + style.bar_height * 0.65, "end", 11.0, &label(s));
        let value = s.score.unwrap_or(0.0);
        let w = value.abs() * scale;
        let x = if value < 0.0 { zero_x - w } else { zero_x };
        let fill = if value < 0.0 { "#c2185b" } else { "#1565c0" };
        svg.rect(x, y + 3.0, w, style.bar_height - 6.0, fill, None);
        let text = s.score.map(|v| format!("{v:.2}")).unwrap_or_else(|| "n/a".into());
        let tx = if value < 0.0 { zero_x - w - 4.0 } else { zero_x + w + 4.0 };
        svg.text(tx, y + style.bar_height * 0.65, if value < 0.0 { "end" } else { "start" }, 10.0, &text);
        sidecar.write_record([
            s.subject.as_str(),
            s.format.as_str(),
            &text,
            &s.score.map(|v| v.to_string()).unwrap_or_default(),
            &s.run_std.to_string(),
        ])?;
    }
    let axis_y = top + style.bar_height * scores.len() as f64;
    svg.line(zero_x, top - 4.0, zero_x, axis_y + 4.0, "#000000");
    svg.line(zero_x - style.half_width, axis_y + 4.0, zero_x + style.half_width, axis_y + 4.0, "#888888");
    for tick in -3..=3 {
        let x = zero_x + tick as f64 * scale;
        svg.text(x, axis_y + 18.0, "middle", 10.0, &tick.to_string());
    }
    let mut csv_text = String::from("subject,format,label,score,run_std\n");
    csv_text.push_str(
        &String::from_utf8(sidecar.into_inner().map_err(|e| e.into_error())?).expect("utf-8"),
    );
    Ok(Figure { svg: svg.finish(), csv: csv_text })
}

/// Grouped bars per class 1–7 with standard-deviation error bars, one group
/// member per distribution.
pub fn distribution_chart(dists: &[ClassDistribution], style: &ChartStyle) -> Result<Figure, ReportError> {
    if dists.is_empty() || dists.iter().any(|d| d.per_run.is_empty()) {
        return Err(ReportError::Empty("run set"));
    }
    let palette = ["#1565c0", "#c2185b", "#2e7d32", "#ef6c00", "#6a1b9a", "#00838f", "#5d4037", "#455a64", "#9e9d24"];
    let max = dists
        .iter()
        .flat_map(|d| (0..7).map(move |c| d.mean[c] + d.std[c]))
        .fold(0.0f64, f64::max)
        .max(1.0);
    let plot_h = 240.0;
    let group_w = 14.0 * dists.len() as f64 + 16.0;
    let left = 50.0;
    let top = 30.0 + if style.title.is_some() { 24.0 } else { 0.0 };
    let width = left + group_w * 7.0 + 180.0;
    let height = top + plot_h + 50.0;
    let mut svg = Svg::new(width, height);
    if let Some(title) = &style.title {
        svg.text(width / 2.0, 18.0, "middle", 14.0, title);
    }
    let base = top + plot_h;
    svg.line(left, base, left + group_w * 7.0, base, "#000000");
    svg.line(left, top, left, base, "#000000");
    let mut csv_text = String::from("subject,class,mean,std\n");
    for c in 0..7 {
        let gx = left + group_w * c as f64 + 8.0;
        svg.text(gx + (group_w - 16.0) / 2.0, base + 16.0, "middle", 11.0, &(c + 1).to_string());
        for (k, d) in dists.iter().enumerate() {
            let x = gx + 14.0 * k as f64;
            let h = d.mean[c] / max * plot_h;
            svg.rect(x, base - h, 12.0, h, palette[k % palette.len()], None);
            let err = d.std[c] / max * plot_h;
            let cx = x + 6.0;
            svg.line(cx, base - h - err, cx, base - h + err, "#000000");
            svg.line(cx - 3.0, base - h - err, cx + 3.0, base - h - err, "#000000");
            svg.line(cx - 3.0, base - h + err, cx + 3.0, base - h + err, "#000000");
            let _ = writeln!(
                csv_text,
                "{},{},{},{}",
                csv_field(&d.subject),
                c + 1,
                d.mean[c],
                d.std[c]
            );
        }
    }
    for (k, d) in dists.iter().enumerate() {
        let y = top + 16.0 * k as f64;
        let x = left + group_w * 7.0 + 16.0;
        svg.rect(x, y, 10.0, 10.0, palette[k % palette.len()], None);
        svg.text(x + 14.0, y + 9.0, "start", 11.0, &d.subject);
    }
    svg.text(left - 6.0, top + 4.0, "end", 10.0, &format!("{max:.0}"));
    svg.text(left - 6.0, base, "end", 10.0, "0");
    Ok(Figure { svg: svg.finish(), csv: csv_text })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Marker explaining the significance star, for captions.
pub fn significance_note() -> String {
    escape(&format!("* p < 0.05 (−log10 p > {NEG_LOG10_THRESHOLD})"))
}
