//! Metrics records, their CSV files and SVG line charts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::config::ModelKind;
use crate::error::{Error, Result};
use crate::train::EpochRecord;

pub const ACCURACY_HEADER: &str = "model,seed,scale,accuracy";
pub const DISTANCE_HEADER: &str = "model,seed,scale,distance";
pub const IOU_HEADER: &str = "scale_lo,scale_hi,mean_iou,iou_bg,iou_disk,iou_star";
pub const IOU_SUMMARY_HEADER: &str = "model,seed,scale_lo,scale_hi,mean_iou,iou_bg,iou_disk,iou_star";
pub const HISTORY_HEADER: &str = "model,seed,epoch,train_loss,val_score";

/// Mean IoU over test images whose objects were rescaled within `[lo, hi]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RangeIou {
    pub lo: f64,
    pub hi: f64,
    pub per_class: Vec<f64>,
    pub mean: f64,
}

/// Everything one training run measured.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub model: ModelKind,
    pub seed: u64,
    /// `(scale factor, accuracy)`.
    pub accuracy: Vec<(f64, f64)>,
    pub iou: Vec<RangeIou>,
    /// `(scale factor, normalized feature distance)`.
    pub distance: Vec<(f64, f64)>,
    pub history: Vec<EpochRecord>,
    pub seconds: f64,
}

impl MetricsRecord {
    pub fn new(model: ModelKind, seed: u64) -> Self {
        MetricsRecord {
            model,
            seed,
            accuracy: Vec::new(),
            iou: Vec::new(),
            distance: Vec::new(),
            history: Vec::new(),
            seconds: 0.0,
        }
    }
}

fn table(header: &str, rows: impl Iterator<Item = String>) -> String {
    let mut s = format!("{header}\n");
    for r in rows {
        s.push_str(&r);
        s.push('\n');
    }
    s
}

pub fn accuracy_csv(records: &[MetricsRecord]) -> String {
    table(
        ACCURACY_HEADER,
        records.iter().flat_map(|r| r.accuracy.iter().map(move |(s, a)| format!("{},{},{s},{a}", r.model, r.seed))),
    )
}

pub fn distance_csv(records: &[MetricsRecord]) -> String {
    table(
        DISTANCE_HEADER,
        records.iter().flat_map(|r| r.distance.iter().map(move |(s, d)| format!("{},{},{s},{d}", r.model, r.seed))),
    )
}

fn iou_fields(r: &RangeIou) -> String {
    let per: Vec<String> = r.per_class.iter().map(|v| v.to_string()).collect();
    format!("{},{},{},{}", r.lo, r.hi, r.mean, per.join(","))
}

/// The single-model evaluation table.
pub fn iou_csv(ranges: &[RangeIou]) -> String {
    table(IOU_HEADER, ranges.iter().map(iou_fields))
}

pub fn iou_summary_csv(records: &[MetricsRecord]) -> String {
    table(
        IOU_SUMMARY_HEADER,
        records.iter().flat_map(|r| r.iou.iter().map(move |i| format!("{},{},{}", r.model, r.seed, iou_fields(i)))),
    )
}

pub fn history_csv(records: &[MetricsRecord]) -> String {
    table(
        HISTORY_HEADER,
        records.iter().flat_map(|r| {
            r.history.iter().map(move |h| format!("{},{},{},{},{}", r.model, r.seed, h.epoch, h.train_loss, h.val_score))
        }),
    )
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

/// Reads a `model,seed,x,y` CSV (accuracy or distance) into per-model series
/// averaged over seeds.
pub fn read_model_series(path: impl AsRef<Path>) -> Result<Vec<Series>> {
    let p = path.as_ref();
    let text = fs::read_to_string(p)?;
    let mut acc: BTreeMap<String, BTreeMap<u64, (f64, f64, usize)>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate().skip(1).filter(|(_, l)| !l.is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        let parsed = (f.len() == 4).then(|| Some((f[2].parse::<f64>().ok()?, f[3].parse::<f64>().ok()?))).flatten();
        let (x, y) = parsed.ok_or_else(|| Error::Format(format!("{}:{}: expected model,seed,x,y", p.display(), i + 1)))?;
        let e = acc.entry(f[0].to_string()).or_default().entry(x.to_bits()).or_insert((x, 0.0, 0));
        e.1 += y;
        e.2 += 1;
    }
    Ok(acc
        .into_iter()
        .map(|(name, pts)| {
            let mut points: Vec<(f64, f64)> = pts.values().map(|&(x, s, n)| (x, s / n as f64)).collect();
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series { name, points }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Place x on a base-2 logarithmic axis.
    pub log2_x: bool,
    pub series: Vec<Series>,
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// A self-contained SVG 1.1 line chart: one polyline per series, axis labels,
/// a tick at every distinct x value and a legend.
pub fn render_svg(chart: &Chart) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (70.0, 150.0, 40.0, 60.0);
    let tx = |x: f64| if chart.log2_x { x.log2() } else { x };
    let pts = || chart.series.iter().flat_map(|s| s.points.iter());
    let mut xs: Vec<f64> = pts().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let (mut x0, mut x1) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(tx(x)), b.max(tx(x))));
    let (mut y0, mut y1) = pts().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 == x0 {
        (x0, x1) = (x0 - 0.5, x1 + 0.5);
    }
    if y1 == y0 {
        (y0, y1) = (y0 - 0.5, y1 + 0.5);
    }
    let (pw, ph) = (w - left - right, h - top - bottom);
    let px = |x: f64| left + (tx(x) - x0) / (x1 - x0) * pw;
    let py = |y: f64| top + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        left + pw / 2.0,
        escape(&chart.title)
    );
    let _ = writeln!(s, r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for &x in &xs {
        let gx = px(x);
        let _ = writeln!(s, r#"<line x1="{gx:.2}" y1="{}" x2="{gx:.2}" y2="{}" stroke="black"/>"#, top + ph, top + ph + 5.0);
        let _ = writeln!(s, r#"<text x="{gx:.2}" y="{}" text-anchor="middle">{}</text>"#, top + ph + 18.0, tick_label(x));
    }
    for i in 0..=4 {
        let y = y0 + (y1 - y0) * i as f64 / 4.0;
        let gy = py(y);
        let _ = writeln!(s, r#"<line x1="{}" y1="{gy:.2}" x2="{left}" y2="{gy:.2}" stroke="black"/>"#, left - 5.0);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, left - 8.0, gy + 4.0, tick_label(y));
    }
    let x_label = if chart.log2_x { format!("{} (log2 axis)", chart.x_label) } else { chart.x_label.clone() };
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, left + pw / 2.0, h - 15.0, escape(&x_label));
    let _ = writeln!(
        s,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
        top + ph / 2.0,
        escape(&chart.y_label)
    );
    for (i, series) in chart.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = series.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, coords.join(" "));
        let ly = top + 10.0 + 18.0 * i as f64;
        let lx = w - right + 15.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&series.name));
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_records_give_header_only_csv() {
        assert_eq!(accuracy_csv(&[]), format!("{ACCURACY_HEADER}\n"));
        assert_eq!(iou_csv(&[]), "scale_lo,scale_hi,mean_iou,iou_bg,iou_disk,iou_star\n");
    }

    #[test]
    fn one_series_gives_one_polyline() {
        let chart = Chart {
            title: "t".into(),
            x_label: "scale".into(),
            y_label: "accuracy".into(),
            log2_x: true,
            series: vec![Series { name: "a<b".into(), points: vec![(1.0, 0.5), (2.0, 0.7)] }],
        };
        let svg = render_svg(&chart);
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(svg.contains("a&lt;b"));
    }

    #[test]
    fn tick_labels_trim_zeros() {
        assert_eq!(tick_label(2.0), "2");
        assert_eq!(tick_label(2f64.sqrt()), "1.414");
        assert_eq!(tick_label(0.5), "0.5");
    }
}
