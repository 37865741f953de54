//! Standalone SVG charts and a markdown summary built from the metric files.

use std::fmt::Write as _;
use std::path::PathBuf;

use super::dataset::write_atomic;
use super::pipeline::{read_csv, AllocationSummaryRow, Layout, MatchingSummaryRow};
use crate::error::{Error, Result};
use crate::neural::train::EpochStats;

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

/// Line chart with one polyline and legend entry per series. `y_range`
/// fixes the vertical axis; otherwise it spans the data.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series], y_range: Option<(f64, f64)>) -> String {
    let (x0, x1) = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y0, y1) = y_range.unwrap_or_else(|| bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.1))));
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + pw / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for k in 0..=5 {
        let f = k as f64 / 5.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(
            s,
            r##"<line x1="{px:.1}" y1="{:.1}" x2="{px:.1}" y2="{:.1}" stroke="#ccc"/><text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>"##,
            TOP,
            TOP + ph,
            TOP + ph + 16.0,
            tick(xv)
        );
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{py:.1}" x2="{:.1}" y2="{py:.1}" stroke="#ccc"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            py + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        H - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(y_label)
    );
    for (k, series) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = series
            .points
            .iter()
            .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            pts.join(" ")
        );
        for p in &pts {
            let (cx, cy) = p.split_once(',').expect("formatted pair");
            let _ = writeln!(s, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>"#);
        }
        let ly = TOP + 10.0 + 18.0 * k as f64;
        let lx = LEFT + pw + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&series.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.round() {
        format!("{v:.0}")
    } else if v.abs() >= 1.0 {
        format!("{v:.2}")
    } else {
        format!("{v:.3}")
    }
}

fn group<T>(rows: &[T], key: impl Fn(&T) -> &str, point: impl Fn(&T) -> Option<(f64, f64)>) -> Vec<Series> {
    let mut out: Vec<Series> = Vec::new();
    for r in rows {
        let Some(p) = point(r) else { continue };
        match out.iter_mut().find(|s| s.name == key(r)) {
            Some(s) => s.points.push(p),
            None => out.push(Series {
                name: key(r).to_string(),
                points: vec![p],
            }),
        }
    }
    out
}

/// Writes charts for whichever metric files exist and returns their paths.
pub fn run_report(layout: &Layout) -> Result<Vec<PathBuf>> {
    let metrics = layout.metrics();
    let dir = layout.report();
    let mut written = Vec::new();
    let mut summary = String::from("# Results\n");

    let matching = metrics.join("matching.csv");
    if matching.exists() {
        let rows: Vec<MatchingSummaryRow> = read_csv(&matching)?;
        let series = group(
            &rows,
            |r| r.method.as_str(),
            |r| (r.history > 0).then_some((r.history as f64, r.umac)),
        );
        let path = dir.join("umac.svg");
        write_atomic(
            &path,
            line_chart("User matching accuracy", "history M", "UMAC", &series, Some((0.0, 1.0))).as_bytes(),
        )?;
        written.push(path);
        summary.push_str("\n## Matching\n\n| method | M | samples | UMAC |\n|---|---|---|---|\n");
        for r in &rows {
            let _ = writeln!(summary, "| {} | {} | {} | {:.4} |", r.method, r.history, r.samples, r.umac);
        }
    }

    let allocation = metrics.join("allocation.csv");
    if allocation.exists() {
        let rows: Vec<AllocationSummaryRow> = read_csv(&allocation)?;
        let series = group(
            &rows,
            |r| r.method.as_str(),
            |r| (r.users > 0).then_some((r.users as f64, r.atrr)),
        );
        let path = dir.join("atrr.svg");
        write_atomic(
            &path,
            line_chart("Achievable rate ratio", "users U", "ATRR", &series, Some((0.0, 1.1))).as_bytes(),
        )?;
        written.push(path);
        summary.push_str("\n## Allocation\n\n| method | U | samples | ATRR |\n|---|---|---|---|\n");
        for r in &rows {
            let u = if r.users == 0 { "all".to_string() } else { r.users.to_string() };
            let _ = writeln!(summary, "| {} | {} | {} | {:.4} |", r.method, u, r.samples, r.atrr);
        }
    }

    if metrics.is_dir() {
        let mut losses: Vec<PathBuf> = std::fs::read_dir(&metrics)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("loss_") && n.ends_with(".csv"))
            })
            .collect();
        losses.sort();
        for p in losses {
            let rows: Vec<EpochStats> = read_csv(&p)?;
            let name = p
                .file_stem()
                .and_then(|n| n.to_str())
                .ok_or(Error::Format("loss file name".into()))?
                .to_string();
            let series = vec![
                Series {
                    name: "train".into(),
                    points: rows.iter().map(|r| (r.epoch as f64, r.train_loss)).collect(),
                },
                Series {
                    name: "valid".into(),
                    points: rows.iter().map(|r| (r.epoch as f64, r.valid_loss)).collect(),
                },
            ];
            let path = dir.join(format!("{name}.svg"));
            write_atomic(&path, line_chart(&name, "epoch", "loss", &series, None).as_bytes())?;
            written.push(path);
        }
    }

    if written.is_empty() {
        return Err(Error::Empty("metric files to report"));
    }
    let path = dir.join("summary.md");
    write_atomic(&path, summary.as_bytes())?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_escapes_and_plots_every_point() {
        let s = line_chart(
            "a < b",
            "x",
            "y",
            &[
                Series {
                    name: "one & two".into(),
                    points: vec![(1.0, 0.5), (2.0, 0.7), (3.0, 0.9)],
                },
                Series {
                    name: "flat".into(),
                    points: vec![(1.0, 0.2)],
                },
            ],
            None,
        );
        assert!(s.contains("a &lt; b") && s.contains("one &amp; two"));
        assert_eq!(s.matches("<circle").count(), 4);
        assert!(s.trim_end().ends_with("</svg>"));
    }
}
