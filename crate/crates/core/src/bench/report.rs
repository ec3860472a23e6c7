//! CSV reports, prediction files and sweep charts.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use super::{Copies, RepMetrics, RunReport, SweepPoint};
use crate::classifiers::ClassifierModel;
use crate::error::{Error, Result};

pub const REPORT_COLUMNS: [&str; 14] = [
    "experiment_id",
    "classifier",
    "features",
    "copies",
    "repetition",
    "split_seed",
    "ba_train",
    "ba_test",
    "psucc_train",
    "psucc_test",
    "mse_train",
    "mse_test",
    "wall_ms",
    "status",
];

pub const SWEEP_COLUMNS: [&str; 12] = [
    "experiment_id",
    "classifier",
    "features",
    "copies",
    "repetitions_ok",
    "repetitions",
    "ba_test_mean",
    "ba_test_std",
    "ba_train_mean",
    "ba_train_std",
    "underflow_fraction",
    "underflow",
];

type Metric = fn(&RepMetrics) -> f64;

const METRICS: [Metric; 6] = [
    |m| m.ba_train,
    |m| m.ba_test,
    |m| m.psucc_train,
    |m| m.psucc_test,
    |m| m.mse_train,
    |m| m.mse_test,
];

fn csv_err(e: impl std::fmt::Display) -> Error {
    Error::Format(format!("csv output: {e}"))
}

struct Table {
    w: csv::Writer<Vec<u8>>,
}

impl Table {
    fn new(header: &[&str]) -> Result<Self> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(csv_err)?;
        Ok(Table { w })
    }

    fn row(&mut self, cells: &[String]) -> Result<()> {
        self.w.write_record(cells).map_err(csv_err)
    }

    fn finish(self) -> Result<String> {
        let bytes = self.w.into_inner().map_err(csv_err)?;
        String::from_utf8(bytes).map_err(csv_err)
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

/// Per-repetition rows followed by `mean` and `std` rows over the successful ones.
/// `wall_ms` stays empty unless wall time recording is on, so reports are reproducible.
pub fn report_to_csv(r: &RunReport) -> Result<String> {
    let mut t = Table::new(&REPORT_COLUMNS)?;
    let lead = |rep: String, seed: String| {
        vec![
            r.experiment_id.clone(),
            r.classifier.name().to_string(),
            r.features.to_string(),
            r.copies.to_string(),
            rep,
            seed,
        ]
    };
    let wall = |ms: f64| if r.record_wall_time { num(ms) } else { String::new() };
    for row in &r.rows {
        let mut cells = lead(row.repetition.to_string(), row.split_seed.to_string());
        match &row.outcome {
            Ok(m) => {
                cells.extend(METRICS.iter().map(|f| num(f(m))));
                cells.push(wall(row.wall_ms));
                cells.push("ok".into());
            }
            Err(reason) => {
                cells.extend(vec![String::new(); METRICS.len()]);
                cells.push(wall(row.wall_ms));
                cells.push(format!("n/a: {reason}"));
            }
        }
        t.row(&cells)?;
    }
    let ok = r.ok_count();
    let status = if ok == 0 {
        "n/a".to_string()
    } else {
        format!("{ok}/{} ok", r.rows.len())
    };
    let walls: Vec<f64> = r.rows.iter().filter(|x| x.outcome.is_ok()).map(|x| x.wall_ms).collect();
    let wall_stats = super::mean_std(&walls);
    for (label, pick) in [("mean", 0usize), ("std", 1)] {
        let mut cells = lead(label.into(), String::new());
        for f in METRICS {
            cells.push(
                r.aggregate(f)
                    .map(|s| num(if pick == 0 { s.0 } else { s.1 }))
                    .unwrap_or_default(),
            );
        }
        cells.push(match wall_stats {
            Some(s) if r.record_wall_time => num(if pick == 0 { s.0 } else { s.1 }),
            _ => String::new(),
        });
        cells.push(status.clone());
        t.row(&cells)?;
    }
    t.finish()
}

/// One row per copy count.
pub fn sweep_to_csv(points: &[SweepPoint]) -> Result<String> {
    let mut t = Table::new(&SWEEP_COLUMNS)?;
    for p in points {
        let r = &p.report;
        let pair = |s: Option<(f64, f64)>| match s {
            Some((m, d)) => [num(m), num(d)],
            None => [String::new(), String::new()],
        };
        let [te_m, te_s] = pair(p.ba_test());
        let [tr_m, tr_s] = pair(p.ba_train());
        t.row(&[
            r.experiment_id.clone(),
            r.classifier.name().to_string(),
            r.features.to_string(),
            p.copies.to_string(),
            r.ok_count().to_string(),
            r.rows.len().to_string(),
            te_m,
            te_s,
            tr_m,
            tr_s,
            num(p.underflow_fraction),
            p.underflow.to_string(),
        ])?;
    }
    t.finish()
}

/// Minimal line chart of test BA (percent) against the copy count, with ±std bars.
pub fn sweep_to_svg(points: &[SweepPoint], title: &str) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const L: f64 = 60.0;
    const R: f64 = 20.0;
    const T: f64 = 40.0;
    const B: f64 = 50.0;
    let series: Vec<(String, Option<(f64, f64)>)> = points
        .iter()
        .map(|p| {
            let label = match p.copies {
                Copies::Infinite => "∞".to_string(),
                c => c.to_string(),
            };
            (label, p.ba_test().map(|(m, s)| (100.0 * m, 100.0 * s)))
        })
        .collect();
    let vals: Vec<(f64, f64)> = series.iter().filter_map(|s| s.1).collect();
    let lo = vals.iter().map(|(m, s)| m - s).fold(f64::INFINITY, f64::min);
    let hi = vals.iter().map(|(m, s)| m + s).fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if vals.is_empty() {
        (0.0, 100.0)
    } else {
        let lo = (lo / 5.0).floor() * 5.0;
        let hi = ((hi / 5.0).ceil() * 5.0).max(lo + 5.0);
        (lo.max(0.0), hi.min(100.0).max(lo + 5.0))
    };
    let n = series.len().max(1);
    let x = |i: usize| {
        if n == 1 {
            L + (W - L - R) / 2.0
        } else {
            L + (W - L - R) * i as f64 / (n - 1) as f64
        }
    };
    let y = |v: f64| T + (H - T - B) * (hi - v) / (hi - lo);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<path d="M{L} {T} V{:.1} H{:.1}" fill="none" stroke="black"/>"#,
        H - B,
        W - R
    );
    for k in 0..=5 {
        let v = lo + (hi - lo) * k as f64 / 5.0;
        let yy = y(v);
        let _ = writeln!(
            s,
            r##"<line x1="{:.1}" y1="{yy:.1}" x2="{L}" y2="{yy:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end">{v:.1}</text>"##,
            L - 4.0,
            L - 7.0,
            yy + 4.0
        );
    }
    for (i, (label, _)) in series.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            x(i),
            H - B + 18.0,
            escape(label)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">copies m</text>"#,
        L + (W - L - R) / 2.0,
        H - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{:.1}" text-anchor="middle" transform="rotate(-90 15 {:.1})">balanced accuracy (%)</text>"#,
        T + (H - T - B) / 2.0,
        T + (H - T - B) / 2.0
    );
    let pts: Vec<String> = series
        .iter()
        .enumerate()
        .filter_map(|(i, (_, v))| v.map(|(m, _)| format!("{:.1},{:.1}", x(i), y(m))))
        .collect();
    if !pts.is_empty() {
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#,
            pts.join(" ")
        );
    }
    for (i, (_, v)) in series.iter().enumerate() {
        if let Some((m, d)) = v {
            let xx = x(i);
            let _ = writeln!(
                s,
                r#"<line x1="{xx:.1}" y1="{:.1}" x2="{xx:.1}" y2="{:.1}" stroke="steelblue"/><circle cx="{xx:.1}" cy="{:.1}" r="3" fill="steelblue"/>"#,
                y(m - d),
                y(m + d),
                y(*m)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Feature rows of a headed numeric CSV. A column named `label` is skipped so
/// labeled files can be scored directly.
pub fn parse_feature_csv(bytes: &[u8]) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| Error::Format(format!("csv header: {e}")))?
        .clone();
    let keep: Vec<usize> = (0..headers.len()).filter(|&i| &headers[i] != "label").collect();
    if keep.is_empty() {
        return Err(Error::Format("csv has no feature columns".into()));
    }
    let mut values = Vec::new();
    let mut rows = 0;
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Format(format!("csv row {}: {e}", line + 2)))?;
        for &i in &keep {
            let cell = rec.get(i).unwrap_or("").trim();
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::Format(format!("csv row {}: {cell:?} is not a number", line + 2)))?;
            if !v.is_finite() {
                return Err(Error::Format(format!("csv row {}: non-finite value", line + 2)));
            }
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Format("csv has no data rows".into()));
    }
    Ok(DMatrix::from_row_slice(rows, keep.len(), &values))
}

/// `row,prediction,score_<label>...`, predictions given as original label values.
pub fn predictions_to_csv(model: &ClassifierModel, scores: &DMatrix<f64>, preds: &[usize]) -> Result<String> {
    let mut header = vec!["row".to_string(), "prediction".to_string()];
    header.extend(model.class_labels.iter().map(|l| format!("score_{l}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = Table::new(&header)?;
    for (i, &p) in preds.iter().enumerate() {
        let mut cells = vec![i.to_string(), model.class_labels[p - 1].to_string()];
        cells.extend(scores.row(i).iter().map(|&v| num(v)));
        t.row(&cells)?;
    }
    t.finish()
}
