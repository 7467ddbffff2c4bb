//! CSV outputs. Numbers use fixed six-digit formatting so identical
//! results give identical bytes; undefined values are left empty.

use std::path::{Path, PathBuf};

use multispec_core::encoder::EpochLog;
use multispec_core::eval::EvaluationReport;

use crate::pipeline::GridRow;
use crate::{Error, Result};

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let csv_err = |e: csv::Error| Error::format(path, e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.into_iter().collect::<Vec<_>>()).map_err(csv_err)?;
    }
    w.flush().map_err(Error::io(path))
}

pub fn write_encoder_log(path: impl AsRef<Path>, log: &[EpochLog]) -> Result<()> {
    write_rows(
        path.as_ref(),
        &["epoch", "lm", "ga", "cq", "com", "l2", "total"],
        log.iter().map(|e| {
            let mut r = vec![e.epoch.to_string()];
            r.extend(e.terms.iter().map(|&t| fmt(t)));
            r.push(fmt(e.l2));
            r.push(fmt(e.total));
            r
        }),
    )
}

pub fn write_decoder_log(path: impl AsRef<Path>, losses: &[f64]) -> Result<()> {
    write_rows(
        path.as_ref(),
        &["epoch", "loss"],
        losses.iter().enumerate().map(|(i, &l)| vec![(i + 1).to_string(), fmt(l)]),
    )
}

/// `<prefix>_metrics.csv` with one row per metric and
/// `<prefix>_confusion.csv` with true classes as rows. Returns both paths.
pub fn write_report(
    dir: impl AsRef<Path>,
    prefix: &str,
    report: &EvaluationReport,
    classes: &[String],
) -> Result<(PathBuf, PathBuf)> {
    let dir = dir.as_ref();
    let name = |c: usize| classes.get(c).cloned().unwrap_or_else(|| c.to_string());
    let mut rows: Vec<[String; 3]> = vec![
        ["overall".into(), "accuracy".into(), fmt(report.overall)],
        ["overall".into(), "segments".into(), report.segments.to_string()],
    ];
    if let Some(f) = report.fold {
        rows.push(["overall".into(), "fold".into(), f.to_string()]);
    }
    for (c, acc) in report.per_class.iter().enumerate() {
        rows.push(["class_accuracy".into(), name(c), fmt_opt(*acc)]);
    }
    for c in 0..report.classes {
        rows.push(["class_support".into(), name(c), report.support(c).to_string()]);
    }
    for (d, acc) in &report.per_device {
        rows.push(["device_accuracy".into(), d.clone(), fmt(*acc)]);
    }
    for (k, acc) in &report.crops {
        rows.push(["crop_accuracy".into(), fmt(*k), fmt_opt(*acc)]);
    }
    let metrics = dir.join(format!("{prefix}_metrics.csv"));
    write_rows(&metrics, &["metric", "key", "value"], rows)?;

    let confusion = dir.join(format!("{prefix}_confusion.csv"));
    let mut header = vec!["true".to_string()];
    header.extend((0..report.classes).map(name));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_rows(
        &confusion,
        &header,
        report.confusion.iter().enumerate().map(|(c, row)| {
            let mut r = vec![name(c)];
            r.extend(row.iter().map(usize::to_string));
            r
        }),
    )?;
    Ok((metrics, confusion))
}

pub fn write_curve(path: impl AsRef<Path>, curve: &[(f64, Option<f64>)]) -> Result<()> {
    write_rows(
        path.as_ref(),
        &["crop_length", "accuracy"],
        curve.iter().map(|&(k, a)| [fmt(k), fmt_opt(a)]),
    )
}

/// Reads a curve written by [`write_curve`].
pub fn read_curve(path: impl AsRef<Path>) -> Result<Vec<(f64, Option<f64>)>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::format(path, e.to_string()))?;
        let num = |s: &str| s.parse::<f64>().map_err(|e| Error::format(path, format!("{s:?}: {e}")));
        let k = num(&rec[0])?;
        let a = match rec.get(1) {
            Some(s) if !s.is_empty() => Some(num(s)?),
            _ => None,
        };
        out.push((k, a));
    }
    Ok(out)
}

pub fn write_grid(path: impl AsRef<Path>, rows: &[GridRow]) -> Result<()> {
    write_rows(
        path.as_ref(),
        &["combiner", "decoder", "accuracy"],
        rows.iter().map(|r| {
            [
                r.combiner.name().to_string(),
                r.decoder.map_or("encoder", |d| d.name()).to_string(),
                fmt(r.accuracy),
            ]
        }),
    )
}
