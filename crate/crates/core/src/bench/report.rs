//! Rendering and parsing of result tables.
//!
//! The delimited forms are lossless: floats are written in shortest
//! round-trip form and warnings are kept as `# warning:` comment lines, so
//! parsing a rendered result gives back the same value.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use super::{BenchResult, BenchRow, Classifier, CurveResult, CurveRow, Metric};
use crate::error::{Error, Result};

const WARNING_PREFIX: &str = "# warning: ";

const TABLE_HEADER: [&str; 10] = [
    "dataset",
    "classifier",
    "metric",
    "mean",
    "std",
    "repeats",
    "beats_supervised",
    "best_semisupervised",
    "failed_fits",
    "total_fits",
];

const CURVE_HEADER: [&str; 7] = [
    "dataset",
    "classifier",
    "n_unlabeled",
    "metric",
    "mean",
    "stderr",
    "repeats",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    /// Comma-separated, one row per `(dataset, classifier, metric)`.
    Delimited,
    /// One human-readable table per metric: datasets as columns, classifiers
    /// as rows, `mean ± std` cells. Bold marks a significant improvement over
    /// supervised LDA, underline the significantly best semi-supervised
    /// classifier, and `†` a classifier whose fits failed too often.
    Markdown,
}

pub fn render_tables(result: &BenchResult, format: TableFormat) -> Result<String> {
    match format {
        TableFormat::Delimited => {
            let records = result.rows.iter().map(|r| {
                vec![
                    r.dataset.clone(),
                    r.classifier.to_string(),
                    r.metric.as_str().to_string(),
                    r.mean.to_string(),
                    r.std.to_string(),
                    r.repeats.to_string(),
                    flag_str(r.beats_supervised).into(),
                    flag_str(r.best_semisupervised).into(),
                    r.failed_fits.to_string(),
                    r.total_fits.to_string(),
                ]
            });
            write_delimited(&result.warnings, &TABLE_HEADER, records)
        }
        TableFormat::Markdown => Ok(render_markdown(result)),
    }
}

pub fn render_curve(result: &CurveResult) -> Result<String> {
    let records = result.rows.iter().map(|r| {
        vec![
            r.dataset.clone(),
            r.classifier.to_string(),
            r.n_unlabeled.to_string(),
            r.metric.as_str().to_string(),
            r.mean.to_string(),
            r.stderr.to_string(),
            r.repeats.to_string(),
        ]
    });
    write_delimited(&result.warnings, &CURVE_HEADER, records)
}

pub fn parse_delimited(text: &str) -> Result<BenchResult> {
    let (warnings, records) = read_delimited(text, &TABLE_HEADER)?;
    let rows = records
        .iter()
        .enumerate()
        .map(|(i, f)| {
            Ok(BenchRow {
                dataset: f[0].clone(),
                classifier: parse_field(&f[1], i)?,
                metric: Metric::parse(&f[2])?,
                mean: parse_field(&f[3], i)?,
                std: parse_field(&f[4], i)?,
                repeats: parse_field(&f[5], i)?,
                beats_supervised: parse_flag(&f[6], i)?,
                best_semisupervised: parse_flag(&f[7], i)?,
                failed_fits: parse_field(&f[8], i)?,
                total_fits: parse_field(&f[9], i)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(BenchResult { rows, warnings })
}

pub fn parse_curve_delimited(text: &str) -> Result<CurveResult> {
    let (warnings, records) = read_delimited(text, &CURVE_HEADER)?;
    let rows = records
        .iter()
        .enumerate()
        .map(|(i, f)| {
            Ok(CurveRow {
                dataset: f[0].clone(),
                classifier: parse_field(&f[1], i)?,
                n_unlabeled: parse_field(&f[2], i)?,
                metric: Metric::parse(&f[3])?,
                mean: parse_field(&f[4], i)?,
                stderr: parse_field(&f[5], i)?,
                repeats: parse_field(&f[6], i)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(CurveResult { rows, warnings })
}

fn flag_str(flag: Option<bool>) -> &'static str {
    match flag {
        Some(true) => "true",
        Some(false) => "false",
        None => "",
    }
}

fn parse_flag(s: &str, row: usize) -> Result<Option<bool>> {
    match s {
        "" => Ok(None),
        _ => parse_field(s, row).map(Some),
    }
}

fn parse_field<T: std::str::FromStr>(s: &str, row: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e: T::Err| Error::Parse {
        row: row + 1,
        column: 0,
        message: format!("{s:?}: {e}"),
    })
}

fn csv_error(e: csv::Error) -> Error {
    Error::InvalidInput(format!("csv: {e}"))
}

fn write_delimited(
    warnings: &[String],
    header: &[&str],
    records: impl Iterator<Item = Vec<String>>,
) -> Result<String> {
    let mut out = String::new();
    for w in warnings {
        out.push_str(WARNING_PREFIX);
        out.push_str(&w.replace('\n', " "));
        out.push('\n');
    }
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(header).map_err(csv_error)?;
    for rec in records {
        writer.write_record(&rec).map_err(csv_error)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::InvalidInput(format!("csv: {e}")))?;
    out.push_str(&String::from_utf8(bytes).expect("csv output is utf-8"));
    Ok(out)
}

fn read_delimited(text: &str, header: &[&str]) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let warnings = text
        .lines()
        .filter_map(|l| l.strip_prefix(WARNING_PREFIX))
        .map(str::to_string)
        .collect();
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let found: Vec<String> = reader
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(str::to_string)
        .collect();
    if found != header {
        return Err(Error::InvalidInput(format!("unexpected header {found:?}")));
    }
    let records = reader
        .records()
        .map(|r| r.map(|rec| rec.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<_, _>>()
        .map_err(csv_error)?;
    Ok((warnings, records))
}

fn render_markdown(result: &BenchResult) -> String {
    let mut datasets: Vec<&str> = Vec::new();
    let mut classifiers: Vec<Classifier> = Vec::new();
    for r in &result.rows {
        if !datasets.contains(&r.dataset.as_str()) {
            datasets.push(&r.dataset);
        }
        if !classifiers.contains(&r.classifier) {
            classifiers.push(r.classifier);
        }
    }
    let metrics: BTreeSet<Metric> = result.rows.iter().map(|r| r.metric).collect();
    let mut out = String::new();
    for metric in metrics {
        let _ = writeln!(out, "### {}\n", metric.as_str());
        let _ = writeln!(out, "| classifier | {} |", datasets.join(" | "));
        let _ = writeln!(out, "|---|{}", "---|".repeat(datasets.len()));
        for &c in &classifiers {
            let cells: Vec<String> = datasets
                .iter()
                .map(|&d| match result.row(d, c, metric) {
                    Some(r) => markdown_cell(r),
                    None => "–".into(),
                })
                .collect();
            let _ = writeln!(out, "| {c} | {} |", cells.join(" | "));
        }
        out.push('\n');
    }
    for w in &result.warnings {
        let _ = writeln!(out, "> warning: {w}");
    }
    out
}

fn markdown_cell(r: &BenchRow) -> String {
    let mut cell = format!("{:.3} ± {:.3}", r.mean, r.std);
    if r.beats_supervised == Some(true) {
        cell = format!("**{cell}**");
    }
    if r.best_semisupervised == Some(true) {
        cell = format!("<u>{cell}</u>");
    }
    if r.unreliable() {
        cell.push_str(" †");
    }
    cell
}
