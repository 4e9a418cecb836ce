//! Annual default panels: loading, validation, rescaling and summaries.
//!
//! The on-disk format is comma-separated text with the header
//! `year,n,defaults,class`, one record per line.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One year of observations for one rating class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearRecord {
    pub year: i32,
    /// Number of obligors at the start of the year.
    pub n: usize,
    pub defaults: usize,
    pub class: String,
}

/// Year-ordered records of a single class.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Panel {
    class: String,
    records: Vec<YearRecord>,
    n_bar: f64,
}

impl Panel {
    /// Validates and wraps records; years must be strictly increasing.
    pub fn new(class: &str, records: Vec<YearRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Empty(format!("no records for class '{class}'")));
        }
        for (i, r) in records.iter().enumerate() {
            check_record(r).map_err(|message| Error::Validation { line: i + 1, message })?;
            if i > 0 && records[i - 1].year >= r.year {
                return Err(Error::Validation {
                    line: i + 1,
                    message: format!("year {} does not follow {}", r.year, records[i - 1].year),
                });
            }
        }
        let n_bar = records.iter().map(|r| r.n as f64).sum::<f64>() / records.len() as f64;
        Ok(Panel {
            class: class.to_string(),
            records,
            n_bar,
        })
    }

    /// Panel of independent draws at a constant pool size, labelled by
    /// consecutive years from 1.
    pub fn from_counts(class: &str, n: usize, counts: &[usize]) -> Result<Self> {
        let records = counts
            .iter()
            .enumerate()
            .map(|(i, &defaults)| YearRecord {
                year: i as i32 + 1,
                n,
                defaults,
                class: class.to_string(),
            })
            .collect();
        Panel::new(class, records)
    }

    pub fn class(&self) -> &str {
        &self.class
    }

    pub fn records(&self) -> &[YearRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Mean pool size.
    pub fn n_bar(&self) -> f64 {
        self.n_bar
    }

    /// `(n_t, L_t)` pairs.
    pub fn observations(&self) -> Vec<(usize, usize)> {
        self.records.iter().map(|r| (r.n, r.defaults)).collect()
    }
}

fn check_record(r: &YearRecord) -> std::result::Result<(), String> {
    if r.n == 0 {
        return Err(format!("year {}: pool size must be positive", r.year));
    }
    if r.defaults > r.n {
        return Err(format!(
            "year {}: defaults {} exceed pool size {}",
            r.year, r.defaults, r.n
        ));
    }
    Ok(())
}

/// Reads every record from a reader, checking each row.
pub fn read_records<R: Read>(reader: R) -> Result<Vec<YearRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = ["year", "n", "defaults", "class"];
    if headers.len() != 4 || headers.iter().zip(expected).any(|(h, e)| !h.eq_ignore_ascii_case(e)) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header year,n,defaults,class, found {}", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut out = Vec::new();
    for row in rdr.deserialize::<YearRecord>() {
        let rec = row.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: match e.kind() {
                csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
                other => format!("{other:?}"),
            },
        })?;
        let line = out.len() + 2;
        check_record(&rec).map_err(|message| Error::Validation { line, message })?;
        out.push(rec);
    }
    Ok(out)
}

/// Loads one class from a panel file, optionally restricted to an inclusive
/// year range.
pub fn load_panel(path: &Path, class: &str, years: Option<(i32, i32)>) -> Result<Panel> {
    let file = std::fs::File::open(path)?;
    let mut records: Vec<YearRecord> = read_records(file)?
        .into_iter()
        .filter(|r| r.class.eq_ignore_ascii_case(class))
        .filter(|r| years.map_or(true, |(lo, hi)| (lo..=hi).contains(&r.year)))
        .collect();
    if records.is_empty() {
        return Err(Error::Empty(format!("no rows of class '{class}' in the requested range")));
    }
    records.sort_by_key(|r| r.year);
    Panel::new(class, records)
}

pub fn write_records<W: Write>(writer: W, records: &[YearRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_panel(path: &Path, panel: &Panel) -> Result<()> {
    write_records(std::fs::File::create(path)?, panel.records())
}

/// `round(L_t · n̄ / n_t)` with ties away from zero.
pub fn rescale_count(defaults: usize, n: usize, n_bar: f64) -> u64 {
    (defaults as f64 * n_bar / n as f64).round() as u64
}

pub fn rescale_counts(panel: &Panel) -> Vec<u64> {
    panel
        .records()
        .iter()
        .map(|r| rescale_count(r.defaults, r.n, panel.n_bar()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SummaryStats {
    pub years: usize,
    pub mean_n: f64,
    pub mean_defaults: f64,
    /// Simple average of yearly default rates.
    pub mean_rate: f64,
    /// Exposure-weighted default rate `Σ L_t / Σ n_t`.
    pub total_rate: f64,
    /// Sample variance of the rescaled counts (divisor `T - 1`).
    pub scaled_variance: f64,
    /// False for single-year panels, where the variance is reported as 0.
    pub variance_defined: bool,
}

pub fn summary_stats(panel: &Panel) -> SummaryStats {
    let recs = panel.records();
    let t = recs.len() as f64;
    let sum_n: f64 = recs.iter().map(|r| r.n as f64).sum();
    let sum_l: f64 = recs.iter().map(|r| r.defaults as f64).sum();
    let mean_rate = recs.iter().map(|r| r.defaults as f64 / r.n as f64).sum::<f64>() / t;
    let scaled: Vec<f64> = rescale_counts(panel).into_iter().map(|v| v as f64).collect();
    let variance_defined = scaled.len() > 1;
    let scaled_variance = if variance_defined {
        let mean = scaled.iter().sum::<f64>() / t;
        scaled.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (t - 1.0)
    } else {
        0.0
    };
    SummaryStats {
        years: recs.len(),
        mean_n: sum_n / t,
        mean_defaults: sum_l / t,
        mean_rate,
        total_rate: sum_l / sum_n,
        scaled_variance,
        variance_defined,
    }
}
