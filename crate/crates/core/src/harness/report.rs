use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::run::BenchmarkSpec;
use crate::error::{format_err, Error, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Per-seed values (missing when every cell of that seed failed) and their
/// mean over the present ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricColumn {
    pub per_seed: Vec<Option<f64>>,
    pub mean: Option<f64>,
}

impl MetricColumn {
    pub fn from_per_seed(per_seed: Vec<Option<f64>>) -> Self {
        let mean = mean_of(&per_seed);
        Self { per_seed, mean }
    }
}

fn mean_of(values: &[Option<f64>]) -> Option<f64> {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub label: String,
    pub inversion_mse: MetricColumn,
    pub inversion_perceptual: MetricColumn,
    pub edit_mse: MetricColumn,
    pub edit_perceptual: MetricColumn,
}

impl ReportRow {
    fn columns(&self) -> [(&'static str, &MetricColumn); 4] {
        [
            ("inversion_mse", &self.inversion_mse),
            ("inversion_perceptual", &self.inversion_perceptual),
            ("edit_mse", &self.edit_mse),
            ("edit_perceptual", &self.edit_perceptual),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub method: String,
    pub seed: u64,
    pub target: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub title: String,
    pub seeds: Vec<u64>,
    pub spec: BenchmarkSpec,
    pub rows: Vec<ReportRow>,
    pub failures: Vec<CellFailure>,
}

impl Report {
    pub fn row(&self, method: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    /// Every stored mean equals the mean recomputed from its per-seed values.
    pub fn check_means(&self) -> Result<()> {
        for row in &self.rows {
            for (name, col) in row.columns() {
                if col.per_seed.len() != self.seeds.len() {
                    return Err(format_err(format!("rows.{}.{name}", row.method), "per-seed length mismatch"));
                }
                if mean_of(&col.per_seed) != col.mean {
                    return Err(format_err(format!("rows.{}.{name}.mean", row.method), "mean disagrees with raws"));
                }
            }
        }
        Ok(())
    }

    pub fn to_markdown(&self) -> String {
        let cell = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"));
        let mut out = format!("### {}\n\n", self.title);
        out.push_str("| Method | Inversion MSE | Inversion perceptual | Edit MSE | Edit perceptual |\n");
        out.push_str("|---|---|---|---|---|\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} |",
                r.label,
                cell(r.inversion_mse.mean),
                cell(r.inversion_perceptual.mean),
                cell(r.edit_mse.mean),
                cell(r.edit_perceptual.mean)
            );
        }
        let _ = write!(out, "\nMeans over seeds {:?}.", self.seeds);
        if !self.failures.is_empty() {
            let _ = write!(out, " {} cell(s) failed.", self.failures.len());
        }
        out.push('\n');
        out
    }

    /// One record per (method, seed).
    pub fn csv_rows(&self) -> Vec<CsvRow> {
        self.rows
            .iter()
            .flat_map(|r| {
                self.seeds.iter().enumerate().map(move |(i, &seed)| CsvRow {
                    method: r.method.clone(),
                    seed,
                    inversion_mse: r.inversion_mse.per_seed[i],
                    inversion_perceptual: r.inversion_perceptual.per_seed[i],
                    edit_mse: r.edit_mse.per_seed[i],
                    edit_perceptual: r.edit_perceptual.per_seed[i],
                })
            })
            .collect()
    }
}

/// Long-format CSV record; empty fields are missing cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub method: String,
    pub seed: u64,
    pub inversion_mse: Option<f64>,
    pub inversion_perceptual: Option<f64>,
    pub edit_mse: Option<f64>,
    pub edit_perceptual: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(Error::Config(format!("unknown report format `{other}`"))),
        }
    }
}

pub fn emit_report(report: &Report, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    let path = path.as_ref();
    match format {
        ReportFormat::Json => std::fs::write(path, serde_json::to_string_pretty(report)?)?,
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_path(path)?;
            for row in report.csv_rows() {
                w.serialize(row)?;
            }
            w.flush()?;
        }
        ReportFormat::Markdown => std::fs::write(path, report.to_markdown())?,
    }
    Ok(())
}

pub fn load_report(path: impl AsRef<Path>) -> Result<Report> {
    let report: Report = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if report.schema_version != REPORT_SCHEMA_VERSION {
        return Err(format_err(
            "schema_version",
            format!("expected {REPORT_SCHEMA_VERSION}, found {}", report.schema_version),
        ));
    }
    Ok(report)
}

pub fn read_csv_rows(path: impl AsRef<Path>) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}
