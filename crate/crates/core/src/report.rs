//! CSV and Markdown rendering of aggregate diagnostic reports.
//!
//! CSV carries every statistic at full precision, one row per
//! (variant, modality, kind, proportion, metric). Markdown is a compact
//! table: a clean row per variant, then one drop row per variant and key,
//! with the larger drop of each standard/robust pair in bold.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Modality;
use crate::diagnostics::{AggregateReport, StatSet};
use crate::error::{Error, Result};
use crate::metrics::Metric;
use crate::perturb::PerturbationKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(Error::contract(format!("unknown report format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub variant: String,
    pub modality: Modality,
    pub kind: PerturbationKind,
    pub proportion: f64,
    pub metric: Metric,
    pub clean_mean: f64,
    pub clean_std: f64,
    pub perturbed_mean: f64,
    pub perturbed_std: f64,
    pub drop_mean: f64,
    pub drop_std: f64,
    pub n_seeds: usize,
}

pub fn csv_rows(report: &AggregateReport) -> Vec<CsvRow> {
    let mut out = Vec::with_capacity(report.rows.len() * Metric::ALL.len());
    for row in &report.rows {
        for m in Metric::ALL {
            out.push(CsvRow {
                variant: report.variant.clone(),
                modality: row.key.modality,
                kind: row.key.kind,
                proportion: row.key.proportion,
                metric: m,
                clean_mean: row.clean.get(m).mean,
                clean_std: row.clean.get(m).std,
                perturbed_mean: row.perturbed.get(m).mean,
                perturbed_std: row.perturbed.get(m).std,
                drop_mean: row.drop.get(m).mean,
                drop_std: row.drop.get(m).std,
                n_seeds: row.n_seeds,
            });
        }
    }
    out
}

pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// Decimal places used in Markdown for each metric.
pub fn decimals(m: Metric) -> usize {
    match m {
        Metric::Corr | Metric::Mae => 3,
        Metric::F1 | Metric::Acc2 => 2,
    }
}

/// Renders one report, or a standard report paired with a robust one.
pub fn emit_report(
    primary: &AggregateReport,
    robust: Option<&AggregateReport>,
    format: ReportFormat,
) -> Result<String> {
    if let Some(r) = robust {
        let same = r.rows.len() == primary.rows.len()
            && r.rows.iter().zip(&primary.rows).all(|(a, b)| a.key == b.key);
        if !same {
            return Err(Error::contract("compared reports have different key sets"));
        }
    }
    match format {
        ReportFormat::Csv => emit_csv(primary, robust),
        ReportFormat::Markdown => Ok(emit_markdown(primary, robust)),
    }
}

fn emit_csv(primary: &AggregateReport, robust: Option<&AggregateReport>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for report in std::iter::once(primary).chain(robust) {
        for row in csv_rows(report) {
            w.serialize(row)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::io("<csv>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn percent(p: f64) -> String {
    let s = format!("{:.2}", p * 100.0);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    format!("{s}%")
}

fn clean_cells(stats: &StatSet) -> Vec<String> {
    Metric::ALL
        .iter()
        .map(|&m| format!("{:.*}", decimals(m), stats.get(m).mean))
        .collect()
}

fn drop_cell(m: Metric, value: f64, bold: bool) -> String {
    let cell = format!("↓ {:.*}", decimals(m), value);
    if bold {
        format!("**{cell}**")
    } else {
        cell
    }
}

fn push_row(out: &mut String, cells: &[String]) {
    let _ = writeln!(out, "| {} |", cells.join(" | "));
}

fn emit_markdown(primary: &AggregateReport, robust: Option<&AggregateReport>) -> String {
    let mut out = String::new();
    push_row(
        &mut out,
        &["Variant", "Modality", "Perturbation", "Corr", "F1", "Acc-2", "MAE"].map(String::from),
    );
    out.push_str("|---|---|---|---:|---:|---:|---:|\n");

    for report in std::iter::once(primary).chain(robust) {
        let mut cells = vec![report.variant.clone(), "-".into(), "clean".into()];
        cells.extend(clean_cells(&report.clean));
        push_row(&mut out, &cells);
    }

    for (i, row) in primary.rows.iter().enumerate() {
        let label = format!("{} {}", row.key.kind, percent(row.key.proportion));
        let pair = robust.map(|r| (r, &r.rows[i]));
        let mut emit = |variant: &str, drops: &StatSet, peer: Option<&StatSet>| {
            let mut cells = vec![variant.to_string(), row.key.modality.to_string(), label.clone()];
            for m in Metric::ALL {
                let mine = drops.get(m).mean;
                let bold = peer.is_some_and(|p| mine > p.get(m).mean);
                cells.push(drop_cell(m, mine, bold));
            }
            push_row(&mut out, &cells);
        };
        emit(&primary.variant, &row.drop, pair.map(|(_, r)| &r.drop));
        if let Some((report, other)) = pair {
            emit(&report.variant, &other.drop, Some(&row.drop));
        }
    }
    out
}
