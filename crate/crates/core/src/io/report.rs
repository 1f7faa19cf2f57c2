use std::str::FromStr;

use crate::decimal::{self, Rational};
use crate::error::{Error, Result};
use crate::metrics::MetricReport;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "json" | "structured" => Ok(ReportFormat::Json),
            other => Err(Error::InvalidArgument(format!(
                "unknown report format '{other}' (csv, markdown, json)"
            ))),
        }
    }
}

const HEADER: [&str; 11] = [
    "dataset", "model", "method", "ndcg", "llm_calls", "in", "out", "pflops", "rpp", "qpp",
    "rpp_query_mean",
];

const MD_HEADER: [&str; 11] = [
    "Dataset",
    "Model",
    "Method",
    "NDCG",
    "#LLM",
    "In",
    "Out",
    "#FLOPs (PF)",
    "RPP",
    "QPP",
    "RPP (per-query mean)",
];

fn calls_cell(v: &Rational) -> String {
    if v.is_integer() {
        v.to_integer().to_string()
    } else {
        decimal::format_fixed(v, 1)
    }
}

/// Table cells: NDCG to 3 places, tokens and RPP to at most 2, PetaFLOPs to 3,
/// QPP to 4 significant digits.
fn cells(r: &MetricReport, bare_ndcg: bool) -> Result<[String; 11]> {
    let mut ndcg = decimal::format_fixed(&r.mean_ndcg()?, 3);
    if bare_ndcg {
        if let Some(rest) = ndcg.strip_prefix("0.") {
            ndcg = format!(".{rest}");
        }
    }
    Ok([
        r.dataset.clone(),
        r.model.clone(),
        r.strategy.clone(),
        ndcg,
        calls_cell(&r.mean_calls()?),
        decimal::format_trimmed(&r.in_avg()?, 2),
        decimal::format_trimmed(&r.out_avg()?, 2),
        decimal::format_fixed(&r.mean_petaflops()?, 3),
        decimal::format_trimmed(&r.rpp()?, 2),
        decimal::format_significant(&r.qpp()?, 4),
        decimal::format_trimmed(&r.rpp_per_query_mean()?, 2),
    ])
}

/// Renders reports; identical input gives identical bytes.
pub fn emit_report(reports: &[MetricReport], format: ReportFormat) -> Result<Vec<u8>> {
    if reports.is_empty() || reports.iter().any(|r| r.queries.is_empty()) {
        return Err(Error::EmptyReport);
    }
    match format {
        ReportFormat::Json => {
            let mut out = serde_json::to_vec_pretty(reports)
                .map_err(|e| Error::Invariant(format!("report serialization: {e}")))?;
            out.push(b'\n');
            Ok(out)
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let csv_err = |e: csv::Error| Error::Invariant(format!("csv: {e}"));
            w.write_record(HEADER).map_err(csv_err)?;
            for r in reports {
                w.write_record(cells(r, false)?).map_err(csv_err)?;
            }
            w.into_inner()
                .map_err(|e| Error::Invariant(format!("csv: {e}")))
        }
        ReportFormat::Markdown => {
            let mut out = format!("| {} |\n", MD_HEADER.join(" | "));
            out.push_str(&format!("|{}\n", "---|".repeat(MD_HEADER.len())));
            for r in reports {
                out.push_str(&format!("| {} |\n", cells(r, true)?.join(" | ")));
            }
            Ok(out.into_bytes())
        }
    }
}

/// Reads reports written in the JSON format.
pub fn parse_report(bytes: &[u8]) -> Result<Vec<MetricReport>> {
    serde_json::from_slice(bytes).map_err(|e| Error::Format {
        path: None,
        msg: format!("report: {e}"),
    })
}
