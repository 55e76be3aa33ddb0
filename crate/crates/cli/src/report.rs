//! Tidy tables for plotting: absolute performance against the DGM covariate
//! and the difference to the best method within each DGM.

use std::collections::HashMap;
use std::path::Path;

use dgmsim::engine::{read_summary_csv, SummaryRecord};

use crate::CliError;

/// Label parts: specification type, source (dataset or level label) and the
/// remaining design levels.
pub fn split_label(label: &str) -> (&str, &str, &str) {
    let (spec, rest) = label.split_once(':').unwrap_or(("", label));
    let (source, design) = rest.split_once('|').unwrap_or((rest, ""));
    (spec, source, design)
}

/// Value of `key` among the `key=value` design levels, if present.
pub fn design_value<'a>(design: &'a str, key: &str) -> Option<&'a str> {
    design
        .split(['|', ','])
        .filter_map(|kv| kv.split_once('='))
        .find(|(k, _)| *k == key)
        .map(|(_, v)| v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub specification: String,
    pub source: String,
    pub design: String,
    pub dgm_label: String,
    pub method: String,
    pub measure: String,
    pub estimate: f64,
    pub mcse: Option<f64>,
    pub covariate_name: String,
    pub covariate_value: f64,
    pub highlight: bool,
    pub difference_to_best: f64,
}

/// Rows of non-excluded summaries; fails if any lacks a covariate.
pub fn build_rows(
    summaries: &[SummaryRecord],
    highlight: &[String],
) -> Result<Vec<ReportRow>, CliError> {
    let kept: Vec<&SummaryRecord> = summaries
        .iter()
        .filter(|s| !s.excluded && s.estimate.is_some())
        .collect();
    let mut best: HashMap<(&str, &str), f64> = HashMap::new();
    for s in &kept {
        let e = s.estimate.unwrap_or(f64::NEG_INFINITY);
        best.entry((&s.dgm_label, &s.measure))
            .and_modify(|b| *b = b.max(e))
            .or_insert(e);
    }
    kept.iter()
        .map(|s| {
            let (name, value) = match (&s.covariate_name, s.covariate_value) {
                (Some(n), Some(v)) => (n.clone(), v),
                _ => {
                    return Err(CliError::Runtime(format!(
                        "summary row `{}` has no covariate",
                        s.dgm_label
                    )))
                }
            };
            let (spec, source, design) = split_label(&s.dgm_label);
            let estimate = s.estimate.unwrap_or(f64::NAN);
            Ok(ReportRow {
                specification: spec.to_string(),
                source: source.to_string(),
                design: design.to_string(),
                dgm_label: s.dgm_label.clone(),
                method: s.method.to_string(),
                measure: s.measure.clone(),
                estimate,
                mcse: s.mcse,
                covariate_name: name,
                covariate_value: value,
                highlight: highlight.iter().any(|h| s.dgm_label.contains(h.as_str())),
                difference_to_best: estimate - best[&(s.dgm_label.as_str(), s.measure.as_str())],
            })
        })
        .collect()
}

fn csv_err(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

pub fn write_report(summary: &Path, out_dir: &Path, highlight: &[String]) -> Result<(), CliError> {
    if !summary.is_file() {
        return Err(CliError::Validation(format!(
            "summary {} not found",
            summary.display()
        )));
    }
    let rows = build_rows(&read_summary_csv(summary)?, highlight)?;
    let key = |r: &ReportRow| {
        vec![
            r.specification.clone(),
            r.source.clone(),
            r.design.clone(),
            design_value(&r.design, "n_obs")
                .unwrap_or_default()
                .to_string(),
            r.dgm_label.clone(),
            r.method.clone(),
            r.measure.clone(),
        ]
    };
    let head = [
        "specification",
        "source",
        "design",
        "n_obs",
        "dgm_label",
        "method",
        "measure",
    ];

    let mut abs = csv::Writer::from_path(out_dir.join("absolute.csv")).map_err(csv_err)?;
    let mut cols: Vec<&str> = head.to_vec();
    cols.extend([
        "estimate",
        "mcse",
        "covariate_name",
        "covariate_value",
        "highlight",
    ]);
    abs.write_record(&cols).map_err(csv_err)?;
    for r in &rows {
        let mut rec = key(r);
        rec.extend([
            r.estimate.to_string(),
            r.mcse.map(|m| m.to_string()).unwrap_or_default(),
            r.covariate_name.clone(),
            r.covariate_value.to_string(),
            r.highlight.to_string(),
        ]);
        abs.write_record(&rec).map_err(csv_err)?;
    }
    abs.flush().map_err(csv_err)?;

    let mut diff =
        csv::Writer::from_path(out_dir.join("difference_to_best.csv")).map_err(csv_err)?;
    let mut cols: Vec<&str> = head.to_vec();
    cols.extend([
        "difference_to_best",
        "covariate_name",
        "covariate_value",
        "highlight",
    ]);
    diff.write_record(&cols).map_err(csv_err)?;
    for r in &rows {
        let mut rec = key(r);
        rec.extend([
            r.difference_to_best.to_string(),
            r.covariate_name.clone(),
            r.covariate_value.to_string(),
            r.highlight.to_string(),
        ]);
        diff.write_record(&rec).map_err(csv_err)?;
    }
    diff.flush().map_err(csv_err)?;
    println!(
        "{} report rows written to {}",
        rows.len(),
        out_dir.display()
    );
    Ok(())
}
