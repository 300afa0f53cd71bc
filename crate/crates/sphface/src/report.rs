//! CSV evaluation reports: `summary.csv`, `cmc.csv` and `roc.csv`.

use std::path::Path;

use sphface_core::recognition::EvalReport;

use crate::error::{Error, Result};
use crate::io::write_atomic;

fn csv_bytes(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| Error::csv(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| Error::csv(path, e))?;
    }
    w.into_inner().map_err(|e| Error::io(path, e.into_error()))
}

/// One row per method: rank-1 and AUC statistics over the repeats.
pub fn summary_rows(report: &EvalReport) -> Vec<Vec<String>> {
    let config = format!("T{}", report.config.i);
    report
        .methods
        .iter()
        .map(|m| {
            vec![
                m.method.name().to_string(),
                config.clone(),
                m.rank1_mean().to_string(),
                m.rank1_std().to_string(),
                m.auc_mean().to_string(),
                m.auc_std().to_string(),
                m.rank1.len().max(m.auc.len()).to_string(),
                report.n_subjects.to_string(),
                report.n_train.to_string(),
                report.n_test.to_string(),
            ]
        })
        .collect()
}

pub const SUMMARY_HEADER: [&str; 10] =
    ["method", "config", "rank1_mean", "rank1_std", "auc", "auc_std", "n_repeats", "n_subjects", "n_train", "n_test"];

/// Writes the three reports into `dir`; recognition-only runs leave
/// `roc.csv` with a header only, and vice versa for `cmc.csv`.
pub fn write_reports(dir: &Path, report: &EvalReport) -> Result<()> {
    let p = dir.join("summary.csv");
    let bytes = csv_bytes(&p, &SUMMARY_HEADER, summary_rows(report))?;
    write_atomic(&p, &bytes)?;

    let p = dir.join("cmc.csv");
    let curves: Vec<Vec<f64>> = report.methods.iter().map(|m| m.cmc_mean()).collect();
    let len = curves.iter().map(Vec::len).max().unwrap_or(0);
    let mut header = vec!["k"];
    header.extend(report.methods.iter().map(|m| m.method.name()));
    let rows = (0..len).map(|k| {
        let mut row = vec![(k + 1).to_string()];
        row.extend(curves.iter().map(|c| c.get(k).map_or_else(String::new, f64::to_string)));
        row
    });
    let bytes = csv_bytes(&p, &header, rows)?;
    write_atomic(&p, &bytes)?;

    let p = dir.join("roc.csv");
    let mut rows = Vec::new();
    for m in &report.methods {
        for (r, curve) in m.roc.iter().enumerate() {
            for pt in curve {
                rows.push(vec![
                    m.method.name().to_string(),
                    r.to_string(),
                    pt.threshold.to_string(),
                    pt.fpr.to_string(),
                    pt.tpr.to_string(),
                ]);
            }
        }
    }
    let bytes = csv_bytes(&p, &["method", "repeat", "threshold", "fpr", "tpr"], rows)?;
    write_atomic(&p, &bytes)
}
