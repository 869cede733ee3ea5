//! Report files: one JSON document and one CSV table per command.

use crate::CliResult;
use kinlab::report::{Overall, Report};
use serde_json::{Map, Value};
use std::path::{Path, PathBuf};

/// Writes `<stem>.json` (the report plus `extra` top-level keys) and
/// `<stem>.csv` (one row per check) into `dir`.
pub fn write_report(dir: &Path, stem: &str, report: &Report, extra: Map<String, Value>) -> CliResult<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let mut doc = match serde_json::to_value(report)? {
        Value::Object(m) => m,
        _ => Map::new(),
    };
    doc.extend(extra);
    let json = dir.join(format!("{stem}.json"));
    std::fs::write(&json, serde_json::to_string_pretty(&Value::Object(doc))?)?;
    let csv_path = dir.join(format!("{stem}.csv"));
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(["check", "verdict", "detail", "config_hash"])?;
    for c in &report.checks {
        w.write_record([c.name.as_str(), c.verdict.as_str(), &c.detail.to_string(), &report.config_hash])?;
    }
    w.flush()?;
    Ok((json, csv_path))
}

/// Writes a CSV table whose first column is the config hash.
pub fn write_table(path: &Path, config_hash: &str, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut head = vec!["config_hash"];
    head.extend_from_slice(header);
    w.write_record(&head)?;
    for r in rows {
        let mut rec = vec![config_hash.to_string()];
        rec.extend(r.iter().cloned());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Prints one line per check and the overall verdict.
pub fn print_summary(report: &Report, dir: &Path) {
    for c in &report.checks {
        println!("{:<8} {}", c.verdict.as_str(), c.name);
    }
    let overall = match report.overall {
        Overall::Pass => "pass",
        Overall::Fail => "fail",
        Overall::Vacuous => "vacuous",
    };
    println!("{}: {overall} (config {}) -> {}", report.kind, &report.config_hash[..12], dir.display());
}
