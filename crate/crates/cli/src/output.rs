use std::fs;
use std::path::Path;

use serde::Serialize;
use switchnet_core::stats::Estimate;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub name: String,
    pub id: String,
    pub value: f64,
    pub stderr: Option<f64>,
    pub n: Option<u64>,
}

impl MetricRow {
    pub fn exact(name: &str, id: impl Into<String>, value: f64) -> Self {
        Self { name: name.into(), id: id.into(), value, stderr: None, n: None }
    }

    pub fn estimate(name: &str, id: impl Into<String>, e: Estimate) -> Self {
        Self { name: name.into(), id: id.into(), value: e.mean, stderr: Some(e.stderr), n: Some(e.n) }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    /// SHA-256 of the merged experiment document.
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub config: toml::Table,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub provenance: Provenance,
    pub network: serde_json::Value,
    pub results: serde_json::Value,
}

pub struct Bundle {
    pub rows: Vec<MetricRow>,
    pub results: serde_json::Value,
}

pub fn metrics_csv(rows: &[MetricRow]) -> Result<String, Box<dyn std::error::Error>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(["name", "id", "value", "stderr", "n"])?;
    for r in rows {
        w.write_record([
            r.name.clone(),
            r.id.clone(),
            format!("{:?}", r.value),
            r.stderr.map(|s| format!("{s:?}")).unwrap_or_default(),
            r.n.map(|n| n.to_string()).unwrap_or_default(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn write_bundle(dir: &Path, csv_text: &str, summary: &Summary) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("metrics.csv"), csv_text)?;
    let mut json = serde_json::to_string_pretty(summary).map_err(std::io::Error::other)?;
    json.push('\n');
    fs::write(dir.join("summary.json"), json)
}
