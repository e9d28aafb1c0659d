//! Experiment reports: thresholded metrics plus per-trial rows, written as
//! JSON and CSV.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::BenchError;

/// Short hash of the source tree the harness was built from.
pub const CODE_VERSION: &str = env!("GARD_CODE_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    AtMost(f64),
    AtLeast(f64),
    Below(f64),
    Above(f64),
    /// Reported only.
    None,
}

impl Bound {
    pub fn check(self, v: f64) -> bool {
        match self {
            Bound::AtMost(t) => v <= t,
            Bound::AtLeast(t) => v >= t,
            Bound::Below(t) => v < t,
            Bound::Above(t) => v > t,
            Bound::None => true,
        }
    }

    fn describe(self) -> String {
        match self {
            Bound::AtMost(t) => format!("<= {t}"),
            Bound::AtLeast(t) => format!(">= {t}"),
            Bound::Below(t) => format!("< {t}"),
            Bound::Above(t) => format!("> {t}"),
            Bound::None => "-".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
    pub unit: String,
    pub bound: Bound,
    pub pass: bool,
    /// Reference value for comparison, when there is one.
    pub reference: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub id: String,
    pub code_version: String,
    pub seed: u64,
    pub config: Value,
    pub metrics: Vec<Metric>,
    pub rows: Vec<BTreeMap<String, f64>>,
    pub row_labels: Vec<String>,
    /// Trace files backing the rows, relative to the output directory.
    pub traces: Vec<String>,
    pub notes: Vec<String>,
}

impl ExperimentReport {
    pub fn new(id: &str, seed: u64, config: impl Serialize) -> Self {
        Self {
            id: id.into(),
            code_version: CODE_VERSION.into(),
            seed,
            config: serde_json::to_value(config).unwrap_or(Value::Null),
            metrics: Vec::new(),
            rows: Vec::new(),
            row_labels: Vec::new(),
            traces: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn metric(&mut self, name: impl Into<String>, value: f64, unit: &str, bound: Bound) -> &mut Metric {
        self.metrics.push(Metric {
            name: name.into(),
            value,
            unit: unit.into(),
            pass: bound.check(value),
            bound,
            reference: None,
        });
        self.metrics.last_mut().expect("just pushed")
    }

    /// Adds a pass/fail check with no numeric value of its own.
    pub fn check(&mut self, name: impl Into<String>, ok: bool) {
        self.metric(name, if ok { 1.0 } else { 0.0 }, "bool", Bound::AtLeast(1.0));
    }

    pub fn row(&mut self, label: impl Into<String>, values: impl IntoIterator<Item = (&'static str, f64)>) {
        self.row_labels.push(label.into());
        self.rows.push(values.into_iter().map(|(k, v)| (k.to_owned(), v)).collect());
    }

    pub fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    pub fn passed(&self) -> bool {
        self.metrics.iter().all(|m| m.pass)
    }

    pub fn get(&self, name: &str) -> Option<&Metric> {
        self.metrics.iter().find(|m| m.name == name)
    }

    /// Human-readable summary, one line per metric.
    pub fn summary(&self) -> String {
        let mut s = format!("[{}] version {} seed {}\n", self.id, self.code_version, self.seed);
        for m in &self.metrics {
            let reference = m.reference.map(|r| format!(" (reference {r})")).unwrap_or_default();
            s += &format!(
                "  {:<4} {:<44} {:>12.6} {:<6} {}{}\n",
                if m.pass { "ok" } else { "FAIL" },
                m.name,
                m.value,
                m.unit,
                m.bound.describe(),
                reference
            );
        }
        for n in &self.notes {
            s += &format!("  note: {n}\n");
        }
        s
    }

    /// Writes `<id>.json`, `<id>_metrics.csv` and `<id>_rows.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
        fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
        let json = dir.join(format!("{}.json", self.id));
        let text = serde_json::to_string_pretty(self).map_err(|e| BenchError::Report(e.to_string()))?;
        fs::write(&json, text).map_err(|e| BenchError::io(&json, e))?;

        let metrics = dir.join(format!("{}_metrics.csv", self.id));
        let mut w = csv::Writer::from_path(&metrics).map_err(|e| BenchError::Report(e.to_string()))?;
        w.write_record(["metric", "value", "unit", "bound", "pass", "reference"])
            .map_err(|e| BenchError::Report(e.to_string()))?;
        for m in &self.metrics {
            w.write_record([
                m.name.clone(),
                m.value.to_string(),
                m.unit.clone(),
                m.bound.describe(),
                m.pass.to_string(),
                m.reference.map(|r| r.to_string()).unwrap_or_default(),
            ])
            .map_err(|e| BenchError::Report(e.to_string()))?;
        }
        w.flush().map_err(|e| BenchError::io(&metrics, e))?;

        let mut written = vec![json, metrics];
        if !self.rows.is_empty() {
            let rows = dir.join(format!("{}_rows.csv", self.id));
            let mut cols: Vec<&String> = self.rows.iter().flat_map(|r| r.keys()).collect();
            cols.sort();
            cols.dedup();
            let mut w = csv::Writer::from_path(&rows).map_err(|e| BenchError::Report(e.to_string()))?;
            let mut header = vec!["label".to_owned()];
            header.extend(cols.iter().map(|c| c.to_string()));
            w.write_record(&header).map_err(|e| BenchError::Report(e.to_string()))?;
            for (label, r) in self.row_labels.iter().zip(&self.rows) {
                let mut rec = vec![label.clone()];
                rec.extend(cols.iter().map(|c| r.get(*c).map(|v| v.to_string()).unwrap_or_default()));
                w.write_record(&rec).map_err(|e| BenchError::Report(e.to_string()))?;
            }
            w.flush().map_err(|e| BenchError::io(&rows, e))?;
            written.push(rows);
        }
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_and_files() {
        let mut r = ExperimentReport::new("demo", 3, serde_json::json!({"k": 1}));
        r.metric("mae", 0.05, "mm", Bound::AtMost(0.1)).reference = Some(0.023);
        r.metric("slope", 1.3, "", Bound::AtMost(1.15));
        r.check("ordered", true);
        r.row("a", [("x", 1.0), ("y", 2.0)]);
        assert!(!r.passed());
        assert!(r.get("mae").unwrap().pass);
        assert!(r.summary().contains("FAIL"));
        let dir = tempfile::tempdir().unwrap();
        let files = r.write(dir.path()).unwrap();
        assert_eq!(files.len(), 3);
        let rows = std::fs::read_to_string(&files[2]).unwrap();
        assert_eq!(rows.lines().next(), Some("label,x,y"));
        let json: Value = serde_json::from_str(&std::fs::read_to_string(&files[0]).unwrap()).unwrap();
        assert_eq!(json["config"]["k"], 1);
        assert_eq!(json["code_version"], CODE_VERSION);
    }
}
