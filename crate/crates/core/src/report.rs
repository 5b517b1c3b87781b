//! Experiment reports: a JSON document plus an aligned text table.
//!
//! Reports hold only quantities that are reproducible from the artifacts
//! and seeds; wall-clock timings go to a separate sidecar file so that a
//! rerun regenerates the report byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::dataset::{read_json, write_json};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportRow {
    pub label: String,
    /// Non-finite values (e.g. the final loss of a zero-epoch run) are
    /// stored as `null`.
    #[serde(with = "nullable")]
    pub values: Vec<f64>,
}

mod nullable {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(values: &[f64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(values.iter().map(|v| v.is_finite().then_some(*v)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let raw = Vec::<Option<f64>>::deserialize(d)?;
        Ok(raw.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub experiment: String,
    pub config_digest: String,
    /// The full run configuration the numbers were produced under.
    pub config: serde_json::Value,
    pub columns: Vec<String>,
    pub rows: Vec<ReportRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(experiment: &str, config: &RunConfig, columns: &[&str]) -> Self {
        Self {
            experiment: experiment.to_string(),
            config_digest: config.digest(),
            config: serde_json::to_value(config).expect("config serializes"),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn push(&mut self, label: impl Into<String>, values: Vec<f64>) -> Result<()> {
        if values.len() != self.columns.len() {
            return Err(invalid!(
                "report row has {} values for {} columns",
                values.len(),
                self.columns.len()
            ));
        }
        self.rows.push(ReportRow {
            label: label.into(),
            values,
        });
        Ok(())
    }

    /// Value in row `label`, column `column`.
    pub fn value(&self, label: &str, column: &str) -> Option<f64> {
        let c = self.columns.iter().position(|x| x == column)?;
        self.rows.iter().find(|r| r.label == label).map(|r| r.values[c])
    }

    /// Fixed-width text table with a title line.
    pub fn to_table(&self) -> String {
        let mut header = vec!["".to_string()];
        header.extend(self.columns.iter().cloned());
        let body: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut cells = vec![r.label.clone()];
                cells.extend(r.values.iter().map(|v| format!("{v:.4}")));
                cells
            })
            .collect();
        let widths: Vec<usize> = (0..header.len())
            .map(|i| {
                body.iter()
                    .map(|row| row[i].len())
                    .chain([header[i].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = format!("{} (config {})\n", self.experiment, &self.config_digest[..12.min(self.config_digest.len())]);
        let line = |cells: &[String]| {
            cells
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect::<Vec<_>>()
                .join("  ")
        };
        let _ = writeln!(out, "{}", line(&header));
        let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
        for row in &body {
            let _ = writeln!(out, "{}", line(row));
        }
        for note in &self.notes {
            let _ = writeln!(out, "note: {note}");
        }
        out
    }

    /// Writes `<dir>/<experiment>.json` and `<dir>/<experiment>.txt`.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = dir.join(format!("{}.json", self.experiment));
        write_json(&json, self)?;
        let txt = dir.join(format!("{}.txt", self.experiment));
        fs::write(&txt, self.to_table()).map_err(|e| Error::io(&txt, e))?;
        Ok(json)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

/// Wall-clock measurements kept beside a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Timing {
    pub experiment: String,
    pub queries: usize,
    /// Median milliseconds per query for each measured step.
    pub median_ms: Vec<(String, f64)>,
}

impl Timing {
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(format!("{}.timing.json", self.experiment));
        write_json(&path, self)?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    pub fn get(&self, step: &str) -> Option<f64> {
        self.median_ms.iter().find(|(s, _)| s == step).map(|(_, v)| *v)
    }
}
