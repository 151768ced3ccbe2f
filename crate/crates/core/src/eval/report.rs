//! Result rows and the model-by-dataset comparison table.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::metrics::Metrics;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub model: String,
    pub dataset: String,
    pub mae: f64,
    /// Percent.
    pub mape: f64,
    pub rmse: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mape_count: Option<usize>,
}

impl ResultRow {
    pub fn new(model: impl Into<String>, dataset: impl Into<String>, mae: f64, mape: f64, rmse: f64) -> Self {
        ResultRow {
            model: model.into(),
            dataset: dataset.into(),
            mae,
            mape,
            rmse,
            count: None,
            mape_count: None,
        }
    }

    pub fn from_metrics(model: impl Into<String>, dataset: impl Into<String>, m: &Metrics) -> Self {
        ResultRow {
            count: Some(m.count),
            mape_count: Some(m.mape_count),
            ..ResultRow::new(model, dataset, m.mae, m.mape, m.rmse)
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [("MAE", self.mae), ("MAPE", self.mape), ("RMSE", self.rmse)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::validation(format!(
                    "{name} for {} on {} is {v}; metrics must be finite and non-negative",
                    self.model, self.dataset
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub seed: Option<u64>,
    /// Hex SHA-256 of the canonical JSON configuration.
    pub config_hash: String,
    /// Only set when supplied explicitly, so reruns stay byte-identical.
    pub timestamp: Option<String>,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<ResultRow>,
    pub metadata: ReportMetadata,
}

impl EvalReport {
    pub fn new(rows: Vec<ResultRow>, seed: Option<u64>, config: &serde_json::Value) -> Result<Self> {
        for r in &rows {
            r.validate()?;
        }
        Ok(EvalReport {
            rows,
            metadata: ReportMetadata {
                seed,
                config_hash: config_hash(config),
                timestamp: None,
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
            },
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map(|s| s + "\n")
            .map_err(|e| Error::json("evaluation report", e))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::json("evaluation report", e))
    }
}

/// SHA-256 over the compact serialization; `serde_json` keeps object keys
/// sorted, so equal values hash equally.
pub fn config_hash(config: &serde_json::Value) -> String {
    let bytes = serde_json::to_vec(config).expect("JSON values always serialize");
    hex::encode(Sha256::digest(&bytes))
}

/// Models as rows, one MAE / MAPE / RMSE column group per dataset, both in
/// order of first appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub datasets: Vec<String>,
    pub models: Vec<String>,
    rows: Vec<ResultRow>,
}

pub fn compare_report(rows: &[ResultRow]) -> Result<ComparisonTable> {
    if rows.is_empty() {
        return Err(Error::validation("comparison needs at least one result row"));
    }
    let mut datasets: Vec<String> = Vec::new();
    let mut models: Vec<String> = Vec::new();
    for r in rows {
        r.validate()?;
        if !datasets.contains(&r.dataset) {
            datasets.push(r.dataset.clone());
        }
        if !models.contains(&r.model) {
            models.push(r.model.clone());
        }
    }
    Ok(ComparisonTable {
        datasets,
        models,
        rows: rows.to_vec(),
    })
}

fn fmt2(v: f64) -> String {
    format!("{v:.2}")
}

impl ComparisonTable {
    /// Last row given for a (model, dataset) pair wins.
    pub fn cell(&self, model: &str, dataset: &str) -> Option<&ResultRow> {
        self.rows.iter().rev().find(|r| r.model == model && r.dataset == dataset)
    }

    pub fn rows(&self) -> &[ResultRow] {
        &self.rows
    }

    /// The triple for one cell rendered at two decimals.
    pub fn rendered(&self, model: &str, dataset: &str) -> Option<[String; 3]> {
        self.cell(model, dataset).map(|r| [fmt2(r.mae), fmt2(r.mape), fmt2(r.rmse)])
    }

    pub fn to_text(&self) -> String {
        let mut grid: Vec<Vec<String>> = Vec::new();
        let mut head1 = vec!["Model".to_string()];
        let mut head2 = vec![String::new()];
        for d in &self.datasets {
            head1.extend([d.clone(), String::new(), String::new()]);
            head2.extend(["MAE", "MAPE", "RMSE"].map(String::from));
        }
        grid.push(head1);
        grid.push(head2);
        for m in &self.models {
            let mut line = vec![m.clone()];
            for d in &self.datasets {
                match self.rendered(m, d) {
                    Some(cells) => line.extend(cells),
                    None => line.extend(["-", "-", "-"].map(String::from)),
                }
            }
            grid.push(line);
        }
        let cols = grid[0].len();
        let widths: Vec<usize> = (0..cols).map(|c| grid.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for (i, row) in grid.iter().enumerate() {
            let mut line = String::new();
            for (c, cell) in row.iter().enumerate() {
                if c > 0 && (c - 1) % 3 == 0 {
                    line.push_str(" | ");
                } else if c > 0 {
                    line.push_str("  ");
                }
                let _ = write!(line, "{cell:<w$}", w = widths[c]);
            }
            out.push_str(line.trim_end());
            out.push('\n');
            if i == 1 {
                out.push_str(&"-".repeat(line.trim_end().len()));
                out.push('\n');
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&self.rows)
            .map(|s| s + "\n")
            .map_err(|e| Error::json("comparison table", e))
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["model", "dataset", "mae", "mape", "rmse"])
            .map_err(|e| Error::validation(e.to_string()))?;
        for r in &self.rows {
            w.write_record([
                r.model.clone(),
                r.dataset.clone(),
                r.mae.to_string(),
                r.mape.to_string(),
                r.rmse.to_string(),
            ])
            .map_err(|e| Error::validation(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::validation(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

pub fn rows_from_json(text: &str) -> Result<Vec<ResultRow>> {
    serde_json::from_str(text).map_err(|e| Error::json("result rows", e))
}

pub fn rows_from_csv(text: &str) -> Result<Vec<ResultRow>> {
    #[derive(Deserialize)]
    struct Line {
        model: String,
        dataset: String,
        mae: f64,
        mape: f64,
        rmse: f64,
    }
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    rdr.deserialize::<Line>()
        .map(|l| {
            l.map(|l| ResultRow::new(l.model, l.dataset, l.mae, l.mape, l.rmse))
                .map_err(|e| Error::validation(format!("result CSV: {e}")))
        })
        .collect()
}
