//! Long-format results: one metric per row.

use std::path::Path;

use serde::Serialize;

use crate::error::{HarnessError, Result};

/// Column order of the CSV output.
pub const COLUMNS: [&str; 12] =
    ["config_hash", "experiment", "series", "seed", "param", "batch", "alpha", "metric", "value", "stderr", "n", "theory"];

/// One row. Aggregated rows leave `seed` empty and count the seeds in `n`;
/// `theory` holds the matching state-evolution or MMSE prediction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRecord {
    pub config_hash: String,
    pub experiment: String,
    pub series: String,
    pub seed: Option<u64>,
    pub param: Option<f64>,
    pub batch: Option<usize>,
    pub alpha: Option<f64>,
    pub metric: String,
    pub value: f64,
    pub stderr: Option<f64>,
    pub n: usize,
    pub theory: Option<f64>,
}

/// Builder sharing the join keys of an experiment.
#[derive(Debug, Clone)]
pub struct RowSink {
    hash: String,
    experiment: String,
    pub rows: Vec<ResultRecord>,
}

/// Mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Stats {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, stderr: f64::NAN, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, stderr, n }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Keys<'a> {
    pub series: &'a str,
    pub param: Option<f64>,
    pub batch: Option<usize>,
    pub alpha: Option<f64>,
}

impl RowSink {
    pub fn new(hash: &str, experiment: &str) -> Self {
        Self { hash: hash.into(), experiment: experiment.into(), rows: Vec::new() }
    }

    fn base(&self, k: &Keys, metric: &str) -> ResultRecord {
        ResultRecord {
            config_hash: self.hash.clone(),
            experiment: self.experiment.clone(),
            series: k.series.into(),
            seed: None,
            param: k.param,
            batch: k.batch,
            alpha: k.alpha,
            metric: metric.into(),
            value: f64::NAN,
            stderr: None,
            n: 0,
            theory: None,
        }
    }

    /// Seed-averaged empirical value with its prediction.
    pub fn aggregate(&mut self, k: Keys, metric: &str, stats: Stats, theory: Option<f64>) {
        let mut r = self.base(&k, metric);
        r.value = stats.mean;
        r.stderr = Some(stats.stderr);
        r.n = stats.n;
        r.theory = theory;
        self.rows.push(r);
    }

    /// A deterministic value (theory curve, landscape sample).
    pub fn exact(&mut self, k: Keys, metric: &str, value: f64) {
        let mut r = self.base(&k, metric);
        r.value = value;
        self.rows.push(r);
    }

    pub fn per_seed(&mut self, k: Keys, seed: u64, metric: &str, value: f64) {
        let mut r = self.base(&k, metric);
        r.seed = Some(seed);
        r.value = value;
        r.n = 1;
        self.rows.push(r);
    }
}

pub fn to_csv(rows: &[ResultRecord]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(COLUMNS).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| HarnessError::Config(e.to_string()))
}

fn csv_err(e: csv::Error) -> HarnessError {
    HarnessError::Config(format!("csv: {e}"))
}

#[derive(Serialize)]
struct JsonSummary<'a> {
    config_hash: &'a str,
    experiment: &'a str,
    rows: &'a [ResultRecord],
}

/// Pretty JSON with the join keys lifted to the top.
pub fn to_json(hash: &str, experiment: &str, rows: &[ResultRecord]) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(&JsonSummary { config_hash: hash, experiment, rows }).expect("rows serialize");
    out.push(b'\n');
    out
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_of_three() {
        let s = Stats::of(&[1.0, 2.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert!((s.stderr - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(Stats::of(&[4.0]).stderr, 0.0);
    }

    #[test]
    fn csv_leaves_missing_cells_empty() {
        let mut sink = RowSink::new("abc", "e");
        sink.exact(Keys { series: "s", batch: Some(1), ..Default::default() }, "m", 0.5);
        let text = String::from_utf8(to_csv(&sink.rows).unwrap()).unwrap();
        assert_eq!(text, "config_hash,experiment,series,seed,param,batch,alpha,metric,value,stderr,n,theory\nabc,e,s,,,1,,m,0.5,,0,\n");
    }
}
