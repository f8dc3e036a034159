//! Experiment configuration and machine-readable output tables.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::bounds::BucketScheme;
use crate::error::{Error, Result};

/// Instance family selector for the experiment commands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilySpec {
    Mixedness,
    Offdiag,
    Multiblock,
    ClassicalPaninski,
}

/// Measurement strategy selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategySpec {
    Standard,
    Haar,
    KEigenbasis,
}

/// One config drives every command; commands read the fields they need.
/// The seed fully determines all randomness.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub command: Option<String>,
    pub family: FamilySpec,
    pub strategy: StrategySpec,
    pub d: usize,
    pub d1: Option<usize>,
    pub d2: Option<usize>,
    pub eps: f64,
    pub n: usize,
    /// Copy-count grid for tv-scan and doob scaling (defaults derived from n).
    pub n_list: Option<Vec<usize>>,
    /// Dimension grid for distinguisher-scan.
    pub d_list: Option<Vec<usize>>,
    pub trials: usize,
    pub samples: usize,
    pub seed: u64,
    pub scheme: BucketScheme,
    pub force: bool,
    pub single_thread: bool,
    /// Success threshold for the distinguisher scan.
    pub threshold: f64,
    /// (a, b) scales for kappa-demo and off-diagonal defaults.
    pub a: Option<f64>,
    pub b: Option<f64>,
    /// Spectrum file ({"diag": [...]}) for bound-calc.
    pub sigma_file: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            command: None,
            family: FamilySpec::Mixedness,
            strategy: StrategySpec::Standard,
            d: 4,
            d1: None,
            d2: None,
            eps: 1.0 / 12.0,
            n: 8,
            n_list: None,
            d_list: None,
            trials: 200,
            samples: 2000,
            seed: 0,
            scheme: BucketScheme::Simple,
            force: false,
            single_thread: false,
            threshold: 2.0 / 3.0,
            a: None,
            b: None,
            sigma_file: None,
            out: None,
            format: OutputFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps < 0.0 {
            return Err(Error::InvalidParameter {
                name: "eps",
                message: format!("{} < 0", self.eps),
            });
        }
        if self.d == 0 {
            return Err(Error::InvalidParameter {
                name: "d",
                message: "must be >= 1".to_string(),
            });
        }
        if self.trials == 0 {
            return Err(Error::InvalidParameter {
                name: "trials",
                message: "must be >= 1".to_string(),
            });
        }
        if !(self.threshold > 0.5 && self.threshold < 1.0) {
            return Err(Error::InvalidParameter {
                name: "threshold",
                message: format!("{} outside (1/2, 1)", self.threshold),
            });
        }
        Ok(())
    }
}

/// Fixed-column result table; CSV carries a schema id in a header comment
/// and the JSON form mirrors the same columns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Table {
    pub schema: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(schema: &str, columns: &[&str]) -> Self {
        Self {
            schema: schema.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# schema: {}\n", self.schema);
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Json => self.to_json(),
        }
    }
}

/// Shortest-roundtrip float formatting keeps outputs byte-stable.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip_and_defaults() {
        let cfg = ExperimentConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        let back = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(back.d, cfg.d);
        assert_eq!(back.trials, cfg.trials);

        let partial = ExperimentConfig::from_json(r#"{"d": 8, "seed": 7}"#).unwrap();
        assert_eq!(partial.d, 8);
        assert_eq!(partial.seed, 7);
        assert_eq!(partial.n, 8);
    }

    #[test]
    fn table_rendering() {
        let mut t = Table::new("qcert.test.v1", &["x", "y"]);
        t.push(vec![fmt_f64(1.5), fmt_f64(0.25)]);
        let csv = t.to_csv();
        assert!(csv.starts_with("# schema: qcert.test.v1\nx,y\n1.5,0.25\n"));
        let json = t.to_json();
        let back: Table = serde_json::from_str(&json).unwrap();
        assert_eq!(back.rows, t.rows);
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = ExperimentConfig {
            threshold: 0.4,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
