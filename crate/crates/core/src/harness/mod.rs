//! Replicated experiments, their configuration and report emission.

mod studies;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{ensure, Error, Result};
use crate::hmc::HmcConfig;
use crate::parallel::Execution;
use crate::svb::SvbConfig;

pub use studies::{
    generalization_replicates, generalization_report, logreg_replicates, logreg_report,
    run_generalization, run_logreg, run_shrinkage, GeneralizationRaw, LogregRaw, RawCell,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Shrinkage,
    Generalization,
    Logreg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ClosedForm,
    Hmc,
    Svb,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::ClosedForm => "closed-form",
            Method::Hmc => "hmc",
            Method::Svb => "svb",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    /// Built-in generator; for classification the name picks a table shape.
    Synthetic { name: String },
    Csv {
        path: PathBuf,
        label: String,
        header: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub source: DataSource,
    /// Dropout rates.
    pub rates: Vec<f64>,
    /// Junk-feature counts.
    pub junk: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
    pub method: Method,
    /// Prior precision of the dropout fits.
    pub lambda0: f64,
    /// Ridge penalty of the generalization baseline.
    pub ridge_lambda: f64,
    /// Ridge penalties of the shrinkage plot.
    pub ridge_grid: Vec<f64>,
    pub gamma_a: f64,
    pub gamma_b: f64,
    pub train_fraction: f64,
    pub hmc: HmcConfig,
    pub svb: SvbConfig,
    /// Variational draws per test prediction.
    pub predictive_draws: usize,
    #[serde(skip)]
    pub exec: Execution,
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    (0..points)
        .map(|k| 10f64.powf(a + (b - a) * k as f64 / (points - 1) as f64))
        .collect()
}

impl ExperimentConfig {
    fn base(experiment: ExperimentKind, source: DataSource, method: Method) -> Self {
        Self {
            experiment,
            source,
            rates: Vec::new(),
            junk: vec![0],
            replicates: 1,
            seed: 0,
            method,
            lambda0: 1e-3,
            ridge_lambda: 1.0,
            ridge_grid: Vec::new(),
            gamma_a: 1.0,
            gamma_b: 1.0,
            train_fraction: 0.8,
            hmc: HmcConfig::desk(),
            svb: SvbConfig::desk(),
            predictive_draws: 200,
            exec: Execution::default(),
            out: None,
        }
    }

    /// Dropout path from 0 to `1 − 10⁻⁶` and a ridge path, on the QSPR surrogate.
    pub fn shrinkage() -> Self {
        let mut rates: Vec<f64> = (0..10).map(|k| k as f64 / 10.0).collect();
        rates.extend([0.95, 0.99, 0.999, 1.0 - 1e-6]);
        Self {
            rates,
            lambda0: 0.0,
            ridge_grid: log_grid(1e-2, 1e6, 25),
            ..Self::base(
                ExperimentKind::Shrinkage,
                DataSource::Synthetic {
                    name: "qspr".into(),
                },
                Method::ClosedForm,
            )
        }
    }

    /// Three scenarios by three conditions, 2 000 replicates.
    pub fn generalization() -> Self {
        Self {
            rates: vec![0.025, 0.05, 0.1, 0.2, 0.4],
            replicates: 2_000,
            ..Self::base(
                ExperimentKind::Generalization,
                DataSource::Synthetic {
                    name: "scenarios".into(),
                },
                Method::ClosedForm,
            )
        }
    }

    /// Ripley-shaped synthetic table, `J ∈ {0, 50, 100}`, 40 splits.
    pub fn logreg(method: Method) -> Self {
        Self {
            rates: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            junk: vec![0, 50, 100],
            replicates: 40,
            ..Self::base(
                ExperimentKind::Logreg,
                DataSource::Synthetic {
                    name: "ripley".into(),
                },
                method,
            )
        }
    }

    /// Switches the samplers to the full-length settings.
    pub fn with_paper_preset(mut self) -> Self {
        self.hmc = HmcConfig::paper();
        self.svb = SvbConfig {
            exec: self.svb.exec,
            ..SvbConfig::paper()
        };
        if self.experiment == ExperimentKind::Generalization {
            self.replicates = 100_000;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.replicates >= 1, || "replicates must be >= 1".into())?;
        ensure(!self.rates.is_empty(), || {
            "at least one dropout rate is required".into()
        })?;
        for &f in &self.rates {
            ensure((0.0..1.0).contains(&f), || {
                format!("dropout rate {f} not in [0, 1)")
            })?;
        }
        ensure(self.lambda0 >= 0.0, || "lambda0 must be nonnegative".into())?;
        ensure(self.gamma_a > 0.0 && self.gamma_b > 0.0, || {
            "gamma hyperparameters must be positive".into()
        })?;
        let allowed: &[Method] = match self.experiment {
            ExperimentKind::Shrinkage | ExperimentKind::Generalization => &[Method::ClosedForm],
            ExperimentKind::Logreg => &[Method::Hmc, Method::Svb],
        };
        ensure(allowed.contains(&self.method), || {
            format!(
                "method {} is not available for this experiment",
                self.method.name()
            )
        })?;
        match self.experiment {
            ExperimentKind::Generalization => {
                ensure(self.ridge_lambda > 0.0, || {
                    "ridge penalty must be positive".into()
                })?;
                ensure(matches!(self.source, DataSource::Synthetic { .. }), || {
                    "the generalization study only runs on generated scenarios".into()
                })?;
            }
            ExperimentKind::Shrinkage => {
                ensure(self.ridge_grid.iter().all(|&l| l > 0.0), || {
                    "ridge penalties must be positive".into()
                })?;
            }
            ExperimentKind::Logreg => {
                ensure(!self.junk.is_empty(), || {
                    "at least one junk count is required".into()
                })?;
                ensure(
                    self.train_fraction > 0.0 && self.train_fraction < 1.0,
                    || "train fraction must be in (0, 1)".into(),
                )?;
                ensure(self.predictive_draws >= 1, || {
                    "predictive draws must be >= 1".into()
                })?;
                self.hmc.validate()?;
                self.svb.validate()?;
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> Result<String> {
        let json = serde_json::to_string(self)?;
        let digest = Sha256::digest(json.as_bytes());
        Ok(digest.iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        }))
    }
}

/// Aggregate of one (dataset, J, f, method) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub dataset: String,
    pub junk: usize,
    pub rate: f64,
    pub method: String,
    pub metric: String,
    pub mean: f64,
    pub var_of_mean: f64,
    pub replicates: usize,
}

/// One point on a coefficient path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub dataset: String,
    pub method: String,
    pub parameter: f64,
    pub coefficients: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub versions: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: ExperimentKind,
    pub cells: Vec<CellSummary>,
    pub paths: Vec<PathPoint>,
    pub feature_names: Vec<String>,
    pub notes: Vec<String>,
    pub provenance: Provenance,
}

impl ExperimentReport {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let mut versions = BTreeMap::new();
        versions.insert(
            "bayesdrop".to_string(),
            env!("CARGO_PKG_VERSION").to_string(),
        );
        Ok(Self {
            experiment: cfg.experiment,
            cells: Vec::new(),
            paths: Vec::new(),
            feature_names: Vec::new(),
            notes: Vec::new(),
            provenance: Provenance {
                seed: cfg.seed,
                config_hash: cfg.hash()?,
                config: cfg.clone(),
                versions,
            },
        })
    }

    pub fn cell(
        &self,
        dataset: &str,
        junk: usize,
        rate: f64,
        method: &str,
    ) -> Option<&CellSummary> {
        self.cells.iter().find(|c| {
            c.dataset == dataset && c.junk == junk && c.rate == rate && c.method == method
        })
    }
}

/// Mean and variance of the mean (sample variance over the replicate count).
/// A single replicate has variance of the mean 0.
pub fn summarize(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, var / n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Serializes a report. JSON is pretty-printed with the provenance block. CSV
/// has one row per cell, or, for a report that only holds coefficient paths,
/// one row per (path point, coefficient).
pub fn render_report(report: &ExperimentReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report)?;
            s.push('\n');
            Ok(s)
        }
        ReportFormat::Csv if report.cells.is_empty() && !report.paths.is_empty() => {
            let mut s = String::from("dataset,method,parameter,feature,coefficient\n");
            for p in &report.paths {
                for (k, c) in p.coefficients.iter().enumerate() {
                    let feature = report
                        .feature_names
                        .get(k)
                        .cloned()
                        .unwrap_or_else(|| format!("x{k}"));
                    let _ = writeln!(
                        s,
                        "{},{},{},{},{}",
                        csv_field(&p.dataset),
                        csv_field(&p.method),
                        p.parameter,
                        csv_field(&feature),
                        c
                    );
                }
            }
            Ok(s)
        }
        ReportFormat::Csv => {
            let mut s =
                String::from("dataset,junk,rate,method,metric,mean,var_of_mean,n_replicates\n");
            for c in &report.cells {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{}",
                    csv_field(&c.dataset),
                    c.junk,
                    c.rate,
                    csv_field(&c.method),
                    csv_field(&c.metric),
                    c.mean,
                    c.var_of_mean,
                    c.replicates
                );
            }
            Ok(s)
        }
    }
}

pub fn emit_report(
    report: &ExperimentReport,
    format: ReportFormat,
    path: impl AsRef<Path>,
) -> Result<()> {
    std::fs::write(path, render_report(report, format)?)?;
    Ok(())
}

/// Dispatches on the experiment kind.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    match cfg.experiment {
        ExperimentKind::Shrinkage => run_shrinkage(cfg),
        ExperimentKind::Generalization => run_generalization(cfg),
        ExperimentKind::Logreg => run_logreg(cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_statistics() {
        let (m, v) = summarize(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m, 2.5);
        assert!((v - (5.0 / 3.0) / 4.0).abs() < 1e-15);
        assert_eq!(summarize(&[7.0]).unwrap(), (7.0, 0.0));
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn empty_report_csv_is_header_only() {
        let r = ExperimentReport::new(&ExperimentConfig::generalization()).unwrap();
        assert_eq!(
            render_report(&r, ReportFormat::Csv).unwrap(),
            "dataset,junk,rate,method,metric,mean,var_of_mean,n_replicates\n"
        );
    }

    #[test]
    fn config_validation() {
        let mut c = ExperimentConfig::logreg(Method::Hmc);
        assert!(c.validate().is_ok());
        c.rates.push(1.0);
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::generalization();
        c.method = Method::Svb;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::shrinkage();
        c.replicates = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn hash_tracks_settings() {
        let a = ExperimentConfig::generalization();
        let mut b = a.clone();
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        b.seed = 1;
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
        assert_eq!(a.hash().unwrap().len(), 64);
    }
}
