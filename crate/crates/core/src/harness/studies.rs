use nalgebra::DVector;

use super::{
    summarize, CellSummary, DataSource, ExperimentConfig, ExperimentKind, ExperimentReport, Method,
    PathPoint,
};
use crate::data::{
    augment_junk, load_csv, split, standardize, with_bias, Dataset, DropoutSpec, LabelColumn,
};
use crate::error::{Error, Result};
use crate::hmc::{chain_predictive, run_chain};
use crate::linreg::{
    isolated_fit, posterior, predictive_mean, ridge_path, shrinkage_path, LinRegConfig,
};
use crate::logreg::{GammaPrior, LogregModel};
use crate::metrics::{auc, mse};
use crate::parallel::{map_indexed, try_map_indexed};
use crate::rng::RngStream;
use crate::scenario::{
    classification_shape, generate_linreg_scenario, qspr_surrogate, synthetic_classification,
    Condition, Scenario,
};
use crate::svb::{svb_predictive, svb_run, SvbProblem};

/// Per-replicate metric values of one cell, in replicate order.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCell {
    pub dataset: String,
    pub junk: usize,
    pub rate: f64,
    pub method: String,
    pub values: Vec<f64>,
}

impl RawCell {
    fn summary(&self, metric: &str) -> Result<CellSummary> {
        let (mean, var_of_mean) = summarize(&self.values)?;
        Ok(CellSummary {
            dataset: self.dataset.clone(),
            junk: self.junk,
            rate: self.rate,
            method: self.method.clone(),
            metric: metric.to_string(),
            mean,
            var_of_mean,
            replicates: self.values.len(),
        })
    }
}

fn expect_kind(cfg: &ExperimentConfig, kind: ExperimentKind) -> Result<()> {
    if cfg.experiment != kind {
        return Err(Error::InvalidArgument(format!(
            "config is for {:?}, not {:?}",
            cfg.experiment, kind
        )));
    }
    cfg.validate()
}

fn load_source(source: &DataSource) -> Result<(String, Dataset)> {
    match source {
        DataSource::Csv {
            path,
            label,
            header,
        } => {
            let label: LabelColumn = label
                .parse()
                .unwrap_or_else(|e: std::convert::Infallible| match e {});
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "data".into());
            Ok((name, load_csv(path, &label, *header)?))
        }
        DataSource::Synthetic { name } => Err(Error::InvalidArgument(format!(
            "unknown synthetic dataset {name:?}"
        ))),
    }
}

/// Raw results of the generalization study.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizationRaw {
    /// Per (condition, scenario): the ridge cell followed by one dropout cell per rate.
    pub cells: Vec<RawCell>,
}

pub fn generalization_replicates(cfg: &ExperimentConfig) -> Result<GeneralizationRaw> {
    expect_kind(cfg, ExperimentKind::Generalization)?;
    let designs: Vec<(Condition, Scenario)> = Condition::ALL
        .iter()
        .flat_map(|&c| Scenario::ALL.iter().map(move |&s| (c, s)))
        .collect();
    let reps = cfg.replicates;
    let ridge_cfg = LinRegConfig::new(cfg.ridge_lambda, 0.0)?;
    let dropout_cfgs = cfg
        .rates
        .iter()
        .map(|&f| LinRegConfig::new(cfg.lambda0, f))
        .collect::<Result<Vec<_>>>()?;

    let root = RngStream::new(cfg.seed, 1);
    let results = try_map_indexed(cfg.exec, designs.len() * reps, |item| -> Result<Vec<f64>> {
        let (cell, r) = (item / reps, item % reps);
        let (condition, scenario) = designs[cell];
        let data = generate_linreg_scenario(
            scenario,
            condition,
            root.substream(cell as u64).substream(r as u64),
        );
        let (x, y) = (data.train.x(), data.train.y());
        let (xt, yt) = (data.test.x(), data.test.y());
        let mut out = Vec::with_capacity(1 + dropout_cfgs.len());
        let post = posterior(x, y, &ridge_cfg)?;
        out.push(mse(
            predictive_mean(&post, xt, 0.0)?.as_slice(),
            yt.as_slice(),
        )?);
        for dc in &dropout_cfgs {
            let post = posterior(x, y, dc)?;
            out.push(mse(
                predictive_mean(&post, xt, dc.rate)?.as_slice(),
                yt.as_slice(),
            )?);
        }
        Ok(out)
    })?;

    let mut cells = Vec::new();
    for (cell, (condition, scenario)) in designs.iter().enumerate() {
        let dataset = format!("{}/{}", condition.name(), scenario.name());
        let column =
            |k: usize| -> Vec<f64> { (0..reps).map(|r| results[cell * reps + r][k]).collect() };
        cells.push(RawCell {
            dataset: dataset.clone(),
            junk: 0,
            rate: 0.0,
            method: "ridge".into(),
            values: column(0),
        });
        for (k, &f) in cfg.rates.iter().enumerate() {
            cells.push(RawCell {
                dataset: dataset.clone(),
                junk: 0,
                rate: f,
                method: "dropout".into(),
                values: column(k + 1),
            });
        }
    }
    Ok(GeneralizationRaw { cells })
}

/// Test MSE of ridge (`λ = ridge_lambda`, `f = 0`) against dropout
/// (`λ0 = lambda0`) at each rate, for every scenario under every condition.
pub fn run_generalization(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let raw = generalization_replicates(cfg)?;
    generalization_report(cfg, &raw)
}

/// Summarizes raw generalization results into a report.
pub fn generalization_report(
    cfg: &ExperimentConfig,
    raw: &GeneralizationRaw,
) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new(cfg)?;
    for c in &raw.cells {
        report.cells.push(c.summary("mse")?);
    }
    let datasets: Vec<String> = {
        let mut d: Vec<String> = report.cells.iter().map(|c| c.dataset.clone()).collect();
        d.dedup();
        d
    };
    for ds in datasets {
        let ridge = report
            .cells
            .iter()
            .find(|c| c.dataset == ds && c.method == "ridge");
        let best = report
            .cells
            .iter()
            .filter(|c| c.dataset == ds && c.method == "dropout")
            .min_by(|a, b| a.mean.total_cmp(&b.mean));
        let (Some(ridge), Some(best)) = (ridge, best) else {
            continue;
        };
        let note = if ds.starts_with("shift/") && best.mean >= ridge.mean {
            Some("dropout is not below ridge under covariate shift")
        } else if ds.starts_with("default/") && best.mean > 1.1 * ridge.mean {
            Some("dropout exceeds ridge by more than 10%")
        } else {
            None
        };
        if let Some(text) = note {
            report.notes.push(format!(
                "{ds}: {text} (best f={} mse={}, ridge mse={})",
                best.rate, best.mean, ridge.mean
            ));
        }
    }
    Ok(report)
}

/// Dropout and ridge coefficient paths on a standardized design with centered
/// response, plus the `f → 1` target `Λ₁⁻¹Xᵀy` as method `isolated`.
pub fn run_shrinkage(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    expect_kind(cfg, ExperimentKind::Shrinkage)?;
    let (name, data) = match &cfg.source {
        DataSource::Synthetic { name } if name == "qspr" => {
            (name.clone(), qspr_surrogate(RngStream::new(cfg.seed, 0)))
        }
        other => load_source(other)?,
    };
    let data = standardize(&data)?;
    let x = data.x();
    let y = data.y().add_scalar(-data.y().mean());

    let mut report = ExperimentReport::new(cfg)?;
    report.feature_names = data.feature_names().to_vec();
    let point = |method: &str, parameter: f64, w: &DVector<f64>| PathPoint {
        dataset: name.clone(),
        method: method.into(),
        parameter,
        coefficients: w.iter().copied().collect(),
    };
    for (f, w) in shrinkage_path(x, &y, cfg.lambda0, &cfg.rates, cfg.exec)? {
        report.paths.push(point("dropout", f, &w));
    }
    for (l, w) in ridge_path(x, &y, &cfg.ridge_grid, cfg.exec)? {
        report.paths.push(point("ridge", l, &w));
    }
    report
        .paths
        .push(point("isolated", 1.0, &isolated_fit(x, &y)?));

    if let Some(last) = report
        .paths
        .iter()
        .filter(|p| p.method == "dropout")
        .max_by(|a, b| a.parameter.total_cmp(&b.parameter))
    {
        let negative = last.coefficients.iter().filter(|&&c| c < -1e-8).count();
        if negative > 0 {
            report.notes.push(format!(
                "{negative} dropout coefficients are negative at f={}",
                last.parameter
            ));
        }
    }
    Ok(report)
}

/// Raw results of the logistic study.
#[derive(Debug, Clone, PartialEq)]
pub struct LogregRaw {
    /// One cell per (J, f) in config order; values indexed by split.
    pub cells: Vec<RawCell>,
    /// Splits redrawn because the test part held a single class.
    pub redraws: usize,
    /// Mean HMC acceptance per cell; empty for SVB.
    pub hmc_acceptance: Vec<f64>,
    /// HMC step halvings summed over every chain.
    pub step_halvings: usize,
    /// SVB repair events summed over every fit.
    pub svb_repairs: usize,
}

const MAX_SPLIT_ATTEMPTS: u64 = 100;

struct SplitOutcome {
    aucs: Vec<f64>,
    accept: Vec<f64>,
    redraws: usize,
    halvings: usize,
    repairs: usize,
}

fn classification_base(cfg: &ExperimentConfig) -> Result<(String, Dataset)> {
    let (name, data) = match &cfg.source {
        DataSource::Synthetic { name } => {
            let shape = classification_shape(name).ok_or_else(|| {
                Error::InvalidArgument(format!("unknown classification shape {name:?}"))
            })?;
            (
                name.clone(),
                synthetic_classification(shape.n, shape.p, RngStream::new(cfg.seed, 0)),
            )
        }
        other => load_source(other)?,
    };
    if !data.is_binary() {
        return Err(Error::InvalidArgument(
            "classification labels must be 0 or 1".into(),
        ));
    }
    Ok((name, data))
}

pub fn logreg_replicates(cfg: &ExperimentConfig) -> Result<(String, LogregRaw)> {
    expect_kind(cfg, ExperimentKind::Logreg)?;
    let (name, base) = classification_base(cfg)?;
    let base = standardize(&base)?;
    let prior = GammaPrior::new(cfg.gamma_a, cfg.gamma_b)?;
    let reps = cfg.replicates;
    let data_root = RngStream::new(cfg.seed, 2);
    let fit_root = RngStream::new(cfg.seed, 3);

    let outcomes = map_indexed(
        cfg.exec,
        cfg.junk.len() * reps,
        |item| -> Result<SplitOutcome> {
            let (ji, r) = (item / reps, item % reps);
            let junk = cfg.junk[ji];
            let rep = data_root.substream(junk as u64).substream(r as u64);
            let mut redraws = 0;
            let (train, test) = loop {
                let attempt = rep.substream(redraws as u64);
                let augmented = augment_junk(&base, junk, attempt.substream(0));
                let (train, test) = split(&augmented, cfg.train_fraction, attempt.substream(1))?;
                if test.y().iter().any(|&v| v == 1.0) && test.y().iter().any(|&v| v == 0.0) {
                    break (train, test);
                }
                redraws += 1;
                if redraws as u64 >= MAX_SPLIT_ATTEMPTS {
                    return Err(Error::SingleClass);
                }
            };
            let x_train = with_bias(train.x());
            let x_test = with_bias(test.x());
            let mut out = SplitOutcome {
                aucs: Vec::with_capacity(cfg.rates.len()),
                accept: Vec::new(),
                redraws,
                halvings: 0,
                repairs: 0,
            };
            for &f in &cfg.rates {
                let model = LogregModel::new(&x_train, train.y(), f, prior)?;
                let stream = fit_root
                    .substream(junk as u64)
                    .substream(r as u64)
                    .substream(f.to_bits());
                let probs = match cfg.method {
                    Method::Hmc => {
                        let chain = run_chain(&model, &cfg.hmc, stream, None)?;
                        out.accept.push(chain.accept_rate_hmc);
                        out.halvings += chain.step_halvings;
                        chain_predictive(&chain, &model, &x_test)?
                    }
                    Method::Svb => {
                        let problem = SvbProblem {
                            likelihood: &model,
                            prior,
                            dropout: DropoutSpec::new(f, [0])?,
                        };
                        let fit = svb_run(&problem, &cfg.svb, stream, None)?;
                        out.repairs += fit.diagnostics.floored + fit.diagnostics.retained;
                        svb_predictive(
                            &fit.state,
                            &model,
                            &x_test,
                            cfg.predictive_draws,
                            stream.substream(0),
                        )?
                    }
                    Method::ClosedForm => unreachable!("rejected by validate"),
                };
                out.aucs.push(auc(probs.as_slice(), test.y().as_slice())?);
            }
            Ok(out)
        },
    )
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let mut raw = LogregRaw {
        cells: Vec::new(),
        redraws: outcomes.iter().map(|o| o.redraws).sum(),
        hmc_acceptance: Vec::new(),
        step_halvings: outcomes.iter().map(|o| o.halvings).sum(),
        svb_repairs: outcomes.iter().map(|o| o.repairs).sum(),
    };
    for (ji, &junk) in cfg.junk.iter().enumerate() {
        let block = &outcomes[ji * reps..(ji + 1) * reps];
        for (k, &f) in cfg.rates.iter().enumerate() {
            raw.cells.push(RawCell {
                dataset: name.clone(),
                junk,
                rate: f,
                method: cfg.method.name().into(),
                values: block.iter().map(|o| o.aucs[k]).collect(),
            });
            if cfg.method == Method::Hmc {
                raw.hmc_acceptance
                    .push(block.iter().map(|o| o.accept[k]).sum::<f64>() / reps as f64);
            }
        }
    }
    Ok((name, raw))
}

/// Test AUC over repeated junk-augmented 80/20 splits for every (J, f).
pub fn run_logreg(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let (_, raw) = logreg_replicates(cfg)?;
    logreg_report(cfg, &raw)
}

/// Summarizes raw logistic results into a report.
pub fn logreg_report(cfg: &ExperimentConfig, raw: &LogregRaw) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new(cfg)?;
    for c in &raw.cells {
        report.cells.push(c.summary("auc")?);
    }
    if raw.redraws > 0 {
        report.notes.push(format!(
            "{} single-class test splits were redrawn",
            raw.redraws
        ));
    }
    for (c, a) in raw.cells.iter().zip(&raw.hmc_acceptance) {
        report.notes.push(format!(
            "J={} f={}: mean HMC acceptance {:.3}",
            c.junk, c.rate, a
        ));
    }
    if raw.step_halvings > 0 {
        report.notes.push(format!(
            "HMC step halved {} times across all chains",
            raw.step_halvings
        ));
    }
    if raw.svb_repairs > 0 {
        report.notes.push(format!(
            "SVB repaired {} variational coordinates across all fits",
            raw.svb_repairs
        ));
    }
    Ok(report)
}
