//! Bayesian linear regression with binary weight dropout.
//!
//! Each observation sees its own corrupted copy of the weights, every
//! coordinate independently zeroed with probability `f`. Averaging the Gaussian
//! log-likelihood over that corruption gives a quadratic form in `w`, so the
//! dropout posterior stays conjugate:
//!
//! ```text
//! Λ  = λ0·I + f(1−f)·diag(XᵀX) + (1−f)²·XᵀX
//! μn = (1−f)·Λ⁻¹Xᵀy
//! s  = yᵀy − μnᵀΛμn
//! ```
//!
//! With a Jeffreys prior on the noise variance the posterior factorizes as
//! `σ² ~ InvGamma(n/2, s/2)` and `w | σ² ~ N(μn, σ²Λ⁻¹)`.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::parallel::{try_map_indexed, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinRegConfig {
    /// Prior precision scale on the weights, relative to the noise variance.
    pub lambda0: f64,
    /// Dropout rate.
    pub rate: f64,
}

impl LinRegConfig {
    pub fn new(lambda0: f64, rate: f64) -> Result<Self> {
        ensure(lambda0 >= 0.0 && lambda0.is_finite(), || {
            format!("lambda0 {lambda0} must be >= 0")
        })?;
        ensure((0.0..1.0).contains(&rate), || {
            format!("dropout rate {rate} not in [0, 1)")
        })?;
        Ok(Self { lambda0, rate })
    }
}

fn check_xy(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            found: y.len(),
        });
    }
    Ok(())
}

/// `diag(XᵀX)` as a vector.
pub fn column_energies(x: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.norm_squared()))
}

/// Gaussian log-likelihood averaged over per-observation weight dropout.
pub fn expected_loglik(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    w: &DVector<f64>,
    sigma2: f64,
    rate: f64,
) -> Result<f64> {
    check_xy(x, y)?;
    if w.len() != x.ncols() {
        return Err(Error::DimensionMismatch {
            expected: x.ncols(),
            found: w.len(),
        });
    }
    ensure(sigma2 > 0.0, || {
        format!("noise variance {sigma2} must be positive")
    })?;
    let n = x.nrows() as f64;
    let resid = y - (x * w).scale(1.0 - rate);
    let penalty: f64 = column_energies(x)
        .iter()
        .zip(w.iter())
        .map(|(c, wk)| c * wk * wk)
        .sum();
    Ok(-0.5 * n * (2.0 * PI * sigma2).ln()
        - (resid.norm_squared() + rate * (1.0 - rate) * penalty) / (2.0 * sigma2))
}

/// Normal–inverse-gamma dropout posterior.
#[derive(Debug, Clone)]
pub struct LinRegPosterior {
    precision: DMatrix<f64>,
    cholesky: Cholesky<f64, Dyn>,
    mean: DVector<f64>,
    residual: f64,
    yty: f64,
    n: usize,
}

impl LinRegPosterior {
    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// `yᵀy − μnᵀΛμn`.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.mean.len()
    }

    /// `Λ⁻¹`, the weight covariance per unit noise variance.
    pub fn covariance_unit(&self) -> DMatrix<f64> {
        self.cholesky.inverse()
    }

    /// Normalized joint log density of `(w, σ²)` under the factorized posterior.
    pub fn log_density(&self, w: &DVector<f64>, sigma2: f64) -> Result<f64> {
        let (shape, scale) = posterior_noise_marginal(self)?;
        let p = self.p() as f64;
        let d = w - &self.mean;
        let quad = d.dot(&(&self.precision * &d));
        let log_det: f64 = self
            .cholesky
            .l()
            .diagonal()
            .iter()
            .map(|v| 2.0 * v.ln())
            .sum();
        let log_w = -0.5 * p * (2.0 * PI * sigma2).ln() + 0.5 * log_det - quad / (2.0 * sigma2);
        let log_s = shape * scale.ln()
            - statrs::function::gamma::ln_gamma(shape)
            - (shape + 1.0) * sigma2.ln()
            - scale / sigma2;
        Ok(log_w + log_s)
    }
}

/// Builds `Λ` for the given design and configuration.
pub fn dropout_precision(x: &DMatrix<f64>, cfg: &LinRegConfig) -> DMatrix<f64> {
    let f = cfg.rate;
    let mut lambda = x.tr_mul(x).scale((1.0 - f) * (1.0 - f));
    let energies = column_energies(x);
    for k in 0..x.ncols() {
        lambda[(k, k)] += cfg.lambda0 + f * (1.0 - f) * energies[k];
    }
    lambda
}

pub fn posterior(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    cfg: &LinRegConfig,
) -> Result<LinRegPosterior> {
    check_xy(x, y)?;
    let precision = dropout_precision(x, cfg);
    let cholesky = Cholesky::new(precision.clone()).ok_or_else(|| {
        Error::Singular(format!(
            "dropout precision for p={} (lambda0={}, f={}) has no Cholesky factor",
            x.ncols(),
            cfg.lambda0,
            cfg.rate
        ))
    })?;
    let rhs = x.tr_mul(y).scale(1.0 - cfg.rate);
    let mean = cholesky.solve(&rhs);
    let yty = y.norm_squared();
    // μᵀΛμ = μᵀ·rhs
    let residual = yty - mean.dot(&rhs);
    Ok(LinRegPosterior {
        precision,
        cholesky,
        mean,
        residual,
        yty,
        n: x.nrows(),
    })
}

/// Inverse-gamma `(shape, scale)` of the noise variance marginal.
pub fn posterior_noise_marginal(post: &LinRegPosterior) -> Result<(f64, f64)> {
    if post.n == 0 {
        return Err(Error::Degenerate(
            "posterior built from zero observations".into(),
        ));
    }
    // residuals at round-off level mean an exact interpolation
    if post.residual <= 1e-14 * post.yty.max(f64::MIN_POSITIVE) {
        return Err(Error::Degenerate(format!(
            "residual term {} is not positive; the fit interpolates the data",
            post.residual
        )));
    }
    Ok((post.n as f64 / 2.0, post.residual / 2.0))
}

/// `(1−f)·X*·μn`.
pub fn predictive_mean(
    post: &LinRegPosterior,
    x_star: &DMatrix<f64>,
    rate: f64,
) -> Result<DVector<f64>> {
    if x_star.ncols() != post.p() {
        return Err(Error::DimensionMismatch {
            expected: post.p(),
            found: x_star.ncols(),
        });
    }
    Ok((x_star * &post.mean).scale(1.0 - rate))
}

/// Ridge estimate `(λI + XᵀX)⁻¹Xᵀy`.
pub fn ridge(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    Ok(posterior(x, y, &LinRegConfig::new(lambda, 0.0)?)?.mean)
}

/// `diag(XᵀX)⁻¹Xᵀy`: each weight fit in isolation.
pub fn isolated_fit(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    check_xy(x, y)?;
    let xty = x.tr_mul(y);
    let energies = column_energies(x);
    if energies.iter().any(|&e| e <= 0.0) {
        return Err(Error::Singular("design has an all-zero column".into()));
    }
    Ok(xty.component_div(&energies))
}

/// Posterior mean at every dropout rate of the grid.
pub fn shrinkage_path(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda0: f64,
    rates: &[f64],
    exec: Execution,
) -> Result<Vec<(f64, DVector<f64>)>> {
    try_map_indexed(exec, rates.len(), |i| {
        let cfg = LinRegConfig::new(lambda0, rates[i])?;
        Ok((rates[i], posterior(x, y, &cfg)?.mean))
    })
}

/// Ridge estimates along a grid of penalties.
pub fn ridge_path(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambdas: &[f64],
    exec: Execution,
) -> Result<Vec<(f64, DVector<f64>)>> {
    try_map_indexed(exec, lambdas.len(), |i| {
        Ok((lambdas[i], ridge(x, y, lambdas[i])?))
    })
}
