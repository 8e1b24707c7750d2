//! Bayesian logistic regression with dropout on the non-bias weights.
//!
//! Model: `τ = σ⁻² ~ Gamma(a, b)` (shape, rate), `w_k | τ ~ N(0, 1/τ)`,
//! `y_i | w ~ Bernoulli(σ(X_i·w))`. Under dropout the linear predictor of
//! observation `i` is approximated by a Gaussian with
//!
//! ```text
//! μ_i  = X_i1·w_1 + (1−f)·Σ_{j≥2} X_ij·w_j
//! σ²_i = f(1−f)·Σ_{j≥2} (X_ij·w_j)²
//! b_i  = sqrt(1 + π·σ²_i/8)
//! ```
//!
//! and the expected log-sigmoid becomes `b_i·log σ(±μ_i/b_i)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{ensure, Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Orientation of the logistic link.
///
/// `Reversed` is `σ(x) = 1/(1+eˣ)`, the form used in the original model
/// statement; `Standard` is `1/(1+e⁻ˣ)`. The two differ by the sign of `w`, so
/// predictions and ranking metrics agree once the posterior is fit under either.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    #[default]
    Reversed,
    Standard,
}

/// `ln(1 + eˣ)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Standard logistic function, stable for large `|x|`.
fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Link {
    pub fn sigmoid(self, t: f64) -> f64 {
        match self {
            Link::Standard => logistic(t),
            Link::Reversed => logistic(-t),
        }
    }

    pub fn log_sigmoid(self, t: f64) -> f64 {
        match self {
            Link::Standard => -softplus(-t),
            Link::Reversed => -softplus(t),
        }
    }

    /// `d/dt log σ(t)`.
    pub fn dlog_sigmoid(self, t: f64) -> f64 {
        match self {
            Link::Standard => logistic(-t),
            Link::Reversed => -logistic(t),
        }
    }
}

/// Gamma prior on the weight precision, shape–rate parametrization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl GammaPrior {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        ensure(shape > 0.0 && rate > 0.0, || {
            format!("gamma prior ({shape}, {rate}) must be positive")
        })?;
        Ok(Self { shape, rate })
    }

    pub fn ln_pdf(&self, tau: f64) -> f64 {
        self.shape * self.rate.ln() - ln_gamma(self.shape) + (self.shape - 1.0) * tau.ln()
            - self.rate * tau
    }

    pub fn dln_pdf(&self, tau: f64) -> f64 {
        (self.shape - 1.0) / tau - self.rate
    }
}

impl Default for GammaPrior {
    fn default() -> Self {
        Self {
            shape: 1.0,
            rate: 1.0,
        }
    }
}

/// `log N(w; 0, τ⁻¹I)`.
pub fn ln_weight_prior(sq_norm: f64, dim: usize, tau: f64) -> f64 {
    let d = dim as f64;
    0.5 * d * (tau.ln() - LN_2PI) - 0.5 * tau * sq_norm
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationMoments {
    pub mean: f64,
    pub variance: f64,
    pub inflation: f64,
}

/// Mean and variance of `X_i·w̃` when `w_2..w_p` are kept with probability `1−f`.
pub fn moments(x_row: &[f64], w: &[f64], rate: f64) -> ObservationMoments {
    let keep = 1.0 - rate;
    let mut head = 0.0;
    let mut sq = 0.0;
    for (&xj, &wj) in x_row[1..].iter().zip(&w[1..]) {
        let t = xj * wj;
        head += t;
        sq += t * t;
    }
    let variance = rate * keep * sq;
    ObservationMoments {
        mean: x_row[0] * w[0] + keep * head,
        variance,
        inflation: (1.0 + PI * variance / 8.0).sqrt(),
    }
}

/// `E_{x~N(μ, s²)}[log σ(x)] ≈ b·log σ(μ/b)` with `b = sqrt(1 + πs²/8)`.
pub fn expected_log_sigmoid(mu: f64, s2: f64, link: Link) -> f64 {
    let b = (1.0 + PI * s2 / 8.0).sqrt();
    b * link.log_sigmoid(mu / b)
}

/// Second-order expansion `log σ(μ) + ½·(log σ)''(μ)·s²`.
pub fn taylor_expected_log_sigmoid(mu: f64, s2: f64, link: Link) -> f64 {
    let s = logistic(mu);
    // (log σ)'' = −σ(1−σ) for either orientation
    link.log_sigmoid(mu) - 0.5 * s * (1.0 - s) * s2
}

/// Logistic dropout target. The first design column must be the bias.
#[derive(Debug, Clone)]
pub struct LogregModel {
    rows: Vec<f64>,
    n: usize,
    p: usize,
    y: Vec<f64>,
    rate: f64,
    prior: GammaPrior,
    link: Link,
}

impl LogregModel {
    pub fn new(x: &DMatrix<f64>, y: &DVector<f64>, rate: f64, prior: GammaPrior) -> Result<Self> {
        Self::with_link(x, y, rate, prior, Link::default())
    }

    pub fn with_link(
        x: &DMatrix<f64>,
        y: &DVector<f64>,
        rate: f64,
        prior: GammaPrior,
        link: Link,
    ) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                found: y.len(),
            });
        }
        ensure(x.ncols() >= 1, || {
            "design needs at least the bias column".into()
        })?;
        ensure(x.column(0).iter().all(|&v| v == 1.0), || {
            "first design column must be all ones".into()
        })?;
        ensure(y.iter().all(|&v| v == 0.0 || v == 1.0), || {
            "labels must be 0 or 1".into()
        })?;
        ensure((0.0..1.0).contains(&rate), || {
            format!("dropout rate {rate} not in [0, 1)")
        })?;
        GammaPrior::new(prior.shape, prior.rate)?;
        let (n, p) = x.shape();
        let rows = (0..n)
            .flat_map(|i| (0..p).map(move |j| (i, j)))
            .map(|(i, j)| x[(i, j)])
            .collect();
        Ok(Self {
            rows,
            n,
            p,
            y: y.iter().copied().collect(),
            rate,
            prior,
            link,
        })
    }

    /// Same data and prior with a different dropout rate.
    pub fn with_rate(&self, rate: f64) -> Result<Self> {
        ensure((0.0..1.0).contains(&rate), || {
            format!("dropout rate {rate} not in [0, 1)")
        })?;
        Ok(Self {
            rate,
            ..self.clone()
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn prior(&self) -> GammaPrior {
        self.prior
    }

    pub fn link(&self) -> Link {
        self.link
    }

    pub fn labels(&self) -> &[f64] {
        &self.y
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.p..(i + 1) * self.p]
    }

    fn check_w(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                found: w.len(),
            });
        }
        Ok(())
    }

    /// Per-observation term `b·log σ(±μ/b)` and its partials in `(μ, b)`.
    fn obs_term(&self, y: f64, m: &ObservationMoments) -> (f64, f64, f64) {
        let sign = if y == 1.0 { 1.0 } else { -1.0 };
        let t = sign * m.mean / m.inflation;
        let ls = self.link.log_sigmoid(t);
        let d = self.link.dlog_sigmoid(t);
        (m.inflation * ls, sign * d, ls - t * d)
    }

    /// Approximate dropout-averaged log-likelihood.
    pub fn log_likelihood(&self, w: &[f64]) -> f64 {
        (0..self.n)
            .map(|i| {
                self.obs_term(self.y[i], &moments(self.row(i), w, self.rate))
                    .0
            })
            .sum()
    }

    /// Approximate log-likelihood and its gradient in `w`, accumulated into `grad`.
    pub fn log_likelihood_and_grad(&self, w: &[f64], grad: &mut [f64]) -> f64 {
        let f = self.rate;
        let keep = 1.0 - f;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut total = 0.0;
        for i in 0..self.n {
            let row = self.row(i);
            let m = moments(row, w, f);
            let (val, d_mu, d_b) = self.obs_term(self.y[i], &m);
            total += val;
            grad[0] += d_mu * row[0];
            if f > 0.0 {
                // ∂b/∂σ² = π/(16b), ∂σ²/∂w_j = 2f(1−f)x_j²w_j
                let c_var = d_b * PI / (16.0 * m.inflation) * 2.0 * f * keep;
                let c_mu = d_mu * keep;
                for ((g, &xj), &wj) in grad[1..].iter_mut().zip(&row[1..]).zip(&w[1..]) {
                    *g += c_mu * xj + c_var * xj * xj * wj;
                }
            } else {
                for (g, &xj) in grad[1..].iter_mut().zip(&row[1..]) {
                    *g += d_mu * xj;
                }
            }
        }
        total
    }

    /// Exact Bernoulli log-likelihood at a fixed (possibly corrupted) weight vector.
    pub fn exact_log_likelihood(&self, w: &[f64]) -> f64 {
        (0..self.n)
            .map(|i| {
                let eta: f64 = self.row(i).iter().zip(w).map(|(a, b)| a * b).sum();
                let sign = if self.y[i] == 1.0 { 1.0 } else { -1.0 };
                self.link.log_sigmoid(sign * eta)
            })
            .sum()
    }

    /// Log prior terms that involve the precision.
    pub fn ln_prior(&self, sq_norm: f64, tau: f64) -> f64 {
        ln_weight_prior(sq_norm, self.p, tau) + self.prior.ln_pdf(tau)
    }

    /// Unnormalized log posterior of `(w, σ⁻²)`.
    pub fn log_posterior(&self, w: &[f64], tau: f64) -> Result<f64> {
        self.check_w(w)?;
        ensure(tau > 0.0, || format!("precision {tau} must be positive"))?;
        let sq: f64 = w.iter().map(|v| v * v).sum();
        Ok(self.log_likelihood(w) + self.ln_prior(sq, tau))
    }

    /// Gradient of [`log_posterior`](Self::log_posterior) in `w` and `σ⁻²`.
    pub fn grad_log_posterior(&self, w: &[f64], tau: f64) -> Result<(DVector<f64>, f64)> {
        self.check_w(w)?;
        ensure(tau > 0.0, || format!("precision {tau} must be positive"))?;
        let mut g = vec![0.0; self.p];
        self.log_likelihood_and_grad(w, &mut g);
        let sq: f64 = w.iter().map(|v| v * v).sum();
        for (gk, wk) in g.iter_mut().zip(w) {
            *gk -= tau * wk;
        }
        let d_tau = 0.5 * self.p as f64 / tau - 0.5 * sq + self.prior.dln_pdf(tau);
        Ok((DVector::from_vec(g), d_tau))
    }

    /// `σ(μ*/b*)` per row of `x_star` at a single parameter draw.
    pub fn predictive_prob(
        &self,
        w: &[f64],
        tau: f64,
        x_star: &DMatrix<f64>,
    ) -> Result<DVector<f64>> {
        self.check_w(w)?;
        ensure(tau > 0.0, || format!("precision {tau} must be positive"))?;
        if x_star.ncols() != self.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                found: x_star.ncols(),
            });
        }
        let mut row = vec![0.0; self.p];
        Ok(DVector::from_iterator(
            x_star.nrows(),
            (0..x_star.nrows()).map(|i| {
                for (j, r) in row.iter_mut().enumerate() {
                    *r = x_star[(i, j)];
                }
                let m = moments(&row, w, self.rate);
                self.link.sigmoid(m.mean / m.inflation)
            }),
        ))
    }
}

/// Log posterior of the weights at a fixed precision, as seen by the HMC sampler.
pub struct WeightConditional<'a> {
    pub model: &'a LogregModel,
    pub tau: f64,
}

impl crate::hmc::Target for WeightConditional<'_> {
    fn dim(&self) -> usize {
        self.model.p
    }

    fn log_density_and_grad(&self, w: &[f64], grad: &mut [f64]) -> f64 {
        let ll = self.model.log_likelihood_and_grad(w, grad);
        let mut sq = 0.0;
        for (g, &wk) in grad.iter_mut().zip(w) {
            *g -= self.tau * wk;
            sq += wk * wk;
        }
        ll - 0.5 * self.tau * sq
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> LogregModel {
        let x = DMatrix::from_row_slice(
            4,
            3,
            &[
                1.0, 0.3, -1.2, 1.0, -0.7, 0.4, 1.0, 1.5, 0.9, 1.0, -0.2, -0.8,
            ],
        );
        let y = DVector::from_column_slice(&[1.0, 0.0, 1.0, 0.0]);
        LogregModel::new(&x, &y, 0.4, GammaPrior::default()).unwrap()
    }

    #[test]
    fn zero_rate_moments() {
        let m = moments(&[1.0, 2.0, -1.0], &[0.5, 1.0, 3.0], 0.0);
        assert_eq!(
            (m.mean, m.variance, m.inflation),
            (0.5 + 2.0 - 3.0, 0.0, 1.0)
        );
        let m = moments(&[1.0, 2.0, -1.0], &[0.5, 0.0, 0.0], 0.7);
        assert_eq!((m.mean, m.variance), (0.5, 0.0));
    }

    #[test]
    fn log_sigmoid_values() {
        assert!((expected_log_sigmoid(0.0, 0.0, Link::Reversed) - 0.5f64.ln()).abs() < 1e-15);
        let v = expected_log_sigmoid(-50.0, 0.0, Link::Standard);
        assert!(((v + 50.0) / 50.0).abs() < 1e-6);
        let v = expected_log_sigmoid(50.0, 0.0, Link::Reversed);
        assert!(((v + 50.0) / 50.0).abs() < 1e-6);
        assert!(expected_log_sigmoid(1e3, 5.0, Link::Reversed).is_finite());
        assert!(expected_log_sigmoid(-1e3, 5.0, Link::Reversed).is_finite());
    }

    #[test]
    fn link_orientations_mirror() {
        for t in [-3.0, -0.1, 0.0, 0.8, 20.0] {
            assert!((Link::Reversed.sigmoid(t) - Link::Standard.sigmoid(-t)).abs() < 1e-15);
            assert!((Link::Reversed.sigmoid(t) - 1.0 / (1.0 + f64::exp(t))).abs() < 1e-15);
        }
    }

    #[test]
    fn prior_gradient() {
        let m = toy().with_rate(0.0).unwrap();
        let w = [0.2, -0.4, 0.9];
        let tau = 1.7;
        let (g, _) = m.grad_log_posterior(&w, tau).unwrap();
        let mut gl = vec![0.0; 3];
        m.log_likelihood_and_grad(&w, &mut gl);
        for k in 0..3 {
            assert!(((g[k] - gl[k]) - (-tau * w[k])).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = toy();
        assert!(m.log_posterior(&[0.0; 3], 0.0).is_err());
        assert!(m.log_posterior(&[0.0; 2], 1.0).is_err());
        let x = DMatrix::from_row_slice(1, 2, &[0.5, 1.0]);
        assert!(LogregModel::new(
            &x,
            &DVector::from_column_slice(&[1.0]),
            0.1,
            GammaPrior::default()
        )
        .is_err());
    }

    #[test]
    fn predictive_rules() {
        let m = toy();
        let xs = DMatrix::from_row_slice(2, 3, &[1.0, 3.0, 2.0, 1.0, -1.0, 0.5]);
        let p = m.predictive_prob(&[0.0; 3], 1.0, &xs).unwrap();
        assert!(p.iter().all(|&v| (v - 0.5).abs() < 1e-15));
        let w = [0.3, 1.0, -0.5];
        let m0 = m.with_rate(0.0).unwrap();
        let p0 = m0.predictive_prob(&w, 1.0, &xs).unwrap();
        for i in 0..2 {
            let eta: f64 = (0..3).map(|j| xs[(i, j)] * w[j]).sum();
            assert!((p0[i] - Link::Reversed.sigmoid(eta)).abs() < 1e-15);
        }
        // dropout variance pulls the probability toward one half
        let p = m.predictive_prob(&w, 1.0, &xs).unwrap();
        for i in 0..2 {
            let row: Vec<f64> = (0..3).map(|j| xs[(i, j)]).collect();
            let mo = moments(&row, &w, 0.4);
            let plain = Link::Reversed.sigmoid(mo.mean);
            assert!((p[i] - 0.5).abs() < (plain - 0.5).abs());
        }
    }
}
