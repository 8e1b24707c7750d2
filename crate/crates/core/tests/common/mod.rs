//! Independent reference computations shared by the integration suites.
#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

/// Gauss–Hermite nodes and weights for `∫ e^{-x²} g(x) dx` (Golub–Welsch).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::zeros(n, n);
    for k in 1..n {
        let b = (k as f64 / 2.0).sqrt();
        j[(k, k - 1)] = b;
        j[(k - 1, k)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            (
                eig.eigenvalues[k],
                PI.sqrt() * eig.eigenvectors[(0, k)].powi(2),
            )
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// `E[g(x)]` for `x ~ N(mu, s2)` by Gauss–Hermite quadrature.
pub fn normal_expectation(
    g: impl Fn(f64) -> f64,
    mu: f64,
    s2: f64,
    nodes: &(Vec<f64>, Vec<f64>),
) -> f64 {
    let (x, w) = nodes;
    let scale = (2.0 * s2).sqrt();
    x.iter()
        .zip(w)
        .map(|(&xi, &wi)| wi * g(mu + scale * xi))
        .sum::<f64>()
        / PI.sqrt()
}

/// `log(1/(1+e^t))`, the reversed logistic, written independently of the crate.
pub fn log_rev_sigmoid(t: f64) -> f64 {
    if t > 0.0 {
        -t - (-t).exp().ln_1p()
    } else {
        -(t.exp().ln_1p())
    }
}

pub fn rev_sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + t.exp())
}

/// Every keep/drop pattern of length `p` with its probability at rate `f`.
pub fn masks(p: usize, f: f64) -> Vec<(Vec<bool>, f64)> {
    (0u64..1 << p)
        .map(|bits| {
            let keep: Vec<bool> = (0..p).map(|k| bits >> k & 1 == 1).collect();
            let prob = keep.iter().map(|&k| if k { 1.0 - f } else { f }).product();
            (keep, prob)
        })
        .collect()
}

pub fn normal_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn normal_vector<R: Rng>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Expected Gaussian log-likelihood by summing over every per-observation mask.
pub fn enumerated_loglik(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    w: &DVector<f64>,
    sigma2: f64,
    f: f64,
) -> f64 {
    let (n, p) = x.shape();
    let all = masks(p, f);
    let mut total = 0.0;
    for i in 0..n {
        for (keep, prob) in &all {
            let pred: f64 = (0..p).filter(|&k| keep[k]).map(|k| x[(i, k)] * w[k]).sum();
            total +=
                prob * (-0.5 * (2.0 * PI * sigma2).ln() - (y[i] - pred).powi(2) / (2.0 * sigma2));
        }
    }
    total
}

/// Conjugate ridge/Bayes mean `(λ0 I + XᵀX)⁻¹Xᵀy` via LU, independent of the crate's Cholesky path.
pub fn classical_mean(x: &DMatrix<f64>, y: &DVector<f64>, lambda0: f64) -> DVector<f64> {
    let p = x.ncols();
    let a = x.transpose() * x + DMatrix::identity(p, p) * lambda0;
    a.lu().solve(&(x.transpose() * y)).expect("invertible")
}

/// Plain Bayesian logistic log posterior under the reversed link, with
/// `w ~ N(0, τ⁻¹I)` and `τ ~ Gamma(a, b)` (shape-rate), all constants included.
pub fn plain_logistic_log_posterior(
    x: &DMatrix<f64>,
    y: &[f64],
    w: &[f64],
    tau: f64,
    a: f64,
    b: f64,
) -> f64 {
    let p = w.len();
    let mut ll = 0.0;
    for i in 0..x.nrows() {
        let eta: f64 = (0..p).map(|k| x[(i, k)] * w[k]).sum();
        ll += if y[i] == 1.0 {
            log_rev_sigmoid(eta)
        } else {
            log_rev_sigmoid(-eta)
        };
    }
    let sq: f64 = w.iter().map(|v| v * v).sum();
    let lw = 0.5 * p as f64 * (tau / (2.0 * PI)).ln() - 0.5 * tau * sq;
    let lt = a * b.ln() - statrs::function::gamma::ln_gamma(a) + (a - 1.0) * tau.ln() - b * tau;
    ll + lw + lt
}

/// Monte Carlo standard error of the mean by non-overlapping batch means.
pub fn batch_means_se(xs: &[f64], batches: usize) -> f64 {
    let size = xs.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| xs[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let m = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}

pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Column-standardized design: zero mean, population variance one.
pub fn standardized<R: Rng>(n: usize, p: usize, rng: &mut R) -> DMatrix<f64> {
    let mut x = normal_matrix(n, p, rng);
    for mut col in x.column_iter_mut() {
        let m = col.mean();
        col.add_scalar_mut(-m);
        let sd = (col.norm_squared() / n as f64).sqrt();
        col /= sd;
    }
    x
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

pub fn max_rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1e-300)
}

/// Gaussian log density with precision matrix `prec` and mean `mean`.
pub struct GaussianTarget {
    pub mean: Vec<f64>,
    pub prec: DMatrix<f64>,
}

impl bayesdrop::hmc::Target for GaussianTarget {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn log_density_and_grad(&self, w: &[f64], grad: &mut [f64]) -> f64 {
        let d = DVector::from_iterator(w.len(), w.iter().zip(&self.mean).map(|(a, m)| a - m));
        let pd = &self.prec * &d;
        for (g, v) in grad.iter_mut().zip(pd.iter()) {
            *g = -v;
        }
        -0.5 * d.dot(&pd)
    }
}

/// Asymptotic Kolmogorov tail `P(√n·D > x)`.
pub fn kolmogorov_tail(x: f64) -> f64 {
    let mut s = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        let term = 2.0 * (-2.0 * kf * kf * x * x).exp();
        s += if k % 2 == 1 { term } else { -term };
    }
    s.clamp(0.0, 1.0)
}

/// One-sample Kolmogorov–Smirnov p-value against the standard normal.
pub fn ks_standard_normal(xs: &[f64]) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    let nd = Normal::new(0.0, 1.0).unwrap();
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let c = nd.cdf(x);
        d = d.max((i as f64 + 1.0) / n - c).max(c - i as f64 / n);
    }
    kolmogorov_tail(n.sqrt() * d)
}

/// `−½λ‖y − Xw‖²` with known noise precision `λ`.
pub struct LinearGaussian {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub noise_prec: f64,
}

impl LinearGaussian {
    /// Exact posterior mean and covariance under `w ~ N(0, τ⁻¹I)`.
    pub fn posterior(&self, tau: f64) -> (DVector<f64>, DMatrix<f64>) {
        let p = self.x.ncols();
        let prec = self.x.transpose() * &self.x * self.noise_prec + DMatrix::identity(p, p) * tau;
        let cov = prec.try_inverse().expect("positive definite");
        let mean = &cov * (self.x.transpose() * &self.y) * self.noise_prec;
        (mean, cov)
    }
}

impl bayesdrop::svb::Likelihood for LinearGaussian {
    fn dim(&self) -> usize {
        self.x.ncols()
    }

    fn log_likelihood(&self, w: &[f64]) -> f64 {
        let r = &self.y - &self.x * DVector::from_column_slice(w);
        -0.5 * self.noise_prec * r.norm_squared()
    }
}

/// One-weight logistic model `Σ log σ(s_i·x_i·w)` under the reversed link.
pub struct Logistic1D {
    pub xs: Vec<f64>,
    pub signs: Vec<f64>,
}

impl Logistic1D {
    pub fn eval(&self, w: f64) -> f64 {
        self.xs
            .iter()
            .zip(&self.signs)
            .map(|(x, s)| log_rev_sigmoid(s * x * w))
            .sum()
    }
}

impl bayesdrop::svb::Likelihood for Logistic1D {
    fn dim(&self) -> usize {
        1
    }

    fn log_likelihood(&self, w: &[f64]) -> f64 {
        self.eval(w[0])
    }
}

fn ln_normal_prior(w: f64, tau: f64) -> f64 {
    0.5 * (tau / (2.0 * PI)).ln() - 0.5 * tau * w * w
}

/// `g`, `C` for one weight at known precision, by Gauss–Hermite in `w` and
/// mask enumeration `(1−f)·ℓ(w) + f·ℓ(0)` for the corruption.
pub fn quadrature_g_c_fixed(
    ll: impl Fn(f64) -> f64,
    mean: f64,
    var: f64,
    rate: f64,
    tau: f64,
) -> (DVector<f64>, DMatrix<f64>) {
    let (x, wts) = gauss_hermite(100);
    let scale = (2.0 * var).sqrt();
    let l0 = ll(0.0);
    let mut g = DVector::zeros(3);
    let mut c = DMatrix::zeros(3, 3);
    for (&xi, &wi) in x.iter().zip(&wts) {
        let w = mean + scale * xi;
        let pi = wi / PI.sqrt();
        let lj = (1.0 - rate) * ll(w) + rate * l0 + ln_normal_prior(w, tau);
        let u = DVector::from_column_slice(&[1.0, w, w * w]);
        g += &u * (pi * lj);
        c += &u * u.transpose() * pi;
    }
    (g, c)
}

/// `g`, `C` for one weight and a Gamma precision factor, with the precision
/// integrated on a dense log-scale trapezoid.
#[allow(clippy::too_many_arguments)]
pub fn quadrature_g_c_gamma(
    ll: impl Fn(f64) -> f64,
    mean: f64,
    var: f64,
    shape: f64,
    rate_param: f64,
    prior: (f64, f64),
    rate: f64,
) -> (DVector<f64>, DMatrix<f64>) {
    use statrs::function::gamma::ln_gamma;
    let (x, wts) = gauss_hermite(60);
    let scale = (2.0 * var).sqrt();
    let l0 = ll(0.0);
    let ln_gamma_pdf =
        |t: f64, a: f64, b: f64| a * b.ln() - ln_gamma(a) + (a - 1.0) * t.ln() - b * t;
    let (lo, hi, m) = (-40.0f64, 6.0f64, 20_000usize);
    let h = (hi - lo) / m as f64;
    let taus: Vec<(f64, f64)> = (0..=m)
        .map(|j| {
            let s = lo + h * j as f64;
            let t = s.exp();
            let end = if j == 0 || j == m { 0.5 } else { 1.0 };
            (t, end * h * (ln_gamma_pdf(t, shape, rate_param) + s).exp())
        })
        .collect();
    let mut g = DVector::zeros(5);
    let mut c = DMatrix::zeros(5, 5);
    for (&xi, &wi) in x.iter().zip(&wts) {
        let w = mean + scale * xi;
        let pw = wi / PI.sqrt();
        let ld = (1.0 - rate) * ll(w) + rate * l0;
        for &(t, pt) in &taus {
            let lj = ld + ln_normal_prior(w, t) + ln_gamma_pdf(t, prior.0, prior.1);
            let u = [1.0, w, w * w, t.ln(), t];
            let pi = pw * pt;
            for a in 0..5 {
                g[a] += pi * u[a] * lj;
                for b in a..5 {
                    c[(a, b)] += pi * u[a] * u[b];
                }
            }
        }
    }
    for a in 0..5 {
        for b in 0..a {
            c[(a, b)] = c[(b, a)];
        }
    }
    (g, c)
}

/// Per-entry mean and standard error of a stream of vectors.
pub fn entrywise_mean_se(rows: &[Vec<f64>]) -> Vec<(f64, f64)> {
    (0..rows[0].len())
        .map(|k| {
            let col: Vec<f64> = rows.iter().map(|r| r[k]).collect();
            mean_and_se(&col)
        })
        .collect()
}
