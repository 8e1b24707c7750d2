//! Stochastic variational Bayes with dropout.
//!
//! The variational family is a product of Gaussians over the weights,
//! `r_k(w) ∝ exp(η_k1·w + η_k2·w²)`, and a Gamma over the precision,
//! `r_0(τ) ∝ exp(η_01·log τ + η_02·τ)`. Prepending a constant to the stacked
//! statistics, `T̂(θ) = [1, w_1, w_1², …, w_p, w_p², log τ, τ]`, turns the
//! fixed point of the unnormalized KL divergence into the regression
//! `η̃ = C⁻¹g` with
//!
//! ```text
//! g = E_r[ T̂(θ)ᵀ · log( q(x | w̃) · q(θ) ) ],  w̃ ~ dropout(w)
//! C = E_r[ T̂(θ)ᵀ T̂(θ) ]
//! ```
//!
//! Both are estimated from `S` draws per iteration, smoothed with step `ε`,
//! and the second half of the run is averaged into the final estimate.
//! The precision may be held fixed, sampled, or integrated on a grid of
//! equidistant points between the 0.1% and 99.9% quantiles of `r_0`.

use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma as GammaSampler, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Gamma as GammaDist};

use crate::data::DropoutSpec;
use crate::error::{ensure, Error, Result};
use crate::logreg::{ln_weight_prior, GammaPrior, LogregModel};
use crate::parallel::{map_indexed, Execution};
use crate::rng::RngStream;

/// Log-likelihood of the data at a fixed weight vector.
pub trait Likelihood: Sync {
    fn dim(&self) -> usize;
    fn log_likelihood(&self, w: &[f64]) -> f64;
}

impl Likelihood for LogregModel {
    fn dim(&self) -> usize {
        self.p()
    }

    fn log_likelihood(&self, w: &[f64]) -> f64 {
        self.exact_log_likelihood(w)
    }
}

/// How the weight precision enters the variational problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrecisionTreatment {
    /// Known precision; no variational factor for it.
    Fixed(f64),
    /// One Gamma draw per sample.
    Sampled,
    /// Rao-Blackwellized sum over this many grid points.
    Grid(usize),
}

impl PrecisionTreatment {
    fn is_variational(self) -> bool {
        !matches!(self, PrecisionTreatment::Fixed(_))
    }
}

/// Likelihood, priors and corruption defining a run.
pub struct SvbProblem<'a, L: Likelihood + ?Sized> {
    pub likelihood: &'a L,
    pub prior: GammaPrior,
    pub dropout: DropoutSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvbConfig {
    pub iterations: usize,
    pub samples: usize,
    pub step: f64,
    pub precision: PrecisionTreatment,
    /// Corrupted copies evaluated per parameter draw.
    pub corrupted_per_sample: usize,
    pub variance_floor: f64,
    /// Redraw budget per sample when the log-joint is not finite.
    pub max_redraws: usize,
    #[serde(skip)]
    pub exec: Execution,
    #[serde(skip)]
    pub trace: bool,
}

impl SvbConfig {
    pub fn with_iterations(iterations: usize, samples: usize) -> Self {
        Self {
            iterations,
            samples,
            step: 1.0 / (iterations as f64).sqrt(),
            precision: PrecisionTreatment::Grid(100),
            corrupted_per_sample: 1,
            variance_floor: 1e-8,
            max_redraws: 100,
            exec: Execution::default(),
            trace: false,
        }
    }

    /// `N = 20 000`, `S = 100`, `ε = 1/√N`, 100-point precision grid.
    pub fn paper() -> Self {
        Self::with_iterations(20_000, 100)
    }

    /// `N = 2 000`, `S = 20`, otherwise as [`paper`](Self::paper).
    pub fn desk() -> Self {
        Self::with_iterations(2_000, 20)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.iterations >= 2, || {
            "SVB needs at least 2 iterations".into()
        })?;
        ensure(self.samples >= 1, || {
            "SVB needs at least one sample per iteration".into()
        })?;
        ensure(self.step > 0.0 && self.step <= 1.0, || {
            format!("step {} not in (0, 1]", self.step)
        })?;
        ensure(self.corrupted_per_sample >= 1, || {
            "need at least one corrupted copy".into()
        })?;
        match self.precision {
            PrecisionTreatment::Grid(g) => {
                ensure(g >= 2, || "precision grid needs >= 2 points".into())
            }
            PrecisionTreatment::Fixed(t) => {
                ensure(t > 0.0, || "fixed precision must be positive".into())
            }
            PrecisionTreatment::Sampled => Ok(()),
        }
    }
}

/// Natural parameters of the mean-field family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalState {
    /// `(η_k1, η_k2)` per weight.
    pub weights: Vec<[f64; 2]>,
    /// `(η_01, η_02)` for the precision, absent when it is fixed.
    pub precision: Option<[f64; 2]>,
    /// Coefficient on the constant statistic; not needed for sampling.
    pub log_scale: f64,
}

/// Moment form of a [`VariationalState`].
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    /// Gamma `(shape, rate)`.
    pub precision: Option<(f64, f64)>,
}

fn gaussian_naturals(mean: f64, var: f64) -> [f64; 2] {
    [mean / var, -0.5 / var]
}

fn gamma_naturals(shape: f64, rate: f64) -> [f64; 2] {
    [shape - 1.0, -rate]
}

impl VariationalState {
    pub fn from_moments(
        means: &[f64],
        variances: &[f64],
        precision: Option<(f64, f64)>,
    ) -> Result<Self> {
        if means.len() != variances.len() {
            return Err(Error::DimensionMismatch {
                expected: means.len(),
                found: variances.len(),
            });
        }
        ensure(variances.iter().all(|&v| v > 0.0), || {
            "variances must be positive".into()
        })?;
        if let Some((a, b)) = precision {
            ensure(a > 0.0 && b > 0.0, || {
                "gamma shape and rate must be positive".into()
            })?;
        }
        Ok(Self {
            weights: means
                .iter()
                .zip(variances)
                .map(|(&m, &v)| gaussian_naturals(m, v))
                .collect(),
            precision: precision.map(|(a, b)| gamma_naturals(a, b)),
            log_scale: 0.0,
        })
    }

    /// Standard normal weights and, when requested, a `Gamma(1, 1)` precision.
    pub fn standard(p: usize, with_precision: bool) -> Self {
        Self::from_moments(
            &vec![0.0; p],
            &vec![1.0; p],
            with_precision.then_some((1.0, 1.0)),
        )
        .expect("valid by construction")
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Length of the stacked statistic `T̂`.
    pub fn stat_len(&self) -> usize {
        stat_len(self.dim(), self.precision.is_some())
    }

    /// `η̃` in stacked order.
    pub fn stacked(&self) -> DVector<f64> {
        let mut v = Vec::with_capacity(self.stat_len());
        v.push(self.log_scale);
        for e in &self.weights {
            v.extend_from_slice(e);
        }
        if let Some(e) = self.precision {
            v.extend_from_slice(&e);
        }
        DVector::from_vec(v)
    }

    /// Splits a stacked vector without checking integrability.
    pub fn from_stacked(eta: &DVector<f64>, p: usize, with_precision: bool) -> Result<Self> {
        let expected = stat_len(p, with_precision);
        if eta.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: eta.len(),
            });
        }
        Ok(Self {
            log_scale: eta[0],
            weights: (0..p).map(|k| [eta[1 + 2 * k], eta[2 + 2 * k]]).collect(),
            precision: with_precision.then(|| [eta[1 + 2 * p], eta[2 + 2 * p]]),
        })
    }

    fn integrability_issues(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (k, e) in self.weights.iter().enumerate() {
            if !(e[1] < 0.0 && e[0].is_finite() && e[1].is_finite()) {
                out.push(format!("weight {k}: eta = ({}, {})", e[0], e[1]));
            }
        }
        if let Some(e) = self.precision {
            if !(e[0] > -1.0 && e[1] < 0.0 && e[0].is_finite() && e[1].is_finite()) {
                out.push(format!("precision: eta = ({}, {})", e[0], e[1]));
            }
        }
        out
    }

    pub fn is_integrable(&self) -> bool {
        self.integrability_issues().is_empty()
    }
}

fn stat_len(p: usize, with_precision: bool) -> usize {
    1 + 2 * p + if with_precision { 2 } else { 0 }
}

pub fn natural_to_moment(state: &VariationalState) -> Result<Moments> {
    let issues = state.integrability_issues();
    if !issues.is_empty() {
        return Err(Error::NotIntegrable(issues.join("; ")));
    }
    Ok(Moments {
        means: state.weights.iter().map(|e| -e[0] / (2.0 * e[1])).collect(),
        variances: state.weights.iter().map(|e| -0.5 / e[1]).collect(),
        precision: state.precision.map(|e| (e[0] + 1.0, -e[1])),
    })
}

/// One draw `(w, σ⁻²)` from the variational distribution; the precision is
/// `None` when the state has no precision factor.
pub fn sample_variational<R: Rng + ?Sized>(
    state: &VariationalState,
    rng: &mut R,
) -> Result<(Vec<f64>, Option<f64>)> {
    let m = natural_to_moment(state)?;
    let mut w = Vec::with_capacity(state.dim());
    draw_weights(&m, 0.0, rng, &mut w);
    let tau = match m.precision {
        Some((a, b)) => Some(gamma_sampler(a, b)?.sample(rng)),
        None => None,
    };
    Ok((w, tau))
}

fn draw_weights<R: Rng + ?Sized>(m: &Moments, floor: f64, rng: &mut R, out: &mut Vec<f64>) {
    out.clear();
    out.extend(m.means.iter().zip(&m.variances).map(|(&mu, &v)| {
        let z: f64 = rng.sample(StandardNormal);
        mu + v.max(floor).sqrt() * z
    }));
}

fn gamma_sampler(shape: f64, rate: f64) -> Result<GammaSampler<f64>> {
    GammaSampler::new(shape, 1.0 / rate)
        .map_err(|e| Error::InvalidArgument(format!("gamma({shape}, {rate}): {e}")))
}

/// Equidistant precision grid between the 0.001 and 0.999 quantiles of
/// `Gamma(shape, rate)`, with weights proportional to the density, summing to 1.
pub fn rao_blackwell_grid(shape: f64, rate: f64, size: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(shape > 0.0 && rate > 0.0) {
        return Err(Error::Degenerate(format!(
            "gamma({shape}, {rate}) has no valid grid"
        )));
    }
    ensure(size >= 2, || "grid needs at least 2 points".into())?;
    let dist = GammaDist::new(shape, rate).map_err(|e| Error::Degenerate(e.to_string()))?;
    let lo = dist.inverse_cdf(1e-3);
    let hi = dist.inverse_cdf(0.999);
    // a vanishing lower quantile would put a point on the boundary
    let lo = lo.max(hi * 1e-12);
    let points: Vec<f64> = (0..size)
        .map(|j| lo + (hi - lo) * j as f64 / (size - 1) as f64)
        .collect();
    let logs: Vec<f64> = points.iter().map(|&t| dist.ln_pdf(t)).collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|v| *v /= total);
    Ok((points, weights))
}

/// Monte Carlo estimates of `g` and `C` at the current state.
#[derive(Debug, Clone)]
pub struct GcEstimate {
    pub g: DVector<f64>,
    pub c: DMatrix<f64>,
    /// Draws discarded because the log-joint was not finite.
    pub redraws: usize,
}

const CHUNK: usize = 16;

struct PrecisionPoints {
    taus: Vec<f64>,
    weights: Vec<f64>,
}

pub fn estimate_g_c<L: Likelihood + ?Sized>(
    state: &VariationalState,
    problem: &SvbProblem<'_, L>,
    cfg: &SvbConfig,
    stream: RngStream,
) -> Result<GcEstimate> {
    let p = problem.likelihood.dim();
    if state.dim() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: state.dim(),
        });
    }
    if state.precision.is_some() != cfg.precision.is_variational() {
        return Err(Error::InvalidArgument(
            "state precision factor does not match the precision treatment".into(),
        ));
    }
    problem.dropout.validate_for(p)?;
    let moments = natural_to_moment(state)?;
    let grid = match (cfg.precision, moments.precision) {
        (PrecisionTreatment::Grid(size), Some((a, b))) => {
            let (taus, weights) = rao_blackwell_grid(a, b, size)?;
            Some(PrecisionPoints { taus, weights })
        }
        _ => None,
    };
    let sampler = match (cfg.precision, moments.precision) {
        (PrecisionTreatment::Sampled, Some((a, b))) => Some(gamma_sampler(a, b)?),
        _ => None,
    };

    let d = stat_len(p, cfg.precision.is_variational());
    let du = 1 + 2 * p;
    let n_chunks = cfg.samples.div_ceil(CHUNK);

    let partials = map_indexed(
        cfg.exec,
        n_chunks,
        |chunk| -> Result<(Vec<f64>, Vec<f64>, usize)> {
            let mut rng = stream.substream(chunk as u64).rng();
            let mut g = vec![0.0; d];
            // upper triangle, row-major
            let mut c = vec![0.0; d * d];
            let mut redraws = 0usize;
            let mut w = Vec::with_capacity(p);
            let mut wt = vec![0.0; p];
            let mut u = vec![0.0; du];
            let mut single = PrecisionPoints {
                taus: vec![0.0],
                weights: vec![1.0],
            };
            let count = CHUNK.min(cfg.samples - chunk * CHUNK);
            for _ in 0..count {
                let mut tries = 0;
                let (ll, tau_sample) = loop {
                    draw_weights(&moments, cfg.variance_floor, &mut rng, &mut w);
                    let tau = sampler.as_ref().map(|s| s.sample(&mut rng));
                    let mut ll = 0.0;
                    for _ in 0..cfg.corrupted_per_sample {
                        problem.dropout.corrupt(&w, &mut wt, &mut rng);
                        ll += problem.likelihood.log_likelihood(&wt);
                    }
                    ll /= cfg.corrupted_per_sample as f64;
                    if ll.is_finite() && tau.is_none_or(|t| t > 0.0 && t.is_finite()) {
                        break (ll, tau);
                    }
                    redraws += 1;
                    tries += 1;
                    if tries > cfg.max_redraws {
                        return Err(Error::Degenerate(format!(
                            "log-joint not finite after {tries} redraws"
                        )));
                    }
                };
                let sq: f64 = w.iter().map(|v| v * v).sum();

                u[0] = 1.0;
                for k in 0..p {
                    u[1 + 2 * k] = w[k];
                    u[2 + 2 * k] = w[k] * w[k];
                }

                let points = match (cfg.precision, &grid) {
                    (PrecisionTreatment::Fixed(t), _) => {
                        single.taus[0] = t;
                        &single
                    }
                    (PrecisionTreatment::Sampled, _) => {
                        single.taus[0] = tau_sample.expect("sampled precision");
                        &single
                    }
                    (PrecisionTreatment::Grid(_), Some(gp)) => gp,
                    (PrecisionTreatment::Grid(_), None) => unreachable!("grid built above"),
                };

                let variational_tau = cfg.precision.is_variational();
                let (mut h0, mut h1, mut m1, mut m2) = (0.0, [0.0; 2], [0.0; 2], [0.0; 3]);
                for (&tau, &pi) in points.taus.iter().zip(&points.weights) {
                    let mut lj = ll + ln_weight_prior(sq, p, tau);
                    if variational_tau {
                        lj += problem.prior.ln_pdf(tau);
                    }
                    let v = [tau.ln(), tau];
                    h0 += pi * lj;
                    h1[0] += pi * v[0] * lj;
                    h1[1] += pi * v[1] * lj;
                    m1[0] += pi * v[0];
                    m1[1] += pi * v[1];
                    m2[0] += pi * v[0] * v[0];
                    m2[1] += pi * v[0] * v[1];
                    m2[2] += pi * v[1] * v[1];
                }
                if !h0.is_finite() {
                    return Err(Error::Degenerate(
                        "log-joint not finite on the precision grid".into(),
                    ));
                }

                for a in 0..du {
                    g[a] += u[a] * h0;
                    let ua = u[a];
                    let row = &mut c[a * d..a * d + d];
                    for b in a..du {
                        row[b] += ua * u[b];
                    }
                    if variational_tau {
                        row[du] += ua * m1[0];
                        row[du + 1] += ua * m1[1];
                    }
                }
                if variational_tau {
                    g[du] += h1[0];
                    g[du + 1] += h1[1];
                    c[du * d + du] += m2[0];
                    c[du * d + du + 1] += m2[1];
                    c[(du + 1) * d + du + 1] += m2[2];
                }
            }
            Ok((g, c, redraws))
        },
    );

    let mut g = DVector::zeros(d);
    let mut c = DMatrix::zeros(d, d);
    let mut redraws = 0;
    for part in partials {
        let (pg, pc, r) = part?;
        redraws += r;
        for a in 0..d {
            g[a] += pg[a];
            for b in a..d {
                c[(a, b)] += pc[a * d + b];
            }
        }
    }
    let s = cfg.samples as f64;
    g /= s;
    for a in 0..d {
        for b in a..d {
            c[(a, b)] /= s;
            c[(b, a)] = c[(a, b)];
        }
    }
    Ok(GcEstimate { g, c, redraws })
}

/// Smoothed statistics and second-half sums.
#[derive(Debug, Clone)]
pub struct SvbAccumulator {
    pub g: DVector<f64>,
    pub c: DMatrix<f64>,
    pub g_bar: DVector<f64>,
    pub c_bar: DMatrix<f64>,
    pub averaged: usize,
}

impl SvbAccumulator {
    /// `C₁ = I`, `g₁ = C₁η̃₁`, empty averages.
    pub fn new(state: &VariationalState) -> Self {
        let eta = state.stacked();
        let d = eta.len();
        Self {
            g: eta,
            c: DMatrix::identity(d, d),
            g_bar: DVector::zeros(d),
            c_bar: DMatrix::zeros(d, d),
            averaged: 0,
        }
    }

    /// `C̄⁻¹ḡ` from the averaged statistics.
    pub fn averaged_solution(&self) -> Result<(DVector<f64>, bool)> {
        if self.averaged == 0 {
            return Err(Error::Degenerate("no iterations were averaged".into()));
        }
        solve_damped(&self.c_bar, &self.g_bar)
    }
}

/// Solves `C x = g` by Cholesky, adding diagonal damping `δ = 1e-8·tr(C)/d`
/// (growing tenfold per retry) when `C` is not numerically positive definite.
pub fn solve_damped(c: &DMatrix<f64>, g: &DVector<f64>) -> Result<(DVector<f64>, bool)> {
    if let Some(ch) = Cholesky::new(c.clone()) {
        let x = ch.solve(g);
        if x.iter().all(|v| v.is_finite()) {
            return Ok((x, false));
        }
    }
    let d = c.nrows();
    let mut delta = 1e-8 * c.trace().abs().max(f64::MIN_POSITIVE) / d as f64;
    for _ in 0..12 {
        let mut damped = c.clone();
        for k in 0..d {
            damped[(k, k)] += delta;
        }
        if let Some(ch) = Cholesky::new(damped) {
            let x = ch.solve(g);
            if x.iter().all(|v| v.is_finite()) {
                return Ok((x, true));
            }
        }
        delta *= 10.0;
    }
    Err(Error::Singular(
        "variational system stays singular under damping".into(),
    ))
}

/// Events from one iteration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationEvents {
    pub redraws: usize,
    pub damped: bool,
    /// Coordinates whose variance was raised to the floor.
    pub floored: usize,
    /// Coordinates left at their previous value because the solve was not integrable.
    pub retained: usize,
}

/// Converts a solved `η̃` into a sampling state, repairing coordinates that are
/// not integrable by keeping the previous value and flooring tiny variances.
fn feasible_state(
    eta: &DVector<f64>,
    previous: &VariationalState,
    floor: f64,
    events: &mut IterationEvents,
) -> Result<VariationalState> {
    let mut next =
        VariationalState::from_stacked(eta, previous.dim(), previous.precision.is_some())?;
    for (k, e) in next.weights.iter_mut().enumerate() {
        if !(e[1] < 0.0 && e[0].is_finite() && e[1].is_finite()) {
            *e = previous.weights[k];
            events.retained += 1;
            continue;
        }
        let var = -0.5 / e[1];
        if var < floor {
            let mean = -e[0] / (2.0 * e[1]);
            *e = gaussian_naturals(mean, floor);
            events.floored += 1;
        }
    }
    if let (Some(e), Some(prev)) = (next.precision.as_mut(), previous.precision) {
        if !(e[0] > -1.0 && e[1] < 0.0 && e[0].is_finite() && e[1].is_finite()) {
            *e = prev;
            events.retained += 1;
        }
    }
    Ok(next)
}

/// One iteration at index `t` (1-based) of a run with `cfg.iterations` steps.
pub fn svb_iterate<L: Likelihood + ?Sized>(
    state: &VariationalState,
    acc: &mut SvbAccumulator,
    problem: &SvbProblem<'_, L>,
    cfg: &SvbConfig,
    stream: RngStream,
    t: usize,
) -> Result<(VariationalState, IterationEvents)> {
    let est = estimate_g_c(state, problem, cfg, stream.substream(t as u64))?;
    apply_estimate(state, acc, &est, cfg, t)
}

fn apply_estimate(
    state: &VariationalState,
    acc: &mut SvbAccumulator,
    est: &GcEstimate,
    cfg: &SvbConfig,
    t: usize,
) -> Result<(VariationalState, IterationEvents)> {
    let eps = cfg.step;
    acc.g = acc.g.scale(1.0 - eps) + est.g.scale(eps);
    acc.c = acc.c.scale(1.0 - eps) + est.c.scale(eps);
    let mut events = IterationEvents {
        redraws: est.redraws,
        ..Default::default()
    };
    let (eta, damped) = solve_damped(&acc.c, &acc.g)?;
    events.damped = damped;
    if damped {
        log::debug!("svb iteration {t}: damped linear solve");
    }
    if 2 * t > cfg.iterations {
        acc.g_bar += &est.g;
        acc.c_bar += &est.c;
        acc.averaged += 1;
    }
    let next = feasible_state(&eta, state, cfg.variance_floor, &mut events)?;
    Ok((next, events))
}

/// Applies externally supplied `(g, C)` instead of Monte Carlo estimates.
/// Used for deterministic fixed-point checks.
pub fn svb_iterate_exact(
    state: &VariationalState,
    acc: &mut SvbAccumulator,
    g: &DVector<f64>,
    c: &DMatrix<f64>,
    cfg: &SvbConfig,
    t: usize,
) -> Result<(VariationalState, IterationEvents)> {
    let est = GcEstimate {
        g: g.clone(),
        c: c.clone(),
        redraws: 0,
    };
    apply_estimate(state, acc, &est, cfg, t)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SvbDiagnostics {
    pub redraws: usize,
    pub damped_solves: usize,
    pub floored: usize,
    pub retained: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    pub eta: Vec<f64>,
    pub events: IterationEvents,
}

#[derive(Debug, Clone)]
pub struct SvbFit {
    pub state: VariationalState,
    pub diagnostics: SvbDiagnostics,
    pub trace: Vec<TraceRow>,
}

impl SvbFit {
    /// Per-iteration trace: `t, eta_0..eta_{d-1}, redraws, damped, floored, retained`.
    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let d = self.trace.first().map_or(0, |r| r.eta.len());
        let mut header = vec!["t".to_string()];
        header.extend((0..d).map(|k| format!("eta_{k}")));
        header.extend(["redraws", "damped", "floored", "retained"].map(String::from));
        writeln!(out, "{}", header.join(","))?;
        for row in &self.trace {
            let mut cells = vec![row.t.to_string()];
            cells.extend(row.eta.iter().map(|v| format!("{v:?}")));
            cells.push(row.events.redraws.to_string());
            cells.push((row.events.damped as u8).to_string());
            cells.push(row.events.floored.to_string());
            cells.push(row.events.retained.to_string());
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Runs the full iteration and returns the state at `η̂ = C̄⁻¹ḡ`.
pub fn svb_run<L: Likelihood + ?Sized>(
    problem: &SvbProblem<'_, L>,
    cfg: &SvbConfig,
    stream: RngStream,
    init: Option<VariationalState>,
) -> Result<SvbFit> {
    cfg.validate()?;
    let p = problem.likelihood.dim();
    let mut state =
        init.unwrap_or_else(|| VariationalState::standard(p, cfg.precision.is_variational()));
    natural_to_moment(&state)?;
    let mut acc = SvbAccumulator::new(&state);
    let mut diag = SvbDiagnostics::default();
    let mut trace = Vec::new();
    for t in 1..=cfg.iterations {
        let (next, ev) = svb_iterate(&state, &mut acc, problem, cfg, stream, t)?;
        diag.redraws += ev.redraws;
        diag.damped_solves += ev.damped as usize;
        diag.floored += ev.floored;
        diag.retained += ev.retained;
        if cfg.trace {
            trace.push(TraceRow {
                t,
                eta: next.stacked().iter().copied().collect(),
                events: ev,
            });
        }
        state = next;
    }
    if diag.floored + diag.retained > 0 {
        log::info!(
            "svb: {} floored and {} retained coordinates over the run",
            diag.floored,
            diag.retained
        );
    }
    let (eta_hat, damped) = acc.averaged_solution()?;
    diag.damped_solves += damped as usize;
    let fitted = VariationalState::from_stacked(&eta_hat, p, cfg.precision.is_variational())?;
    let issues = fitted.integrability_issues();
    if !issues.is_empty() {
        return Err(Error::NotIntegrable(format!(
            "averaged estimate after {} iterations: {} (diagnostics: {:?})",
            cfg.iterations,
            issues.join("; "),
            diag
        )));
    }
    Ok(SvbFit {
        state: fitted,
        diagnostics: diag,
        trace,
    })
}

/// Predictive probability averaged over `n_draws` variational weight draws.
pub fn svb_predictive(
    state: &VariationalState,
    model: &LogregModel,
    x_star: &nalgebra::DMatrix<f64>,
    n_draws: usize,
    stream: RngStream,
) -> Result<DVector<f64>> {
    ensure(n_draws >= 1, || "need at least one predictive draw".into())?;
    let mut rng = stream.rng();
    let mut acc = DVector::zeros(x_star.nrows());
    for _ in 0..n_draws {
        let (w, tau) = sample_variational(state, &mut rng)?;
        acc += model.predictive_prob(&w, tau.unwrap_or(1.0), x_star)?;
    }
    Ok(acc / n_draws as f64)
}
