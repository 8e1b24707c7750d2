//! Hamiltonian Monte Carlo on the weights with a random-walk Metropolis step on
//! the precision.
//!
//! One sweep is an HMC proposal for `w` at fixed `σ⁻²` (full momentum refresh,
//! diagonal mass) followed by a Gaussian random-walk proposal for `σ⁻²`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::logreg::{LogregModel, WeightConditional};
use crate::rng::RngStream;

/// Differentiable log density over a real vector.
pub trait Target {
    fn dim(&self) -> usize;

    /// Returns `log π(w)` and writes `∇ log π(w)` into `grad`.
    fn log_density_and_grad(&self, w: &[f64], grad: &mut [f64]) -> f64;
}

/// Step-size fallback applied during burn-in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepFallback {
    /// Iterations per acceptance check.
    pub window: usize,
    /// Halve the step when window acceptance falls below this.
    pub min_accept: f64,
}

impl Default for StepFallback {
    fn default() -> Self {
        Self {
            window: 50,
            min_accept: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmcConfig {
    pub leapfrog_steps: usize,
    pub step_size: f64,
    /// Diagonal mass; empty means identity.
    pub mass: Vec<f64>,
    pub iterations: usize,
    pub burnin: usize,
    pub mh_proposal_sd: f64,
    pub fallback: Option<StepFallback>,
}

impl HmcConfig {
    /// 25 000 iterations with 5 000 burn-in, `L = 20`, step 0.8, proposal variance 0.1.
    pub fn paper() -> Self {
        Self {
            leapfrog_steps: 20,
            step_size: 0.8,
            mass: Vec::new(),
            iterations: 25_000,
            burnin: 5_000,
            mh_proposal_sd: 0.1f64.sqrt(),
            fallback: Some(StepFallback::default()),
        }
    }

    /// Same integrator settings with 5 000 iterations and 1 000 burn-in.
    pub fn desk() -> Self {
        Self {
            iterations: 5_000,
            burnin: 1_000,
            ..Self::paper()
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.leapfrog_steps >= 1, || {
            "leapfrog steps must be >= 1".into()
        })?;
        ensure(self.step_size > 0.0, || "step size must be positive".into())?;
        ensure(self.iterations > self.burnin, || {
            "iterations must exceed burn-in".into()
        })?;
        ensure(self.mh_proposal_sd > 0.0, || {
            "precision proposal sd must be positive".into()
        })?;
        ensure(self.mass.iter().all(|&m| m > 0.0), || {
            "mass entries must be positive".into()
        })?;
        Ok(())
    }
}

/// End point of a leapfrog trajectory together with the density there.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub position: Vec<f64>,
    pub momentum: Vec<f64>,
    pub log_density: f64,
    pub grad: Vec<f64>,
}

/// The trajectory hit a non-finite density or gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Divergence;

/// Integrates Hamiltonian dynamics with `steps` leapfrog steps.
pub fn leapfrog<T: Target + ?Sized>(
    target: &T,
    w0: &[f64],
    momentum0: &[f64],
    steps: usize,
    step: f64,
    mass: &[f64],
) -> std::result::Result<Trajectory, Divergence> {
    let mut grad = vec![0.0; w0.len()];
    let lp = target.log_density_and_grad(w0, &mut grad);
    if !lp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Divergence);
    }
    leapfrog_from(target, w0, momentum0, grad, steps, step, mass)
}

fn leapfrog_from<T: Target + ?Sized>(
    target: &T,
    w0: &[f64],
    momentum0: &[f64],
    mut grad: Vec<f64>,
    steps: usize,
    step: f64,
    mass: &[f64],
) -> std::result::Result<Trajectory, Divergence> {
    let inv_mass = |k: usize| 1.0 / mass.get(k).copied().unwrap_or(1.0);
    let mut w = w0.to_vec();
    let mut r = momentum0.to_vec();
    let mut lp = f64::NAN;
    for _ in 0..steps {
        for (rk, gk) in r.iter_mut().zip(&grad) {
            *rk += 0.5 * step * gk;
        }
        for (k, (wk, rk)) in w.iter_mut().zip(&r).enumerate() {
            *wk += step * rk * inv_mass(k);
        }
        lp = target.log_density_and_grad(&w, &mut grad);
        if !lp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Divergence);
        }
        for (rk, gk) in r.iter_mut().zip(&grad) {
            *rk += 0.5 * step * gk;
        }
    }
    if steps == 0 {
        lp = target.log_density_and_grad(&w, &mut grad);
    }
    Ok(Trajectory {
        position: w,
        momentum: r,
        log_density: lp,
        grad,
    })
}

fn kinetic(r: &[f64], mass: &[f64]) -> f64 {
    r.iter()
        .enumerate()
        .map(|(k, rk)| 0.5 * rk * rk / mass.get(k).copied().unwrap_or(1.0))
        .sum()
}

/// Position with cached density and gradient.
#[derive(Debug, Clone)]
pub struct HmcState {
    pub position: Vec<f64>,
    pub log_density: f64,
    pub grad: Vec<f64>,
}

impl HmcState {
    pub fn new<T: Target + ?Sized>(target: &T, position: Vec<f64>) -> Self {
        let mut grad = vec![0.0; position.len()];
        let log_density = target.log_density_and_grad(&position, &mut grad);
        Self {
            position,
            log_density,
            grad,
        }
    }
}

/// One HMC transition on a generic target. Returns whether the proposal was accepted.
pub fn hmc_transition<T: Target + ?Sized, R: Rng + ?Sized>(
    target: &T,
    state: &mut HmcState,
    steps: usize,
    step: f64,
    mass: &[f64],
    rng: &mut R,
) -> bool {
    let d = state.position.len();
    let r0: Vec<f64> = (0..d)
        .map(|k| rng.sample::<f64, _>(StandardNormal) * mass.get(k).copied().unwrap_or(1.0).sqrt())
        .collect();
    let h0 = -state.log_density + kinetic(&r0, mass);
    let u: f64 = rng.random();
    let Ok(traj) = leapfrog_from(
        target,
        &state.position,
        &r0,
        state.grad.clone(),
        steps,
        step,
        mass,
    ) else {
        return false;
    };
    let h1 = -traj.log_density + kinetic(&traj.momentum, mass);
    if (h0 - h1).is_finite() && u.ln() < h0 - h1 {
        state.position = traj.position;
        state.log_density = traj.log_density;
        state.grad = traj.grad;
        true
    } else {
        false
    }
}

/// Joint state of the logistic sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct LogregState {
    pub w: Vec<f64>,
    pub precision: f64,
}

impl LogregState {
    pub fn initial(p: usize) -> Self {
        Self {
            w: vec![0.0; p],
            precision: 1.0,
        }
    }
}

/// HMC update of the weights at fixed precision.
pub fn hmc_update<R: Rng + ?Sized>(
    model: &LogregModel,
    state: &LogregState,
    cfg: &HmcConfig,
    rng: &mut R,
) -> (LogregState, bool) {
    let target = WeightConditional {
        model,
        tau: state.precision,
    };
    let mut hs = HmcState::new(&target, state.w.clone());
    let accepted = hmc_transition(
        &target,
        &mut hs,
        cfg.leapfrog_steps,
        cfg.step_size,
        &cfg.mass,
        rng,
    );
    (
        LogregState {
            w: hs.position,
            precision: state.precision,
        },
        accepted,
    )
}

/// Random-walk Metropolis update of the precision; non-positive proposals are rejected.
pub fn mh_precision_update<R: Rng + ?Sized>(
    model: &LogregModel,
    state: &LogregState,
    cfg: &HmcConfig,
    rng: &mut R,
) -> (LogregState, bool) {
    let proposal = state.precision + cfg.mh_proposal_sd * rng.sample::<f64, _>(StandardNormal);
    let u: f64 = rng.random();
    if proposal <= 0.0 {
        return (state.clone(), false);
    }
    let sq: f64 = state.w.iter().map(|v| v * v).sum();
    let log_ratio = model.ln_prior(sq, proposal) - model.ln_prior(sq, state.precision);
    if u.ln() < log_ratio {
        (
            LogregState {
                w: state.w.clone(),
                precision: proposal,
            },
            true,
        )
    } else {
        (state.clone(), false)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub w: Vec<f64>,
    pub precision: f64,
}

/// Post-burn-in draws with acceptance statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub samples: Vec<Sample>,
    pub accept_rate_hmc: f64,
    pub accept_rate_mh: f64,
    /// Step size used after burn-in.
    pub step_size: f64,
    pub step_halvings: usize,
}

impl Chain {
    /// One line per sample: `w_1,...,w_p,precision`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        for s in &self.samples {
            let mut line = String::new();
            for v in s.w.iter().chain(std::iter::once(&s.precision)) {
                if !line.is_empty() {
                    line.push(',');
                }
                line.push_str(&format!("{v:?}"));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Runs alternating HMC/MH sweeps and keeps the post-burn-in draws.
///
/// During burn-in the acceptance rate is checked every `fallback.window`
/// iterations and the step is halved whenever it is below `fallback.min_accept`.
/// The step is frozen once burn-in ends.
pub fn run_chain(
    model: &LogregModel,
    cfg: &HmcConfig,
    stream: RngStream,
    init: Option<LogregState>,
) -> Result<Chain> {
    cfg.validate()?;
    let mut state = init.unwrap_or_else(|| LogregState::initial(model.p()));
    if state.w.len() != model.p() {
        return Err(Error::DimensionMismatch {
            expected: model.p(),
            found: state.w.len(),
        });
    }
    ensure(state.precision > 0.0, || {
        "initial precision must be positive".into()
    })?;

    let mut rng = stream.rng();
    let mut step = cfg.step_size;
    let mut halvings = 0;
    let mut window_accepts = 0usize;
    let mut window_len = 0usize;
    let (mut acc_hmc, mut acc_mh) = (0usize, 0usize);
    let kept = cfg.iterations - cfg.burnin;
    let mut samples = Vec::with_capacity(kept);

    for it in 0..cfg.iterations {
        let target = WeightConditional {
            model,
            tau: state.precision,
        };
        let mut hs = HmcState::new(&target, std::mem::take(&mut state.w));
        let a = hmc_transition(
            &target,
            &mut hs,
            cfg.leapfrog_steps,
            step,
            &cfg.mass,
            &mut rng,
        );
        state.w = hs.position;
        let (next, b) = mh_precision_update(model, &state, cfg, &mut rng);
        state = next;

        if it < cfg.burnin {
            if let Some(fb) = cfg.fallback {
                window_accepts += a as usize;
                window_len += 1;
                if window_len == fb.window {
                    if (window_accepts as f64) < fb.min_accept * fb.window as f64 {
                        step *= 0.5;
                        halvings += 1;
                        log::debug!(
                            "hmc acceptance {window_accepts}/{} at iteration {it}; step -> {step}",
                            fb.window
                        );
                    }
                    window_accepts = 0;
                    window_len = 0;
                }
            }
        } else {
            acc_hmc += a as usize;
            acc_mh += b as usize;
            samples.push(Sample {
                w: state.w.clone(),
                precision: state.precision,
            });
        }
    }
    if halvings > 0 {
        log::info!("hmc step size reduced {halvings} times to {step}");
    }
    Ok(Chain {
        samples,
        accept_rate_hmc: acc_hmc as f64 / kept as f64,
        accept_rate_mh: acc_mh as f64 / kept as f64,
        step_size: step,
        step_halvings: halvings,
    })
}

/// Posterior-averaged predictive probability per test row.
pub fn chain_predictive(
    chain: &Chain,
    model: &LogregModel,
    x_star: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    if chain.samples.is_empty() {
        return Err(Error::Degenerate("chain has no samples".into()));
    }
    let mut acc = DVector::zeros(x_star.nrows());
    for s in &chain.samples {
        acc += model.predictive_prob(&s.w, s.precision, x_star)?;
    }
    Ok(acc / chain.samples.len() as f64)
}
