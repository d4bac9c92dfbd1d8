//! Constrained maximum likelihood over `Θ_k` by multi-start projected
//! quasi-Newton optimization.

mod objective;
mod optimizer;

pub use objective::{negative_loglik, negative_loglik_and_grad};
pub use optimizer::{optimize_from, LocalRun};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::conditional_loglik;
use crate::model::{check_constraints, ConstraintBox, Dataset, HiddenUnit, MlpParams};
use crate::rng::{derive_seed, stream_rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub n_starts: usize,
    pub max_iters: usize,
    /// Sup-norm of the projected gradient of `−loglik` declaring convergence.
    pub grad_tol: f64,
    pub step_tol: f64,
    pub seed: u64,
    /// Norm of the random initial weight vectors.
    pub init_scale: f64,
    /// Extra starting points; only those with `k` units are used by a width-`k` fit.
    pub warm_starts: Vec<MlpParams>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            n_starts: 20,
            max_iters: 2000,
            grad_tol: 1e-4,
            step_tol: 1e-12,
            seed: 0,
            init_scale: 2.0,
            warm_starts: Vec::new(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_starts == 0 {
            return Err(Error::Config("n_starts must be >= 1".into()));
        }
        if !(self.grad_tol > 0.0 && self.step_tol > 0.0 && self.init_scale > 0.0) || self.max_iters == 0 {
            return Err(Error::Config("grad_tol, step_tol, init_scale and max_iters must be positive".into()));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_warm_starts(mut self, warm: Vec<MlpParams>) -> Self {
        self.warm_starts = warm;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartKind {
    Warm,
    Random,
}

/// Per-start trace summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartSummary {
    pub index: usize,
    pub kind: StartKind,
    pub start_loglik: f64,
    pub loglik: f64,
    pub iterations: usize,
    pub projected_gradient: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub theta_hat: MlpParams,
    pub loglik: f64,
    pub converged: bool,
    pub n_starts_used: usize,
    pub per_start_logliks: Vec<f64>,
    pub starts: Vec<StartSummary>,
}

/// Random start: `β` at the sample mean, amplitudes uniform on `[η, 1]`
/// (random sign when amplitudes are unrestricted) and weight vectors of norm
/// `init_scale` in a uniform direction.
pub fn random_start(data: &Dataset, k: usize, bx: &ConstraintBox, init_scale: f64, rng: &mut ChaCha8Rng) -> MlpParams {
    let units = (0..k)
        .map(|_| {
            let mut a = rng.random_range(bx.eta..=bx.eta.max(1.0));
            if !bx.positive_amplitudes && rng.random::<bool>() {
                a = -a;
            }
            HiddenUnit::new(a, random_direction(data.input_dim + 1, init_scale, rng))
        })
        .collect();
    MlpParams { beta: data.mean_y(), units }
}

fn random_direction(len: usize, scale: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-8 {
            return v.into_iter().map(|x| scale * x / n).collect();
        }
    }
}

/// Best feasible local maximizer of the log-likelihood over `Θ_k` across warm
/// starts (first) and `n_starts` random starts. Ties go to the lowest index.
pub fn fit_mle(data: &Dataset, k: usize, bx: &ConstraintBox, config: &FitConfig) -> Result<FitResult> {
    if k == 0 {
        return Err(Error::Config("k must be >= 1".into()));
    }
    config.validate()?;
    bx.validate()?;
    if !bx.is_consistent_for(k) {
        return Err(Error::Infeasible(format!("constraint box admits no point with k={k}")));
    }
    if data.is_empty() {
        return Err(Error::Config("empty dataset".into()));
    }
    let d = data.input_dim;
    let mut starts: Vec<(StartKind, MlpParams)> = config
        .warm_starts
        .iter()
        .filter(|w| w.k() == k && w.input_dim() == d)
        .map(|w| (StartKind::Warm, w.clone()))
        .collect();
    for s in 0..config.n_starts {
        let mut rng = stream_rng(config.seed, s as u64);
        starts.push((StartKind::Random, random_start(data, k, bx, config.init_scale, &mut rng)));
    }

    let runs: Vec<Result<LocalRun>> = starts
        .par_iter()
        .map(|(_, s)| optimize_from(s, data, bx, config.max_iters, config.grad_tol, config.step_tol))
        .collect();
    let mut best: Option<(usize, LocalRun)> = None;
    let mut summaries = Vec::with_capacity(runs.len());
    let mut any_converged = false;
    for (index, (run, (kind, _))) in runs.into_iter().zip(&starts).enumerate() {
        let run = run?;
        any_converged |= run.converged;
        summaries.push(StartSummary {
            index,
            kind: *kind,
            start_loglik: run.trace[0],
            loglik: run.loglik,
            iterations: run.iterations,
            projected_gradient: run.projected_gradient,
            converged: run.converged,
        });
        if best.as_ref().is_none_or(|(_, b)| run.loglik > b.loglik) {
            best = Some((index, run));
        }
    }
    let (_, run) = best.expect("at least one start");
    debug_assert!(check_constraints(&run.theta, bx).feasible);
    let loglik = conditional_loglik(&run.theta, data)?;
    Ok(FitResult {
        theta_hat: run.theta,
        loglik,
        converged: any_converged,
        n_starts_used: summaries.len(),
        per_start_logliks: summaries.iter().map(|s| s.loglik).collect(),
        starts: summaries,
    })
}

/// Width `k + 1` parameters computing the same function as `theta`: the unit
/// with the largest amplitude is split into two copies sharing it.
pub fn split_largest_unit(theta: &MlpParams) -> MlpParams {
    let j = (0..theta.k())
        .max_by(|&a, &b| theta.units[a].a.abs().total_cmp(&theta.units[b].a.abs()).then(b.cmp(&a)))
        .expect("at least one unit");
    let mut p = theta.clone();
    let half = p.units[j].a / 2.0;
    p.units[j].a = half;
    let copy = p.units[j].clone();
    p.units.insert(j + 1, copy);
    p
}

/// `theta` plus one unit with amplitude `η` and a random weight direction.
pub fn add_small_unit(theta: &MlpParams, bx: &ConstraintBox, init_scale: f64, rng: &mut ChaCha8Rng) -> MlpParams {
    let mut p = theta.clone();
    let w = random_direction(theta.input_dim() + 1, init_scale, rng);
    p.units.push(HiddenUnit::new(bx.eta, w));
    p
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileEntry {
    pub k: usize,
    pub sup_loglik: f64,
    pub fit: FitResult,
}

/// `fit_mle` for `k = 1..=k_max`; each width also starts from the best fit of
/// the previous width, embedded both by an exact unit split and by adding a
/// unit of amplitude `η`.
pub fn profile_lr_curve(data: &Dataset, k_max: usize, bx: &ConstraintBox, config: &FitConfig) -> Result<Vec<ProfileEntry>> {
    if k_max == 0 {
        return Err(Error::Config("k_max must be >= 1".into()));
    }
    let mut out: Vec<ProfileEntry> = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let mut cfg = config.clone();
        cfg.seed = derive_seed(config.seed, k as u64);
        if let Some(prev) = out.last() {
            let mut rng = stream_rng(derive_seed(config.seed, 1 << 32 | k as u64), 0);
            cfg.warm_starts.push(split_largest_unit(&prev.fit.theta_hat));
            cfg.warm_starts.push(add_small_unit(&prev.fit.theta_hat, bx, config.init_scale, &mut rng));
        }
        let fit = fit_mle(data, k, bx, &cfg)?;
        out.push(ProfileEntry { k, sup_loglik: fit.loglik, fit });
    }
    Ok(out)
}
