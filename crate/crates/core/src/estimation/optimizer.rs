use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::objective::negative_loglik_and_grad;
use crate::error::Result;
use crate::model::{project_to_box, ConstraintBox, Dataset, MlpParams};

const MEMORY: usize = 8;
const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 50;

/// One run of the projected quasi-Newton method from a single start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalRun {
    pub theta: MlpParams,
    /// Log-likelihood at `theta` (accumulated by the optimizer).
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Sup-norm of `θ − P(θ − ∇(−loglik))` at the returned point.
    pub projected_gradient: f64,
    /// Log-likelihood after the start projection and after each accepted step.
    pub trace: Vec<f64>,
}

struct Problem<'a> {
    data: &'a Dataset,
    k: usize,
    bx: &'a ConstraintBox,
}

impl Problem<'_> {
    fn project(&self, flat: &[f64]) -> Result<Vec<f64>> {
        let p = MlpParams::unflatten(flat, self.k, self.data.input_dim)?;
        Ok(project_to_box(&p, self.bx)?.flatten())
    }

    fn eval(&self, flat: &[f64]) -> (f64, Vec<f64>) {
        negative_loglik_and_grad(flat, self.k, self.data)
    }

    fn projected_gradient(&self, x: &[f64], g: &[f64]) -> Result<f64> {
        let stepped: Vec<f64> = x.iter().zip(g).map(|(x, g)| x - g).collect();
        let p = self.project(&stepped)?;
        Ok(x.iter().zip(&p).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

fn two_loop(g: &[f64], mem: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(mem.len());
    for (s, y, rho) in mem.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(q, y)| *q -= a * y);
        alphas.push(a);
    }
    if let Some((s, y, _)) = mem.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in mem.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(q, s)| *q += (a - b) * s);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Projected L-BFGS with Armijo backtracking along the projected path
/// `P(θ + α d)`; falls back to a projected-gradient path when the
/// quasi-Newton path yields no sufficient decrease.
pub fn optimize_from(
    start: &MlpParams,
    data: &Dataset,
    bx: &ConstraintBox,
    max_iters: usize,
    grad_tol: f64,
    step_tol: f64,
) -> Result<LocalRun> {
    let k = start.k();
    let prob = Problem { data, k, bx };
    let mut x = prob.project(&start.flatten())?;
    let (mut f, mut g) = prob.eval(&x);
    let mut trace = vec![-f];
    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut pg = prob.projected_gradient(&x, &g)?;
    let mut iterations = 0;

    while iterations < max_iters && pg > grad_tol {
        iterations += 1;
        let mut dir = two_loop(&g, &mem);
        if dot(&dir, &g) >= 0.0 {
            mem.clear();
            dir = g.iter().map(|v| -v).collect();
        }
        let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let first = if mem.is_empty() { (1.0 / gmax.max(1e-300)).min(1.0) } else { 1.0 };
        let mut accepted = line_search(&prob, &x, f, &g, &dir, first)?;
        if accepted.is_none() {
            mem.clear();
            let steepest: Vec<f64> = g.iter().map(|v| -v).collect();
            accepted = line_search(&prob, &x, f, &g, &steepest, (1.0 / gmax.max(1e-300)).min(1.0))?;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            break;
        };
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if mem.len() == MEMORY {
                mem.pop_front();
            }
            mem.push_back((s.clone(), y, 1.0 / sy));
        }
        let xmax = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let smax = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let df = f - f_new;
        x = x_new;
        f = f_new;
        g = g_new;
        trace.push(-f);
        pg = prob.projected_gradient(&x, &g)?;
        if smax <= step_tol * (1.0 + xmax) && df <= step_tol * (1.0 + f.abs()) {
            if mem.is_empty() {
                break;
            }
            // a negligible quasi-Newton step: retry from the steepest-descent path
            mem.clear();
        }
    }
    let theta = MlpParams::unflatten(&x, k, data.input_dim)?;
    Ok(LocalRun { theta, loglik: -f, converged: pg <= grad_tol, iterations, projected_gradient: pg, trace })
}

type Step = (Vec<f64>, f64, Vec<f64>);

fn line_search(prob: &Problem, x: &[f64], f: f64, g: &[f64], dir: &[f64], first: f64) -> Result<Option<Step>> {
    let mut alpha = first;
    for _ in 0..MAX_BACKTRACKS {
        let trial: Vec<f64> = x.iter().zip(dir).map(|(x, d)| x + alpha * d).collect();
        let cand = prob.project(&trial)?;
        let moved: Vec<f64> = cand.iter().zip(x).map(|(a, b)| a - b).collect();
        let decrease = dot(g, &moved);
        if decrease < 0.0 {
            let (fc, gc) = prob.eval(&cand);
            if fc <= f + ARMIJO * decrease {
                return Ok(Some((cand, fc, gc)));
            }
        }
        alpha *= 0.5;
    }
    Ok(None)
}
