use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cone::{nnls, rank_cap, rank_one_generator};
use super::gram::{GramMatrix, H4Report, H4_TOLERANCE};
use super::partition::{enumerate_partitions, Partition};
use crate::error::{Error, Result};
use crate::model::RegressionSpec;
use crate::rng::{derive_seed, mix64, stream_rng};

/// Settings of the per-draw cone maximizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LimitOptions {
    /// Angular grid for one-input direction search.
    pub grid_points: usize,
    pub golden_iters: usize,
    /// Random restarts of the direction search (in addition to the default start).
    pub restarts: usize,
    pub max_sweeps: usize,
    /// Relative improvement below which coordinate sweeps stop.
    pub sweep_tol: f64,
    /// Projected-gradient iterations per slot update when `d > 1`.
    pub pg_iters: usize,
    pub nnls_max_iter: usize,
    /// Retries (each doubling the restarts) before a draw fails the run.
    pub max_retries: usize,
    /// Adds free-unit `φ(wᵀx̃)` columns from the Gram basis to the index set.
    pub extended_index_set: bool,
    /// Grid used to build extra columns when the caller asks for them.
    pub extra_points_per_axis: usize,
    pub extra_radius: f64,
    /// Free-unit coefficients restricted to be non-negative.
    pub positive_amplitudes: bool,
}

impl Default for LimitOptions {
    fn default() -> Self {
        Self {
            grid_points: 64,
            golden_iters: 60,
            restarts: 4,
            max_sweeps: 200,
            sweep_tol: 1e-10,
            pg_iters: 100,
            nnls_max_iter: 500,
            max_retries: 3,
            extended_index_set: false,
            extra_points_per_axis: 7,
            extra_radius: 3.0,
            positive_amplitudes: true,
        }
    }
}

impl LimitOptions {
    pub fn validate(&self) -> Result<()> {
        if self.grid_points < 3 || self.max_sweeps == 0 || self.nnls_max_iter == 0 || !(self.sweep_tol > 0.0) {
            return Err(Error::Config("limit options: grid_points >= 3, max_sweeps, nnls_max_iter >= 1, sweep_tol > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawDiagnostics {
    pub best_partition: Partition,
    /// Restarts used by the winning configuration.
    pub restarts: usize,
    pub retries: usize,
    pub converged: bool,
}

/// Draws of `sup_S max(W_S, 0)²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitSample {
    pub values: Vec<f64>,
    pub k: usize,
    pub k0: usize,
    pub input_dim: usize,
    pub seed: u64,
    pub diagnostics: Vec<DrawDiagnostics>,
}

impl LimitSample {
    pub fn write_csv<W: Write>(&self, mut out: W, comment: Option<&str>) -> Result<()> {
        if let Some(c) = comment {
            writeln!(out, "# {c}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["draw", "value", "best_partition", "restarts", "retries", "converged"])?;
        for (i, (v, d)) in self.values.iter().zip(&self.diagnostics).enumerate() {
            w.write_record([
                i.to_string(),
                v.to_string(),
                d.best_partition.to_string(),
                d.restarts.to_string(),
                d.retries.to_string(),
                d.converged.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Configuration of the index set up to relabelling: quadratic rank cap per
/// true unit and the number of free units.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct ConeKey {
    caps: Vec<usize>,
    free: usize,
}

impl ConeKey {
    fn hash(&self) -> u64 {
        self.caps.iter().fold(mix64(self.free as u64), |h, &c| mix64(h ^ (c as u64 + 1)))
    }

    fn slots(&self) -> usize {
        self.caps.iter().sum()
    }
}

/// Outcome of maximizing over one draw.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawOutcome {
    pub value: f64,
    pub diagnostics: DrawDiagnostics,
}

/// Precomputed whitening of the Gram matrix and the cone configurations for
/// width `k`.
///
/// With `Σ = S Sᵀ` and `g = S ξ`, a coefficient vector `c` maps to `Sᵀc` and
/// the squared truncated Rayleigh quotient becomes the squared length of the
/// projection of `ξ` onto the image cone. The linear span is projected out in
/// closed form, the quadratic generators are handled by non-negative least
/// squares and their directions by search.
pub struct LimitEngine {
    k: usize,
    k0: usize,
    input_dim: usize,
    dim: usize,
    sqrt_sigma: DMatrix<f64>,
    linear_basis: DMatrix<f64>,
    curvature: Vec<DMatrix<f64>>,
    extras: DMatrix<f64>,
    keys: Vec<(ConeKey, Partition)>,
    opt: LimitOptions,
}

struct KeyResult {
    value: f64,
    restarts: usize,
    retries: usize,
    clean: bool,
}

impl LimitEngine {
    pub fn new(spec: &RegressionSpec, k: usize, gram: &GramMatrix, opt: &LimitOptions) -> Result<Self> {
        opt.validate()?;
        let k0 = spec.true_width();
        let d = spec.input_dim;
        if k < k0 {
            return Err(Error::Config(format!("k = {k} is below the true width {k0}")));
        }
        let basis = &gram.basis;
        if basis.k0 != k0 || basis.input_dim != d {
            return Err(Error::Config("Gram basis does not match the regression spec".into()));
        }
        let core = basis.core_dim();
        let core_gram = gram.x_gram.view((0, 0), (core, core)).into_owned();
        if !H4Report::from_matrix(&core_gram, H4_TOLERANCE).pass {
            return Err(Error::Limit("Gram matrix fails the linear-independence check".into()));
        }
        if opt.extended_index_set && basis.extra_weights.is_empty() {
            return Err(Error::Config("extended index set requested but the Gram basis has no extra columns".into()));
        }

        let p = gram.dim();
        let eig = SymmetricEigen::new(gram.sigma.clone());
        let root = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
        let sqrt_sigma = &eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose();

        let lin = basis.linear_indices();
        let lin_img = sqrt_sigma.select_columns(&lin);
        let svd = lin_img.svd(true, false);
        let u = svd.u.expect("left singular vectors");
        let smax = svd.singular_values.max();
        let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > 1e-10 * smax).collect();
        let linear_basis = u.select_columns(&keep);

        let residualize = |m: DMatrix<f64>| -> DMatrix<f64> {
            let proj = &linear_basis * (linear_basis.transpose() * &m);
            m - proj
        };
        let curvature = (0..k0)
            .map(|i| {
                let sign = if spec.theta0.units[i].a >= 0.0 { 1.0 } else { -1.0 };
                residualize(sqrt_sigma.select_columns(&basis.curvature_indices(i)) * sign)
            })
            .collect();
        let extras = if opt.extended_index_set {
            let idx: Vec<usize> = (core..p).collect();
            let e = residualize(sqrt_sigma.select_columns(&idx));
            if opt.positive_amplitudes {
                e
            } else {
                let mut both = DMatrix::zeros(p, 2 * e.ncols());
                both.columns_mut(0, e.ncols()).copy_from(&e);
                both.columns_mut(e.ncols(), e.ncols()).copy_from(&(-&e));
                both
            }
        } else {
            DMatrix::zeros(p, 0)
        };

        let mut keys: Vec<(ConeKey, Partition)> = Vec::new();
        for part in enumerate_partitions(k, k0)? {
            let caps = part.group_sizes().into_iter().map(|m| rank_cap(m, d)).collect();
            let free = if opt.extended_index_set { k - part.used_units() } else { 0 };
            let key = ConeKey { caps, free };
            if !keys.iter().any(|(kk, _)| *kk == key) {
                keys.push((key, part));
            }
        }
        Ok(Self { k, k0, input_dim: d, dim: p, sqrt_sigma, linear_basis, curvature, extras, keys, opt: opt.clone() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Symmetric square root of `Σ`.
    pub fn sqrt_sigma(&self) -> &DMatrix<f64> {
        &self.sqrt_sigma
    }

    /// Standard-normal vector `ξ` of draw `draw`; the Gaussian process value
    /// vector is `g = S ξ`.
    pub fn standard_draw(&self, seed: u64, draw: u64) -> DVector<f64> {
        let mut rng = stream_rng(seed, draw);
        DVector::from_fn(self.dim, |_, _| rng.sample(StandardNormal))
    }

    pub fn gaussian_draw(&self, seed: u64, draw: u64) -> DVector<f64> {
        &self.sqrt_sigma * self.standard_draw(seed, draw)
    }

    /// Supremum for draw `draw` under key `seed`.
    pub fn evaluate(&self, seed: u64, draw: u64) -> Result<DrawOutcome> {
        let xi = self.standard_draw(seed, draw);
        let proj = self.linear_basis.transpose() * &xi;
        let linear_value = proj.norm_squared();
        let resid = &xi - &self.linear_basis * proj;

        let mut best: Option<(f64, usize, KeyResult)> = None;
        let mut clean = true;
        for (idx, (key, _)) in self.keys.iter().enumerate() {
            let r = self.maximize_key(key, &resid, seed, draw)?;
            clean &= r.clean;
            if best.as_ref().is_none_or(|(v, _, _)| r.value > *v) {
                best = Some((r.value, idx, r));
            }
        }
        let (cone_value, idx, r) = best.expect("at least one partition");
        Ok(DrawOutcome {
            value: linear_value + cone_value,
            diagnostics: DrawDiagnostics {
                best_partition: self.keys[idx].1.clone(),
                restarts: r.restarts,
                retries: r.retries,
                converged: clean,
            },
        })
    }

    fn maximize_key(&self, key: &ConeKey, resid: &DVector<f64>, seed: u64, draw: u64) -> Result<KeyResult> {
        if key.slots() == 0 && key.free == 0 {
            return Ok(KeyResult { value: 0.0, restarts: 0, retries: 0, clean: true });
        }
        let mut rng = stream_rng(derive_seed(seed, key.hash()), draw);
        let mut restarts = self.opt.restarts;
        let mut last_err = String::new();
        for retry in 0..=self.opt.max_retries {
            match self.search(key, resid, restarts, &mut rng) {
                Ok((value, clean)) => return Ok(KeyResult { value, restarts, retries: retry, clean }),
                Err(e) => last_err = e,
            }
            restarts = 2 * restarts.max(1);
        }
        Err(Error::Limit(format!("draw {draw}: {last_err}")))
    }

    /// Best cone value over slot directions and whether every start converged;
    /// `Err` when none did.
    fn search(
        &self,
        key: &ConeKey,
        resid: &DVector<f64>,
        restarts: usize,
        rng: &mut ChaCha8Rng,
    ) -> std::result::Result<(f64, bool), String> {
        let d1 = self.input_dim + 1;
        let slots: Vec<usize> = key.caps.iter().enumerate().flat_map(|(i, &c)| std::iter::repeat_n(i, c)).collect();
        if slots.is_empty() {
            return self
                .objective(key, &slots, &[], resid)
                .map(|v| (v, true))
                .ok_or_else(|| "NNLS did not converge".to_string());
        }
        let exhaustive = d1 == 2 && slots.len() == 1;
        let starts = if exhaustive { 1 } else { 1 + restarts };
        let mut best: Option<f64> = None;
        let mut failures = 0;
        for s in 0..starts {
            let mut dirs: Vec<Vec<f64>> = if s == 0 {
                slots.iter().enumerate().map(|(r, _)| default_direction(d1, r, slots.len())).collect()
            } else {
                slots.iter().map(|_| random_direction(d1, rng)).collect()
            };
            match self.coordinate_ascent(key, &slots, &mut dirs, resid, rng) {
                Some(v) => best = Some(best.map_or(v, |b: f64| b.max(v))),
                None => failures += 1,
            }
        }
        best.map(|v| (v, failures == 0)).ok_or_else(|| format!("direction search failed in all {starts} starts"))
    }

    fn coordinate_ascent(
        &self,
        key: &ConeKey,
        slots: &[usize],
        dirs: &mut [Vec<f64>],
        resid: &DVector<f64>,
        rng: &mut ChaCha8Rng,
    ) -> Option<f64> {
        let mut value = self.objective(key, slots, dirs, resid)?;
        for _ in 0..self.opt.max_sweeps {
            let before = value;
            for r in 0..slots.len() {
                value = if self.input_dim == 1 {
                    self.angle_search(key, slots, dirs, r, resid, value)?
                } else {
                    self.sphere_search(key, slots, dirs, r, resid, value, rng)?
                };
            }
            if value - before <= self.opt.sweep_tol * value.max(1.0) {
                return Some(value);
            }
        }
        None
    }

    /// Grid over `[0, π)` followed by golden-section refinement around the
    /// best grid angle. Keeps the current direction unless something beats it.
    fn angle_search(
        &self,
        key: &ConeKey,
        slots: &[usize],
        dirs: &mut [Vec<f64>],
        r: usize,
        resid: &DVector<f64>,
        current: f64,
    ) -> Option<f64> {
        let n = self.opt.grid_points;
        let step = std::f64::consts::PI / n as f64;
        let mut trial = dirs.to_vec();
        let mut eval = |theta: f64| -> Option<f64> {
            trial[r] = vec![theta.cos(), theta.sin()];
            self.objective(key, slots, &trial, resid)
        };
        let mut grid_best = (f64::NEG_INFINITY, 0.0);
        for j in 0..n {
            let theta = j as f64 * step;
            let v = eval(theta)?;
            if v > grid_best.0 {
                grid_best = (v, theta);
            }
        }
        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        let (mut lo, mut hi) = (grid_best.1 - step, grid_best.1 + step);
        let mut x1 = hi - inv_phi * (hi - lo);
        let mut x2 = lo + inv_phi * (hi - lo);
        let mut f1 = eval(x1)?;
        let mut f2 = eval(x2)?;
        for _ in 0..self.opt.golden_iters {
            if f1 >= f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - inv_phi * (hi - lo);
                f1 = eval(x1)?;
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + inv_phi * (hi - lo);
                f2 = eval(x2)?;
            }
        }
        let candidates = [grid_best, (f1, x1), (f2, x2)];
        let (v, theta) = candidates.into_iter().fold((f64::NEG_INFINITY, 0.0), |a, b| if b.0 > a.0 { b } else { a });
        if v > current {
            dirs[r] = vec![theta.cos(), theta.sin()];
            Some(v)
        } else {
            Some(current)
        }
    }

    /// Projected gradient ascent on the unit sphere with a numerical gradient
    /// and backtracking.
    #[allow(clippy::too_many_arguments)]
    fn sphere_search(
        &self,
        key: &ConeKey,
        slots: &[usize],
        dirs: &mut [Vec<f64>],
        r: usize,
        resid: &DVector<f64>,
        current: f64,
        _rng: &mut ChaCha8Rng,
    ) -> Option<f64> {
        let d1 = self.input_dim + 1;
        let mut value = current;
        let mut trial = dirs.to_vec();
        let mut step = 0.5;
        for _ in 0..self.opt.pg_iters {
            let u = dirs[r].clone();
            let h = 1e-6;
            let mut grad = vec![0.0; d1];
            for l in 0..d1 {
                let mut up = u.clone();
                up[l] += h;
                let mut dn = u.clone();
                dn[l] -= h;
                trial[r] = normalized(&up);
                let fu = self.objective(key, slots, &trial, resid)?;
                trial[r] = normalized(&dn);
                let fd = self.objective(key, slots, &trial, resid)?;
                grad[l] = (fu - fd) / (2.0 * h);
            }
            let radial: f64 = grad.iter().zip(&u).map(|(g, u)| g * u).sum();
            let tangent: Vec<f64> = grad.iter().zip(&u).map(|(g, u)| g - radial * u).collect();
            let tnorm = tangent.iter().map(|v| v * v).sum::<f64>().sqrt();
            if tnorm < 1e-12 {
                break;
            }
            let mut improved = false;
            while step > 1e-10 {
                let cand: Vec<f64> = u.iter().zip(&tangent).map(|(u, t)| u + step * t / tnorm).collect();
                trial[r] = normalized(&cand);
                let v = self.objective(key, slots, &trial, resid)?;
                if v > value {
                    value = v;
                    dirs[r] = trial[r].clone();
                    improved = true;
                    step *= 2.0;
                    break;
                }
                step *= 0.5;
            }
            trial[r] = dirs[r].clone();
            if !improved {
                break;
            }
        }
        Some(value)
    }

    /// Squared length of the projection of the residualized draw onto the cone
    /// spanned by the slot generators and (greedily chosen) free-unit columns.
    fn objective(&self, key: &ConeKey, slots: &[usize], dirs: &[Vec<f64>], resid: &DVector<f64>) -> Option<f64> {
        let mut cols: Vec<DVector<f64>> = slots
            .iter()
            .zip(dirs)
            .map(|(&i, u)| &self.curvature[i] * DVector::from_vec(rank_one_generator(u)))
            .collect();
        let mut value = self.cone_projection(&cols, resid)?;
        for _ in 0..key.free {
            let mut best: Option<(f64, usize)> = None;
            for j in 0..self.extras.ncols() {
                cols.push(self.extras.column(j).into_owned());
                let v = self.cone_projection(&cols, resid)?;
                cols.pop();
                if best.is_none_or(|(b, _)| v > b) {
                    best = Some((v, j));
                }
            }
            let (v, j) = best?;
            cols.push(self.extras.column(j).into_owned());
            value = v;
        }
        Some(value)
    }

    fn cone_projection(&self, cols: &[DVector<f64>], resid: &DVector<f64>) -> Option<f64> {
        if cols.is_empty() {
            return Some(0.0);
        }
        let a = DMatrix::from_columns(cols);
        let sol = nnls(&a, resid, self.opt.nnls_max_iter);
        if !sol.converged {
            return None;
        }
        Some((&a * &sol.x).norm_squared())
    }
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

fn default_direction(d1: usize, r: usize, count: usize) -> Vec<f64> {
    if d1 == 2 {
        let theta = (r as f64 + 0.5) * std::f64::consts::PI / count as f64;
        vec![theta.cos(), theta.sin()]
    } else {
        let mut u = vec![0.0; d1];
        u[r % d1] = 1.0;
        u
    }
}

fn random_direction(d1: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d1).map(|_| rng.sample(StandardNormal)).collect();
        if v.iter().map(|x| x * x).sum::<f64>() > 1e-12 {
            return normalized(&v);
        }
    }
}

/// `n_draws` independent draws of the limiting law of `2λ` at width `k`.
pub fn simulate_limit(
    spec: &RegressionSpec,
    k: usize,
    gram: &GramMatrix,
    n_draws: usize,
    seed: u64,
    opt: &LimitOptions,
) -> Result<LimitSample> {
    let engine = LimitEngine::new(spec, k, gram, opt)?;
    let outcomes: Vec<Result<DrawOutcome>> =
        (0..n_draws as u64).into_par_iter().map(|i| engine.evaluate(seed, i)).collect();
    let mut values = Vec::with_capacity(n_draws);
    let mut diagnostics = Vec::with_capacity(n_draws);
    for o in outcomes {
        let o = o?;
        values.push(o.value);
        diagnostics.push(o.diagnostics);
    }
    Ok(LimitSample { values, k: engine.k, k0: engine.k0, input_dim: engine.input_dim, seed, diagnostics })
}
