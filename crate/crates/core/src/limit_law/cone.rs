use nalgebra::{DMatrix, DVector};

use super::basis::ScoreBasis;
use super::gram::GramMatrix;
use super::partition::Partition;
use crate::error::{Error, Result};

/// Outcome of a non-negative least-squares solve.
#[derive(Debug, Clone, PartialEq)]
pub struct NnlsSolution {
    pub x: DVector<f64>,
    pub residual_norm: f64,
    pub converged: bool,
}

/// Lawson–Hanson active-set solver for `min ‖A x − b‖` subject to `x ≥ 0`.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>, max_iter: usize) -> NnlsSolution {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    if n == 0 {
        return NnlsSolution { residual_norm: b.norm(), x, converged: true };
    }
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let tol = 1e-12 * scale * scale * (a.nrows().max(n) as f64) * b.norm().max(1e-300);
    let mut passive = vec![false; n];
    let mut converged = false;
    let mut iters = 0;

    let solve_passive = |passive: &[bool]| -> DVector<f64> {
        let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
        let sub = a.select_columns(&idx);
        let z = sub.clone().svd(true, true).solve(b, 1e-14).unwrap_or_else(|_| DVector::zeros(idx.len()));
        let mut full = DVector::zeros(n);
        for (t, &j) in idx.iter().enumerate() {
            full[j] = z[t];
        }
        full
    };

    'outer: while iters < max_iter {
        let w = a.transpose() * (b - a * &x);
        let next = (0..n).filter(|&j| !passive[j] && w[j] > tol).max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = next else {
            converged = true;
            break;
        };
        passive[j] = true;
        loop {
            iters += 1;
            if iters > max_iter {
                break 'outer;
            }
            let z = solve_passive(&passive);
            if (0..n).filter(|&i| passive[i]).all(|i| z[i] > 0.0) {
                x = z;
                break;
            }
            let mut alpha = f64::INFINITY;
            for i in (0..n).filter(|&i| passive[i] && z[i] <= 0.0) {
                let denom = x[i] - z[i];
                if denom > 0.0 {
                    alpha = alpha.min(x[i] / denom);
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            x += (z - &x) * alpha;
            for i in 0..n {
                if passive[i] && x[i] <= 1e-15 * scale {
                    passive[i] = false;
                    x[i] = 0.0;
                }
            }
        }
    }
    let residual_norm = (b - a * &x).norm();
    NnlsSolution { x, residual_norm, converged }
}

/// Whether strictly positive `c_j` exist with `Σ c_j ν_j = 0`.
///
/// Positive solutions exist iff solutions with `c_j ≥ 1` do (rescale), so the
/// test is `min ‖N(1 + c')‖` over `c' ≥ 0` being zero.
pub fn delta_feasible(nus: &[Vec<f64>]) -> bool {
    if nus.iter().all(|v| v.iter().all(|&c| c == 0.0)) {
        return true;
    }
    let rows = nus.iter().map(Vec::len).max().unwrap_or(0);
    let n = DMatrix::from_fn(rows, nus.len(), |r, c| nus[c].get(r).copied().unwrap_or(0.0));
    let b = -(&n * DVector::from_element(nus.len(), 1.0));
    let sol = nnls(&n, &b, 50 * (nus.len() + rows));
    let scale = nus.iter().map(|v| v.iter().map(|c| c * c).sum::<f64>().sqrt()).fold(0.0, f64::max);
    let magnitude = 1.0 + sol.x.iter().fold(0.0f64, |m, v| m.max(*v));
    sol.residual_norm <= 1e-9 * scale * magnitude
}

/// `c / sqrt(cᵀ Σ c)`.
pub fn normalize_score(c: &[f64], gram: &GramMatrix) -> Result<Vec<f64>> {
    if c.len() != gram.dim() {
        return Err(Error::Dimension { expected: gram.dim(), got: c.len() });
    }
    let v = DVector::from_column_slice(c);
    let q = v.dot(&(&gram.sigma * &v));
    if !(q > 0.0) || !q.is_finite() {
        return Err(Error::ZeroNorm);
    }
    Ok(c.iter().map(|x| x / q.sqrt()).collect())
}

/// `max(cᵀg, 0)² / (cᵀ Σ c)`: the squared truncated value of the Gaussian
/// process at the normalized score with coefficients `c`.
pub fn rayleigh_value(c: &DVector<f64>, g: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<f64> {
    let q = c.dot(&(sigma * c));
    if !(q > 0.0) {
        return Err(Error::ZeroNorm);
    }
    Ok(c.dot(g).max(0.0).powi(2) / q)
}

/// One element of the limit index set in coefficient form: constant `gamma`,
/// level coefficients `epsilon_i`, slope vectors `zeta_i` and quadratic blocks
/// `A_i`, the latter entering with the sign of the true amplitude.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeSpec {
    pub partition: Partition,
    pub gamma: f64,
    pub epsilon: Vec<f64>,
    pub zeta: Vec<Vec<f64>>,
    pub quadratic: Vec<DMatrix<f64>>,
}

/// Largest quadratic rank available to a group of `m` fitted units in `d` inputs.
pub fn rank_cap(m: usize, input_dim: usize) -> usize {
    m.saturating_sub(1).min(input_dim + 1)
}

impl ConeSpec {
    /// `A_i` symmetric PSD with rank at most `m_i − 1` (hence zero for singletons).
    pub fn validate(&self, input_dim: usize) -> Result<()> {
        let k0 = self.partition.k0();
        let d1 = input_dim + 1;
        if self.epsilon.len() != k0 || self.zeta.len() != k0 || self.quadratic.len() != k0 {
            return Err(Error::Dimension { expected: k0, got: self.quadratic.len() });
        }
        for i in 0..k0 {
            let a = &self.quadratic[i];
            if self.zeta[i].len() != d1 || a.nrows() != d1 || a.ncols() != d1 {
                return Err(Error::Dimension { expected: d1, got: a.nrows() });
            }
            let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if (a - a.transpose()).amax() > 1e-12 * scale.max(1.0) {
                return Err(Error::Config(format!("quadratic block {i} is not symmetric")));
            }
            let eig = a.clone().symmetric_eigenvalues();
            let tol = 1e-10 * scale.max(f64::MIN_POSITIVE);
            if eig.iter().any(|&e| e < -tol) {
                return Err(Error::Config(format!("quadratic block {i} is not PSD")));
            }
            let rank = eig.iter().filter(|&&e| e > tol).count();
            let cap = rank_cap(self.partition.group_size(i), input_dim);
            if rank > cap {
                return Err(Error::Config(format!("quadratic block {i} has rank {rank} > {cap}")));
            }
        }
        Ok(())
    }

    /// Coefficient vector over the core basis; `signs[i]` is `sg(a_i⁰)`.
    pub fn coefficients(&self, basis: &ScoreBasis, signs: &[f64]) -> DVector<f64> {
        let mut c = DVector::zeros(basis.dim());
        c[basis.constant_index()] = self.gamma;
        for i in 0..basis.k0 {
            c[basis.level_index(i)] = self.epsilon[i];
            for (l, z) in self.zeta[i].iter().enumerate() {
                c[basis.slope_index(i, l)] = *z;
            }
            for (l, m) in basis.curvature_pairs() {
                let mult = if l == m { 1.0 } else { 2.0 };
                c[basis.curvature_index(i, l, m)] = signs[i] * mult * self.quadratic[i][(l, m)];
            }
        }
        c
    }
}

/// Coefficients of `u uᵀ` on the curvature columns of one group, in
/// [`ScoreBasis::curvature_pairs`] order.
pub fn rank_one_generator(u: &[f64]) -> Vec<f64> {
    let d1 = u.len();
    (0..d1)
        .flat_map(|l| (l..d1).map(move |m| (l, m)))
        .map(|(l, m)| if l == m { u[l] * u[l] } else { 2.0 * u[l] * u[m] })
        .collect()
}
