use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::basis::ScoreBasis;
use crate::error::{Error, Result};
use crate::model::{InputLaw, RegressionSpec};
use crate::provenance::config_hash;
use crate::rng::stream_rng;

/// Monte-Carlo draws per chunk; chunk sums are combined pairwise in chunk
/// order so the estimate does not depend on the thread count.
const CHUNK: usize = 4096;

/// Nodes of the Gauss–Hermite rule.
pub const GAUSS_HERMITE_NODES: usize = 129;

/// Default threshold on the normalized minimum eigenvalue.
pub const H4_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GramMode {
    #[default]
    MonteCarlo,
    /// Quadrature under a Gaussian input law; one input only.
    GaussHermite,
}

/// `x_gram = E_x[B(x)B(x)ᵀ]` and `sigma = x_gram/σ² = P(V Vᵀ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub basis: ScoreBasis,
    pub x_gram: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub sigma2: f64,
    pub mode: GramMode,
    /// Monte-Carlo draws, or quadrature nodes.
    pub mc_draws: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramMetadata {
    pub mode: GramMode,
    pub mc_draws: usize,
    pub seed: u64,
    pub sigma2: f64,
    pub dim: usize,
    pub basis: ScoreBasis,
    pub labels: Vec<String>,
    pub spec_hash: String,
}

impl GramMatrix {
    pub fn from_x_gram(basis: ScoreBasis, x_gram: DMatrix<f64>, sigma2: f64, mode: GramMode, mc_draws: usize, seed: u64) -> Result<Self> {
        if x_gram.nrows() != basis.dim() || x_gram.ncols() != basis.dim() {
            return Err(Error::Dimension { expected: basis.dim(), got: x_gram.nrows() });
        }
        if !(sigma2 > 0.0) {
            return Err(Error::Config("Gram matrix needs sigma2 > 0".into()));
        }
        let x_gram = (&x_gram + x_gram.transpose()) * 0.5;
        let sigma = &x_gram / sigma2;
        Ok(Self { basis, x_gram, sigma, sigma2, mode, mc_draws, seed })
    }

    pub fn dim(&self) -> usize {
        self.x_gram.nrows()
    }

    pub fn metadata(&self, spec_hash: String) -> GramMetadata {
        GramMetadata {
            mode: self.mode,
            mc_draws: self.mc_draws,
            seed: self.seed,
            sigma2: self.sigma2,
            dim: self.dim(),
            basis: self.basis.clone(),
            labels: self.basis.labels(),
            spec_hash,
        }
    }

    /// `x_gram` as whitespace-separated rows, shortest round-trip decimals.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for r in 0..self.dim() {
            let row: Vec<String> = (0..self.dim()).map(|c| format!("{:e}", self.x_gram[(r, c)])).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn from_text(meta: &GramMetadata, text: &str) -> Result<Self> {
        let mut values = Vec::with_capacity(meta.dim * meta.dim);
        for tok in text.split_whitespace() {
            values.push(tok.parse::<f64>().map_err(|_| Error::Config(format!("bad matrix entry '{tok}'")))?);
        }
        if values.len() != meta.dim * meta.dim {
            return Err(Error::Dimension { expected: meta.dim * meta.dim, got: values.len() });
        }
        let m = DMatrix::from_row_slice(meta.dim, meta.dim, &values);
        Self::from_x_gram(meta.basis.clone(), m, meta.sigma2, meta.mode, meta.mc_draws, meta.seed)
    }

    /// Writes `<stem>.txt` and `<stem>.json` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str, spec: &RegressionSpec) -> Result<()> {
        std::fs::write(dir.join(format!("{stem}.txt")), self.to_text())?;
        let meta = serde_json::to_string_pretty(&self.metadata(config_hash(spec)))?;
        std::fs::write(dir.join(format!("{stem}.json")), meta)?;
        Ok(())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let meta: GramMetadata = serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{stem}.json")))?)?;
        Self::from_text(&meta, &std::fs::read_to_string(dir.join(format!("{stem}.txt")))?)
    }
}

fn accumulate_outer(basis: &ScoreBasis, x: &[f64], weight: f64, buf: &mut [f64], acc: &mut [f64]) {
    basis.eval_into(x, buf);
    let p = buf.len();
    for r in 0..p {
        let br = buf[r] * weight;
        let row = &mut acc[r * p..(r + 1) * p];
        for c in r..p {
            row[c] += br * buf[c];
        }
    }
}

fn pairwise_sum(mut parts: Vec<Vec<f64>>) -> Vec<f64> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop().unwrap_or_default()
}

fn upper_to_matrix(p: usize, upper: &[f64], scale: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(p, p);
    for r in 0..p {
        for c in r..p {
            let v = upper[r * p + c] * scale;
            m[(r, c)] = v;
            m[(c, r)] = v;
        }
    }
    m
}

fn monte_carlo_x_gram(spec: &RegressionSpec, basis: &ScoreBasis, draws: usize, seed: u64) -> DMatrix<f64> {
    let p = basis.dim();
    let d = spec.input_dim;
    let chunks = draws.div_ceil(CHUNK);
    let parts: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, c as u64);
            let count = CHUNK.min(draws - c * CHUNK);
            let mut acc = vec![0.0; p * p];
            let mut buf = vec![0.0; p];
            let mut x = vec![0.0; d];
            for _ in 0..count {
                spec.input_law.sample(&mut rng, &mut x);
                accumulate_outer(basis, &x, 1.0, &mut buf, &mut acc);
            }
            acc
        })
        .collect();
    upper_to_matrix(p, &pairwise_sum(parts), 1.0 / draws as f64)
}

/// Nodes and weights of the `n`-point Gauss–Hermite rule for `N(0, 1)`
/// (weights sum to one), from the eigen-decomposition of the Jacobi matrix.
pub fn gauss_hermite_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jacobi = DMatrix::zeros(n, n);
    for k in 1..n {
        let b = (k as f64).sqrt();
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    pairs.into_iter().map(|(x, w)| (x, w / total)).unzip()
}

fn gauss_hermite_x_gram(spec: &RegressionSpec, basis: &ScoreBasis) -> Result<DMatrix<f64>> {
    if spec.input_dim != 1 {
        return Err(Error::Config("Gauss-Hermite Gram mode supports one input only".into()));
    }
    let scale = match spec.input_law {
        InputLaw::StandardNormal => 1.0,
        InputLaw::IsotropicNormal { scale } => scale,
    };
    let (nodes, weights) = gauss_hermite_rule(GAUSS_HERMITE_NODES);
    let p = basis.dim();
    let mut acc = vec![0.0; p * p];
    let mut buf = vec![0.0; p];
    for (z, w) in nodes.iter().zip(&weights) {
        accumulate_outer(basis, &[scale * z], *w, &mut buf, &mut acc);
    }
    Ok(upper_to_matrix(p, &acc, 1.0))
}

/// Monte-Carlo Gram matrix of the core basis.
pub fn gram_matrix(spec: &RegressionSpec, mc_draws: usize, seed: u64) -> Result<GramMatrix> {
    gram_matrix_with(spec, ScoreBasis::new(spec), GramMode::MonteCarlo, mc_draws, seed)
}

pub fn gram_matrix_with(
    spec: &RegressionSpec,
    basis: ScoreBasis,
    mode: GramMode,
    mc_draws: usize,
    seed: u64,
) -> Result<GramMatrix> {
    spec.validate()?;
    let x_gram = match mode {
        GramMode::MonteCarlo => {
            if mc_draws == 0 {
                return Err(Error::Config("mc_draws must be >= 1".into()));
            }
            monte_carlo_x_gram(spec, &basis, mc_draws, seed)
        }
        GramMode::GaussHermite => gauss_hermite_x_gram(spec, &basis)?,
    };
    let draws = if mode == GramMode::GaussHermite { GAUSS_HERMITE_NODES } else { mc_draws };
    GramMatrix::from_x_gram(basis, x_gram, spec.sigma2, mode, draws, seed)
}

/// Numerical linear-independence certificate for the basis functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct H4Report {
    /// Minimum eigenvalue of the unit-diagonal (correlation) form of `x_gram`.
    pub min_eigenvalue: f64,
    /// Minimum eigenvalue of `x_gram` itself.
    pub raw_min_eigenvalue: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl H4Report {
    /// Linear independence does not depend on how each function is scaled, so
    /// the decision uses `D^{-1/2} G D^{-1/2}`; a zero diagonal fails outright.
    pub fn from_matrix(x_gram: &DMatrix<f64>, tolerance: f64) -> Self {
        let raw_min_eigenvalue = min_eigenvalue(x_gram);
        let diag: Vec<f64> = x_gram.diagonal().iter().copied().collect();
        let min_eigenvalue = if diag.iter().any(|&v| !(v > 0.0)) {
            0.0
        } else {
            let p = diag.len();
            let normalized = DMatrix::from_fn(p, p, |r, c| x_gram[(r, c)] / (diag[r] * diag[c]).sqrt());
            min_eigenvalue(&normalized)
        };
        Self { min_eigenvalue, raw_min_eigenvalue, tolerance, pass: min_eigenvalue >= tolerance }
    }
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b))
}

pub fn check_h4(gram: &GramMatrix) -> H4Report {
    H4Report::from_matrix(&gram.x_gram, H4_TOLERANCE)
}
