use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ConstraintBox, RegressionSpec};
use crate::transfer::{sigmoid, TransferFunction};

/// Ordered basis of x-functions `B(x)` spanning the limit score functions
/// `V(z) = e(z)·B(x)`, with `x̃ = (1, x)`:
///
/// | block | functions | count |
/// |---|---|---|
/// | constant | `1` | 1 |
/// | level | `φ(w_i⁰ᵀx̃)` | `k⁰` |
/// | slope | `x̃_l φ'(w_i⁰ᵀx̃)`, `0 ≤ l ≤ d` | `k⁰(d+1)` |
/// | curvature | `x̃_l x̃_m φ''(w_i⁰ᵀx̃)`, `0 ≤ l ≤ m ≤ d` | `k⁰(d+1)(d+2)/2` |
/// | extra (optional) | `φ(wᵀx̃)` on a weight grid | `extra.len()` |
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBasis {
    pub k0: usize,
    pub input_dim: usize,
    /// True weight vectors, one per true unit.
    pub true_weights: Vec<Vec<f64>>,
    /// Weight vectors of the optional free-unit columns.
    #[serde(default)]
    pub extra_weights: Vec<Vec<f64>>,
}

impl ScoreBasis {
    pub fn new(spec: &RegressionSpec) -> Self {
        Self {
            k0: spec.true_width(),
            input_dim: spec.input_dim,
            true_weights: spec.theta0.units.iter().map(|u| u.w.clone()).collect(),
            extra_weights: Vec::new(),
        }
    }

    /// Adds free-unit columns `φ(wᵀx̃)` for `w` on a tensor grid with
    /// `points_per_axis` values per coordinate in `[-radius, radius]`.
    /// Grid points violating `‖w‖ ≥ η` or whose slope part vanishes
    /// (constant columns) are skipped.
    pub fn with_weight_grid(mut self, bx: &ConstraintBox, points_per_axis: usize, radius: f64) -> Self {
        let d1 = self.input_dim + 1;
        let axis: Vec<f64> = if points_per_axis <= 1 {
            vec![0.0]
        } else {
            (0..points_per_axis)
                .map(|i| -radius + 2.0 * radius * i as f64 / (points_per_axis - 1) as f64)
                .collect()
        };
        let total = axis.len().pow(d1 as u32);
        for mut code in 0..total {
            let mut w = Vec::with_capacity(d1);
            for _ in 0..d1 {
                w.push(axis[code % axis.len()]);
                code /= axis.len();
            }
            let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            let slope = w[1..].iter().map(|v| v * v).sum::<f64>();
            if norm >= bx.eta && slope > 0.0 && norm <= bx.norm_bound {
                self.extra_weights.push(w);
            }
        }
        self
    }

    fn tri(&self) -> usize {
        (self.input_dim + 1) * (self.input_dim + 2) / 2
    }

    /// Dimension of the core basis, `1 + k⁰ + k⁰(d+1) + k⁰(d+1)(d+2)/2`.
    pub fn core_dim(&self) -> usize {
        1 + self.k0 + self.k0 * (self.input_dim + 1) + self.k0 * self.tri()
    }

    pub fn dim(&self) -> usize {
        self.core_dim() + self.extra_weights.len()
    }

    pub fn constant_index(&self) -> usize {
        0
    }

    pub fn level_index(&self, i: usize) -> usize {
        1 + i
    }

    pub fn slope_index(&self, i: usize, l: usize) -> usize {
        1 + self.k0 + i * (self.input_dim + 1) + l
    }

    /// Position of `x̃_l x̃_m φ''_i`; `(l, m)` and `(m, l)` share a slot.
    pub fn curvature_index(&self, i: usize, l: usize, m: usize) -> usize {
        let (l, m) = if l <= m { (l, m) } else { (m, l) };
        let d1 = self.input_dim + 1;
        // rows l' < l of the upper triangle hold d1 - l' entries each
        let offset = l * d1 - l * l.saturating_sub(1) / 2 + (m - l);
        1 + self.k0 + self.k0 * d1 + i * self.tri() + offset
    }

    pub fn extra_index(&self, r: usize) -> usize {
        self.core_dim() + r
    }

    /// Constant, level and slope columns: the span every limit score contains.
    pub fn linear_indices(&self) -> Vec<usize> {
        (0..1 + self.k0 + self.k0 * (self.input_dim + 1)).collect()
    }

    /// Curvature columns of true unit `i`, in `(l, m)` lexicographic order.
    pub fn curvature_indices(&self, i: usize) -> Vec<usize> {
        let start = 1 + self.k0 + self.k0 * (self.input_dim + 1) + i * self.tri();
        (start..start + self.tri()).collect()
    }

    /// `(l, m)` pairs in the order of [`Self::curvature_indices`].
    pub fn curvature_pairs(&self) -> Vec<(usize, usize)> {
        let d1 = self.input_dim + 1;
        (0..d1).flat_map(|l| (l..d1).map(move |m| (l, m))).collect()
    }

    pub fn labels(&self) -> Vec<String> {
        let d1 = self.input_dim + 1;
        let mut v = vec!["1".to_string()];
        v.extend((0..self.k0).map(|i| format!("phi{}", i + 1)));
        for i in 0..self.k0 {
            v.extend((0..d1).map(|l| format!("x{l}*dphi{}", i + 1)));
        }
        for i in 0..self.k0 {
            v.extend(self.curvature_pairs().into_iter().map(|(l, m)| format!("x{l}*x{m}*d2phi{}", i + 1)));
        }
        v.extend((0..self.extra_weights.len()).map(|r| format!("extra{r}")));
        v
    }

    /// Writes `B(x)` into `out` (length [`Self::dim`]).
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let d1 = self.input_dim + 1;
        let xt = |l: usize| if l == 0 { 1.0 } else { x[l - 1] };
        let phi = TransferFunction::Sigmoid;
        out[0] = 1.0;
        let slope0 = 1 + self.k0;
        let curv0 = slope0 + self.k0 * d1;
        let tri = self.tri();
        for (i, w) in self.true_weights.iter().enumerate() {
            let a = w[0] + w[1..].iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
            let (p, dp, ddp) = phi.value_and_two(a);
            out[1 + i] = p;
            for l in 0..d1 {
                out[slope0 + i * d1 + l] = xt(l) * dp;
            }
            let mut c = curv0 + i * tri;
            for l in 0..d1 {
                for m in l..d1 {
                    out[c] = xt(l) * xt(m) * ddp;
                    c += 1;
                }
            }
        }
        let core = self.core_dim();
        for (r, w) in self.extra_weights.iter().enumerate() {
            let a = w[0] + w[1..].iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
            out[core + r] = sigmoid(a);
        }
    }
}

/// `B(x)` for the core basis of `spec`.
pub fn eval_score_basis(spec: &RegressionSpec, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != spec.input_dim {
        return Err(Error::Dimension { expected: spec.input_dim, got: x.len() });
    }
    let basis = ScoreBasis::new(spec);
    let mut out = vec![0.0; basis.dim()];
    basis.eval_into(x, &mut out);
    Ok(out)
}
