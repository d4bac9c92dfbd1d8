//! Second-order expansion of the density ratio `f_θ/f` around the set of
//! parameters realizing the true regression function.
//!
//! Redundant fitted units are grouped onto true units by a [`Partition`]. For
//! fixed grouping the parameter splits into an identifiable block
//! `Φ = (β, w_1..w_T, s_1..s_{k⁰})` and mixing weights `ψ = (q_1..q_T)`, with
//! `s_i = Σ_{j∈group i} a_j − a_i⁰` and `q_j = a_j / Σ_{group} a`. Coordinates
//! of `Φ` are laid out as `[β, w_1, …, w_T, s_1, …, s_{k⁰}]`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::limit_law::Partition;
use crate::model::{HiddenUnit, MlpParams, RegressionSpec};
use crate::rng::stream_rng;
use crate::transfer::{sigmoid, TransferFunction};

use super::residual_score;

const PHI: TransferFunction = TransferFunction::Sigmoid;

/// Input draws used for the `L²` distance reported alongside Taylor terms.
pub const DISTANCE_DRAWS: usize = 4096;
const DISTANCE_SEED: u64 = 0x0D15_7A9C;

/// Entries smaller than this are compared absolutely by the derivative check.
pub const FD_REL_FLOOR: f64 = 1e-3;

/// `θ = (Φ_t, ψ_t)` for a fixed grouping `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reparameterization {
    pub partition: Partition,
    pub beta: f64,
    /// `w_1..w_T`, `T = t_{k⁰}`.
    pub weights: Vec<Vec<f64>>,
    /// `s_1..s_{k⁰}`.
    pub shifts: Vec<f64>,
    /// `q_1..q_T`.
    pub mixing: Vec<f64>,
}

impl Reparameterization {
    fn check_shape(spec: &RegressionSpec, partition: &Partition) -> Result<()> {
        if partition.k0() != spec.true_width() {
            return Err(Error::Dimension { expected: spec.true_width(), got: partition.k0() });
        }
        Ok(())
    }

    /// Reparameterizes `theta`, whose units must all be grouped
    /// (`theta.k() == t_{k⁰}`).
    pub fn from_params(theta: &MlpParams, spec: &RegressionSpec, partition: &Partition) -> Result<Self> {
        Self::check_shape(spec, partition)?;
        if theta.k() != partition.used_units() {
            return Err(Error::Dimension { expected: partition.used_units(), got: theta.k() });
        }
        let mut shifts = Vec::with_capacity(partition.k0());
        let mut mixing = vec![0.0; theta.k()];
        for (i, true_unit) in spec.theta0.units.iter().enumerate() {
            let g = partition.group(i);
            let total: f64 = theta.units[g.clone()].iter().map(|u| u.a).sum();
            shifts.push(total - true_unit.a);
            for j in g {
                mixing[j] = if total != 0.0 { theta.units[j].a / total } else { 0.0 };
            }
        }
        Ok(Self {
            partition: partition.clone(),
            beta: theta.beta,
            weights: theta.units.iter().map(|u| u.w.clone()).collect(),
            shifts,
            mixing,
        })
    }

    /// `Φ_t⁰`: `β⁰`, each `w_j` equal to its group's true weight, all `s_i = 0`.
    pub fn base_point(spec: &RegressionSpec, partition: &Partition, mixing: Vec<f64>) -> Result<Self> {
        Self::check_shape(spec, partition)?;
        if mixing.len() != partition.used_units() {
            return Err(Error::Dimension { expected: partition.used_units(), got: mixing.len() });
        }
        let mut weights = Vec::with_capacity(mixing.len());
        for i in 0..partition.k0() {
            for _ in partition.group(i) {
                weights.push(spec.theta0.units[i].w.clone());
            }
        }
        Ok(Self {
            partition: partition.clone(),
            beta: spec.theta0.beta,
            weights,
            shifts: vec![0.0; partition.k0()],
            mixing,
        })
    }

    /// Back to `θ`: `a_j = (s_i + a_i⁰)·q_j`.
    pub fn to_params(&self, spec: &RegressionSpec) -> MlpParams {
        let mut units = Vec::with_capacity(self.weights.len());
        for i in 0..self.partition.k0() {
            let amp = self.shifts[i] + spec.theta0.units[i].a;
            for j in self.partition.group(i) {
                units.push(HiddenUnit::new(amp * self.mixing[j], self.weights[j].clone()));
            }
        }
        MlpParams { beta: self.beta, units }
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].len() - 1
    }

    /// Length of `Φ_t`: `1 + T(d+1) + k⁰`.
    pub fn phi_dim(&self) -> usize {
        1 + self.weights.len() * (self.input_dim() + 1) + self.shifts.len()
    }

    pub fn phi(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.phi_dim());
        v.push(self.beta);
        for w in &self.weights {
            v.extend_from_slice(w);
        }
        v.extend_from_slice(&self.shifts);
        v
    }

    /// Same `ψ`, new `Φ` coordinates.
    pub fn with_phi(&self, phi: &[f64]) -> Result<Self> {
        if phi.len() != self.phi_dim() {
            return Err(Error::Dimension { expected: self.phi_dim(), got: phi.len() });
        }
        let w = self.input_dim() + 1;
        let t = self.weights.len();
        let mut out = self.clone();
        out.beta = phi[0];
        for (j, wj) in out.weights.iter_mut().enumerate() {
            wj.copy_from_slice(&phi[1 + j * w..1 + (j + 1) * w]);
        }
        out.shifts.copy_from_slice(&phi[1 + t * w..]);
        Ok(out)
    }

    /// `Φ_t − Φ_t⁰`.
    pub fn displacement(&self, spec: &RegressionSpec) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.phi_dim());
        v.push(self.beta - spec.theta0.beta);
        for i in 0..self.partition.k0() {
            let w0 = &spec.theta0.units[i].w;
            for j in self.partition.group(i) {
                v.extend(self.weights[j].iter().zip(w0).map(|(a, b)| a - b));
            }
        }
        v.extend_from_slice(&self.shifts);
        v
    }

    /// Human-readable names of the `Φ_t` coordinates.
    pub fn coordinate_labels(&self) -> Vec<String> {
        let mut v = vec!["beta".to_string()];
        for j in 0..self.weights.len() {
            for l in 0..=self.input_dim() {
                v.push(format!("w{}_{}", j + 1, l));
            }
        }
        v.extend((0..self.shifts.len()).map(|i| format!("s{}", i + 1)));
        v
    }
}

/// `F_θ(x) − F_{θ⁰}(x)` evaluated in `(Φ, ψ)` coordinates without cancelling
/// two `O(1)` quantities, so the result keeps relative precision for small
/// displacements.
fn regression_gap(rep: &Reparameterization, spec: &RegressionSpec, x: &[f64]) -> f64 {
    let mut gap = rep.beta - spec.theta0.beta;
    for (i, true_unit) in spec.theta0.units.iter().enumerate() {
        let v = true_unit.activation(x);
        let phi_v = sigmoid(v);
        let (mut mixed, mut mixed_gap, mut qsum) = (0.0, 0.0, 0.0);
        for j in rep.partition.group(i) {
            let q = rep.mixing[j];
            let w = &rep.weights[j];
            let delta = (w[0] - true_unit.w[0])
                + w[1..].iter().zip(&true_unit.w[1..]).zip(x).map(|((a, b), x)| (a - b) * x).sum::<f64>();
            let phi_u = sigmoid(v + delta);
            // φ(u) − φ(v) = −φ(u)·φ(−v)·expm1(v − u)
            let diff = -phi_u * sigmoid(-v) * (-delta).exp_m1();
            mixed += q * phi_u;
            mixed_gap += q * diff;
            qsum += q;
        }
        gap += rep.shifts[i] * mixed + true_unit.a * mixed_gap + true_unit.a * (qsum - 1.0) * phi_v;
    }
    gap
}

/// `f_θ/f(z) − 1 = expm1(e(z)·ΔF − ΔF²/(2σ²))`.
pub fn density_ratio_minus_one(rep: &Reparameterization, spec: &RegressionSpec, x: &[f64], y: f64) -> f64 {
    let gap = regression_gap(rep, spec, x);
    let e = residual_score(spec, x, y);
    (e * gap - gap * gap / (2.0 * spec.sigma2)).exp_m1()
}

/// `D(θ) = ‖f_θ/f − 1‖₂` under the true law. Integrating out the noise gives
/// `D² = E_x[exp(ΔF(x)²/σ²) − 1]`; the input expectation is Monte Carlo.
pub fn ratio_distance(theta: &MlpParams, spec: &RegressionSpec, draws: usize, seed: u64) -> f64 {
    let mut rng = stream_rng(seed, 0);
    let mut x = vec![0.0; spec.input_dim];
    let mut acc = 0.0;
    for _ in 0..draws {
        spec.input_law.sample(&mut rng, &mut x);
        let gap = theta.forward_unchecked(&x) - spec.regression(&x);
        acc += (gap * gap / spec.sigma2).exp_m1();
    }
    (acc / draws as f64).sqrt()
}

/// Gradient and Hessian of `f_θ/f(z)` with respect to `Φ_t` at `Φ_t⁰`.
#[derive(Debug, Clone)]
pub struct RatioDerivatives {
    pub gradient: Vec<f64>,
    pub hessian: DMatrix<f64>,
}

/// Assembles the first and second derivatives of `f_θ/f(z)` at `Φ_t⁰` entry by
/// entry. Only the partition and mixing weights of `rep` are used.
///
/// With `g = ∂F/∂Φ` at the base point (`∂F/∂β = 1`, `∂F/∂s_i = Σq_j·φ(w_i⁰ᵀx)`,
/// `∂F/∂w_j = a_i⁰ q_j φ'(w_i⁰ᵀx)·x`), every second derivative is
/// `(e² − 1/σ²)·g gᵀ` plus the `e(z)` blocks from `∂²F`:
/// `∂²/∂w_j² ∋ e·a_i⁰ q_j φ''(w_i⁰ᵀx)·xxᵀ` and `∂²/∂s_i∂w_j ∋ e·q_j φ'(w_i⁰ᵀx)·x`
/// for `j` in group `i`.
pub fn analytic_ratio_derivatives(
    rep: &Reparameterization,
    spec: &RegressionSpec,
    x: &[f64],
    y: f64,
) -> RatioDerivatives {
    let d1 = spec.input_dim + 1;
    let t = rep.weights.len();
    let p = rep.phi_dim();
    let s_index = |i: usize| 1 + t * d1 + i;
    let w_index = |j: usize, l: usize| 1 + j * d1 + l;
    let xt: Vec<f64> = std::iter::once(1.0).chain(x.iter().copied()).collect();
    let e = residual_score(spec, x, y);

    let mut g = vec![0.0; p];
    let mut curvature = DMatrix::zeros(p, p);
    g[0] = 1.0;
    for (i, unit) in spec.theta0.units.iter().enumerate() {
        let (phi, dphi, ddphi) = PHI.value_and_two(unit.activation(x));
        let group = rep.partition.group(i);
        let qsum: f64 = group.clone().map(|j| rep.mixing[j]).sum();
        g[s_index(i)] = qsum * phi;
        for j in group {
            let q = rep.mixing[j];
            for l in 0..d1 {
                g[w_index(j, l)] = unit.a * q * dphi * xt[l];
                let cross = q * dphi * xt[l];
                curvature[(s_index(i), w_index(j, l))] = cross;
                curvature[(w_index(j, l), s_index(i))] = cross;
                for m in 0..d1 {
                    curvature[(w_index(j, l), w_index(j, m))] = unit.a * q * ddphi * xt[l] * xt[m];
                }
            }
        }
    }

    let outer = e * e - 1.0 / spec.sigma2;
    let gradient: Vec<f64> = g.iter().map(|v| e * v).collect();
    let mut hessian = DMatrix::zeros(p, p);
    for r in 0..p {
        for c in 0..p {
            hessian[(r, c)] = outer * g[r] * g[c] + e * curvature[(r, c)];
        }
    }
    RatioDerivatives { gradient, hessian }
}

/// Terms of the second-order expansion at one observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaylorTerms {
    /// `(Φ−Φ⁰)ᵀ f'`.
    pub first_order: f64,
    /// `(Φ−Φ⁰)ᵀ f'' (Φ−Φ⁰)`.
    pub second_order: f64,
    /// Exact `f_θ/f(z) − 1`.
    pub ratio_minus_one: f64,
    /// `|f_θ/f − 1 − first − second/2|`.
    pub remainder: f64,
    /// `D = ‖f_θ/f − 1‖₂`, the scale the remainder is small against.
    pub remainder_norm: f64,
}

pub fn taylor_terms(rep: &Reparameterization, spec: &RegressionSpec, x: &[f64], y: f64) -> TaylorTerms {
    let delta = rep.displacement(spec);
    let derivs = analytic_ratio_derivatives(rep, spec, x, y);
    let first_order: f64 = delta.iter().zip(&derivs.gradient).map(|(a, b)| a * b).sum();
    let dv = nalgebra::DVector::from_column_slice(&delta);
    let second_order = (dv.transpose() * &derivs.hessian * &dv)[(0, 0)];
    let ratio_minus_one = density_ratio_minus_one(rep, spec, x, y);
    let remainder = (ratio_minus_one - first_order - 0.5 * second_order).abs();
    let remainder_norm = ratio_distance(&rep.to_params(spec), spec, DISTANCE_DRAWS, DISTANCE_SEED);
    TaylorTerms { first_order, second_order, ratio_minus_one, remainder, remainder_norm }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdSteps {
    pub first: f64,
    pub second: f64,
}

impl Default for FdSteps {
    fn default() -> Self {
        Self { first: 1e-5, second: 1e-4 }
    }
}

/// Analytic versus central-difference derivatives of `f_θ/f(z)` at `Φ_t⁰`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdReport {
    pub coordinates: Vec<String>,
    pub first_rel: Vec<f64>,
    /// Row-major `p × p`.
    pub second_rel: Vec<Vec<f64>>,
    pub max_first_rel: f64,
    pub max_second_rel: f64,
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FD_REL_FLOOR)
}

pub fn fd_check_derivatives(
    base: &Reparameterization,
    spec: &RegressionSpec,
    x: &[f64],
    y: f64,
    steps: FdSteps,
) -> Result<FdReport> {
    if !(steps.first > 0.0 && steps.second > 0.0) {
        return Err(Error::Config("finite-difference steps must be positive".into()));
    }
    let base = Reparameterization::base_point(spec, &base.partition, base.mixing.clone())?;
    let phi0 = base.phi();
    let p = phi0.len();
    let derivs = analytic_ratio_derivatives(&base, spec, x, y);
    let eval = |offsets: &[(usize, f64)]| -> Result<f64> {
        let mut phi = phi0.clone();
        for &(c, h) in offsets {
            phi[c] += h;
        }
        Ok(density_ratio_minus_one(&base.with_phi(&phi)?, spec, x, y))
    };

    let h1 = steps.first;
    let mut first_rel = Vec::with_capacity(p);
    for c in 0..p {
        let fd = (eval(&[(c, h1)])? - eval(&[(c, -h1)])?) / (2.0 * h1);
        first_rel.push(rel_err(derivs.gradient[c], fd));
    }

    let h2 = steps.second;
    let centre = eval(&[])?;
    let mut second_rel = vec![vec![0.0; p]; p];
    for r in 0..p {
        for c in r..p {
            let fd = if r == c {
                (eval(&[(r, h2)])? - 2.0 * centre + eval(&[(r, -h2)])?) / (h2 * h2)
            } else {
                (eval(&[(r, h2), (c, h2)])? - eval(&[(r, h2), (c, -h2)])?
                    - eval(&[(r, -h2), (c, h2)])?
                    + eval(&[(r, -h2), (c, -h2)])?)
                    / (4.0 * h2 * h2)
            };
            let err = rel_err(derivs.hessian[(r, c)], fd);
            second_rel[r][c] = err;
            second_rel[c][r] = err;
        }
    }
    let max_first_rel = first_rel.iter().fold(0.0f64, |m, &v| m.max(v));
    let max_second_rel = second_rel.iter().flatten().fold(0.0f64, |m, &v| m.max(v));
    Ok(FdReport { coordinates: base.coordinate_labels(), first_rel, second_rel, max_first_rel, max_second_rel })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::generate_dataset;
    use rand::Rng;

    fn two_unit_setup() -> (RegressionSpec, Reparameterization) {
        let spec = RegressionSpec::default();
        let p = Partition::new(vec![0, 2]).unwrap();
        let rep = Reparameterization::base_point(&spec, &p, vec![0.3, 0.7]).unwrap();
        (spec, rep)
    }

    #[test]
    fn reparameterization_round_trip() {
        let spec = RegressionSpec::default();
        let p = Partition::new(vec![0, 2]).unwrap();
        let theta = MlpParams {
            beta: 0.4,
            units: vec![HiddenUnit::new(0.25, vec![0.4, 1.1]), HiddenUnit::new(0.8, vec![0.6, 0.9])],
        };
        let rep = Reparameterization::from_params(&theta, &spec, &p).unwrap();
        assert!((rep.shifts[0] - 0.05).abs() < 1e-15);
        assert!((rep.mixing[0] - 0.25 / 1.05).abs() < 1e-15);
        let back = rep.to_params(&spec);
        for (a, b) in back.flatten().iter().zip(theta.flatten()) {
            assert!((a - b).abs() < 1e-14);
        }
        let again = rep.with_phi(&rep.phi()).unwrap();
        assert_eq!(again, rep);
    }

    #[test]
    fn zero_amplitude_sum_gives_zero_mixing() {
        let spec = RegressionSpec::default();
        let p = Partition::new(vec![0, 2]).unwrap();
        let theta = MlpParams {
            beta: 0.0,
            units: vec![HiddenUnit::new(0.5, vec![0.5, 1.0]), HiddenUnit::new(-0.5, vec![0.5, 1.0])],
        };
        let rep = Reparameterization::from_params(&theta, &spec, &p).unwrap();
        assert_eq!(rep.mixing, vec![0.0, 0.0]);
        assert_eq!(rep.shifts, vec![-1.0]);
    }

    #[test]
    fn base_point_has_no_gap() {
        let (spec, rep) = two_unit_setup();
        assert_eq!(rep.displacement(&spec), vec![0.0; rep.phi_dim()]);
        let terms = taylor_terms(&rep, &spec, &[0.3], 2.0);
        assert_eq!(terms.first_order, 0.0);
        assert_eq!(terms.second_order, 0.0);
        assert_eq!(terms.ratio_minus_one, 0.0);
        assert!(terms.remainder_norm < 1e-12);
    }

    #[test]
    fn beta_only_displacement() {
        let (spec, rep) = two_unit_setup();
        let h = 0.01;
        let mut phi = rep.phi();
        phi[0] += h;
        let moved = rep.with_phi(&phi).unwrap();
        let (x, y) = ([0.7], 0.1);
        let e = residual_score(&spec, &x, y);
        let terms = taylor_terms(&moved, &spec, &x, y);
        assert!((terms.first_order - e * h).abs() < 1e-15);
        // σ² = 1: second derivative in β is e² − 1
        assert!((terms.second_order - (e * e - 1.0) * h * h).abs() < 1e-15);
    }

    #[test]
    fn first_order_is_linear_in_displacement() {
        let (spec, rep) = two_unit_setup();
        let mut rng = stream_rng(3, 0);
        let phi0 = rep.phi();
        for _ in 0..20 {
            let dir: Vec<f64> = (0..phi0.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let at = |s: f64| {
                let phi: Vec<f64> = phi0.iter().zip(&dir).map(|(a, b)| a + s * b).collect();
                taylor_terms(&rep.with_phi(&phi).unwrap(), &spec, &[0.2], -0.4)
            };
            let (one, two) = (at(0.01), at(0.02));
            assert!((two.first_order - 2.0 * one.first_order).abs() < 1e-13);
            assert!((two.second_order - 4.0 * one.second_order).abs() < 1e-12);
        }
    }

    #[test]
    fn remainder_is_third_order() {
        let (spec, rep) = two_unit_setup();
        let data = generate_dataset(&spec, 30, 8).unwrap();
        let mut rng = stream_rng(4, 0);
        let phi0 = rep.phi();
        for (x, y) in data.rows() {
            let dir: Vec<f64> = (0..phi0.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let rem = |h: f64| {
                let phi: Vec<f64> = phi0.iter().zip(&dir).map(|(a, b)| a + h * b).collect();
                taylor_terms(&rep.with_phi(&phi).unwrap(), &spec, x, y).remainder
            };
            let (r1, r2, r3) = (rem(1e-2), rem(5e-3), rem(2.5e-3));
            assert!(r3 < r2 && r2 < r1);
            assert!(r1 / r2 > 5.0 && r2 / r3 > 5.0, "{r1} {r2} {r3}");
        }
    }

    #[test]
    fn catalog_entries_match_closed_forms() {
        let (spec, rep) = two_unit_setup();
        let (x, y) = ([0.9], 1.7);
        let e = residual_score(&spec, &x, y);
        let u = &spec.theta0.units[0];
        let (phi, dphi, _) = PHI.value_and_two(u.activation(&x));
        let der = analytic_ratio_derivatives(&rep, &spec, &x, y);
        let s = rep.phi_dim() - 1;
        assert!((der.gradient[0] - e).abs() < 1e-15);
        assert!((der.gradient[s] - e * phi).abs() < 1e-15);
        // ∂/∂w_2 at coordinate l=1: e·a⁰·q_2·φ'·x
        assert!((der.gradient[4] - e * u.a * 0.7 * dphi * x[0]).abs() < 1e-15);
        assert!((der.hessian[(0, 0)] - (e * e - 1.0)).abs() < 1e-14);
        assert!((der.hessian[(0, s)] - (e * e - 1.0) * phi).abs() < 1e-14);
        let mixed = (e * e - 1.0) * u.a * 0.3 * dphi * x[0];
        assert!((der.hessian[(0, 2)] - mixed).abs() < 1e-14);
        let sw = (e * e - 1.0) * phi * 0.3 * u.a * dphi + e * 0.3 * dphi;
        assert!((der.hessian[(s, 1)] - sw).abs() < 1e-14);
    }

    #[test]
    fn finite_differences_agree() {
        let (spec, rep) = two_unit_setup();
        let data = generate_dataset(&spec, 10, 1).unwrap();
        for (x, y) in data.rows() {
            let r = fd_check_derivatives(&rep, &spec, x, y, FdSteps::default()).unwrap();
            assert!(r.max_first_rel <= 1e-6, "{}", r.max_first_rel);
            assert!(r.max_second_rel <= 1e-5, "{}", r.max_second_rel);
        }
    }

    #[test]
    fn non_unit_variance_uses_inverse_variance() {
        let spec = RegressionSpec { sigma2: 2.5, ..Default::default() };
        let p = Partition::new(vec![0, 1]).unwrap();
        let rep = Reparameterization::base_point(&spec, &p, vec![1.0]).unwrap();
        let r = fd_check_derivatives(&rep, &spec, &[0.4], 1.9, FdSteps::default()).unwrap();
        assert!(r.max_second_rel <= 1e-5, "{}", r.max_second_rel);
    }
}
