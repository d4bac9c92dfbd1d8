use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::constraints::{check_constraints, ConstraintBox};
use super::params::{HiddenUnit, MlpParams};
use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Law `q` of the inputs. Both variants have a positive density on `R^d` and
/// all moments.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputLaw {
    #[default]
    StandardNormal,
    /// `N(0, scale² I)`.
    IsotropicNormal { scale: f64 },
}

impl InputLaw {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let scale = match *self {
            InputLaw::StandardNormal => 1.0,
            InputLaw::IsotropicNormal { scale } => scale,
        };
        for v in out.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v = scale * z;
        }
    }

    /// Standard deviation of each coordinate (both laws are centred Gaussians).
    pub fn scale(&self) -> f64 {
        match *self {
            InputLaw::StandardNormal => 1.0,
            InputLaw::IsotropicNormal { scale } => scale,
        }
    }
}

/// The true model: `Y = F_{θ⁰}(X) + ε`, `ε ~ N(0, σ²)`, `X ~ q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionSpec {
    pub theta0: MlpParams,
    pub sigma2: f64,
    pub input_dim: usize,
    #[serde(default)]
    pub input_law: InputLaw,
}

impl Default for RegressionSpec {
    /// One input, one true unit: `θ⁰ = (β=0.5, a=1, w=(0.5, 1))`, `σ² = 1`.
    fn default() -> Self {
        Self {
            theta0: MlpParams { beta: 0.5, units: vec![HiddenUnit::new(1.0, vec![0.5, 1.0])] },
            sigma2: 1.0,
            input_dim: 1,
            input_law: InputLaw::StandardNormal,
        }
    }
}

impl RegressionSpec {
    /// `k⁰`.
    pub fn true_width(&self) -> usize {
        self.theta0.k()
    }

    /// Structural checks; `sigma2 = 0` is allowed for noiseless generation.
    pub fn validate(&self) -> Result<()> {
        self.theta0.validate()?;
        if self.theta0.input_dim() != self.input_dim {
            return Err(Error::Dimension { expected: self.input_dim, got: self.theta0.input_dim() });
        }
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return Err(Error::Config(format!("sigma2 must be >= 0, got {}", self.sigma2)));
        }
        if let InputLaw::IsotropicNormal { scale } = self.input_law {
            if !(scale > 0.0) {
                return Err(Error::Config("input law scale must be positive".into()));
            }
        }
        Ok(())
    }

    /// Interior truth and pairwise distinct true weight vectors.
    pub fn check_regularity(&self, bx: &ConstraintBox) -> Result<()> {
        self.validate()?;
        let r = check_constraints(&self.theta0, bx);
        if r.min_slack() <= 0.0 {
            return Err(Error::Config("true parameter is not interior to the constraint box".into()));
        }
        let units = &self.theta0.units;
        for i in 0..units.len() {
            for j in i + 1..units.len() {
                if units[i].w == units[j].w {
                    return Err(Error::Config(format!("true units {i} and {j} share a weight vector")));
                }
            }
        }
        Ok(())
    }

    /// `F_{θ⁰}(x)`.
    pub fn regression(&self, x: &[f64]) -> f64 {
        self.theta0.forward_unchecked(x)
    }
}

/// i.i.d. pairs `(x_i, y_i)`, `x` stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub input_dim: usize,
    pub sigma2: f64,
}

impl Dataset {
    pub fn new(x: Vec<f64>, y: Vec<f64>, input_dim: usize, sigma2: f64) -> Result<Self> {
        if y.is_empty() || input_dim == 0 {
            return Err(Error::Config("dataset needs n >= 1 and d >= 1".into()));
        }
        if x.len() != y.len() * input_dim {
            return Err(Error::Dimension { expected: y.len() * input_dim, got: x.len() });
        }
        Ok(Self { x, y, input_dim, sigma2 })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.x.chunks_exact(self.input_dim).zip(self.y.iter().copied())
    }

    pub fn with_sigma2(mut self, sigma2: f64) -> Self {
        self.sigma2 = sigma2;
        self
    }

    pub fn mean_y(&self) -> f64 {
        self.y.iter().sum::<f64>() / self.len() as f64
    }

    /// Writes `x1,...,xd,y`. `comment`, if given, becomes a leading `# ` line.
    pub fn write_csv<W: Write>(&self, out: W, comment: Option<&str>) -> Result<()> {
        let mut out = out;
        if let Some(c) = comment {
            writeln!(out, "# {c}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.input_dim).map(|j| format!("x{j}")).collect();
        header.push("y".into());
        w.write_record(&header)?;
        for (x, y) in self.rows() {
            let rec: Vec<String> = x.iter().chain(std::iter::once(&y)).map(|v| v.to_string()).collect();
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>, comment: Option<&str>) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(f, comment)
    }

    /// Reads a dataset written by [`Dataset::write_csv`]. A `sigma2=<v>` entry
    /// in a leading comment line overrides `default_sigma2`.
    pub fn read_csv<R: BufRead>(input: R, default_sigma2: f64) -> Result<Self> {
        let mut sigma2 = default_sigma2;
        let mut body = String::new();
        for line in input.lines() {
            let line = line?;
            if let Some(c) = line.strip_prefix('#') {
                for kv in c.split([';', ',', ' ']) {
                    if let Some(v) = kv.trim().strip_prefix("sigma2=") {
                        sigma2 = v.parse().map_err(|_| Error::Config(format!("bad sigma2 '{v}'")))?;
                    }
                }
            } else {
                body.push_str(&line);
                body.push('\n');
            }
        }
        let mut r = csv::Reader::from_reader(body.as_bytes());
        let header = r.headers()?.clone();
        let d = header.len().saturating_sub(1);
        let expected: Vec<String> =
            (1..=d).map(|j| format!("x{j}")).chain(std::iter::once("y".to_string())).collect();
        if d == 0 || header.iter().zip(&expected).any(|(h, e)| h.trim() != e) {
            return Err(Error::Config(format!("dataset header must be x1,...,xd,y; got {header:?}")));
        }
        let (mut x, mut y) = (Vec::new(), Vec::new());
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != d + 1 {
                return Err(Error::Dimension { expected: d + 1, got: rec.len() });
            }
            for (j, field) in rec.iter().enumerate() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("not a number: '{field}'")))?;
                if j < d {
                    x.push(v);
                } else {
                    y.push(v);
                }
            }
        }
        Dataset::new(x, y, d, sigma2)
    }

    pub fn load_csv(path: impl AsRef<Path>, default_sigma2: f64) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_csv(f, default_sigma2)
    }
}

/// Draws `n` pairs from the true model. Each row draws its inputs then its
/// noise from the stream keyed by `seed`.
pub fn generate_dataset(spec: &RegressionSpec, n: usize, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::Config("n must be >= 1".into()));
    }
    let d = spec.input_dim;
    let sd = spec.sigma2.sqrt();
    let mut rng = stream_rng(seed, 0);
    let mut x = vec![0.0; n * d];
    let mut y = Vec::with_capacity(n);
    for row in x.chunks_exact_mut(d) {
        spec.input_law.sample(&mut rng, row);
        let eps: f64 = rng.sample(StandardNormal);
        y.push(spec.regression(row) + sd * eps);
    }
    Dataset::new(x, y, d, spec.sigma2)
}
