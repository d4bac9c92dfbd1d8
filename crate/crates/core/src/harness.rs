//! Replicated experiments and the operations behind the `mlplr` subcommands.
//! Every output file carries the configuration hash and base seed.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{profile_lr_curve, split_largest_unit, FitConfig, FitResult};
use crate::likelihood::{
    conditional_loglik, fd_check_derivatives, lr_statistic, FdSteps, Reparameterization,
};
use crate::limit_law::{
    check_h4, enumerate_partitions, gram_matrix_with, simulate_limit, GramMatrix, GramMode, H4Report, LimitOptions,
    LimitSample, ScoreBasis,
};
use crate::model::{generate_dataset, ConstraintBox, Dataset, MlpParams, RegressionSpec};
use crate::provenance::config_hash;
use crate::rng::{derive_seed, stream_rng};
use crate::selection::{PenaltySchedule, SelectionReport};
use crate::stats::{ks_distance, summarize, SummaryStats};

/// Default Monte-Carlo draws for Gram matrices.
pub const DEFAULT_GRAM_DRAWS: usize = 200_000;

const GRAM_TAG: u64 = 0x6772_616d;
const LIMIT_TAG: u64 = 0x6c69_6d69;
const DATA_TAG: u64 = 0x6461_7461;
const FIT_TAG: u64 = 0x0066_6974;

fn default_gram_draws() -> usize {
    DEFAULT_GRAM_DRAWS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub spec: RegressionSpec,
    #[serde(rename = "box", default)]
    pub bx: ConstraintBox,
    #[serde(default)]
    pub fit: FitConfig,
    pub schedule: PenaltySchedule,
    pub n_grid: Vec<usize>,
    pub k_grid: Vec<usize>,
    pub replicates: usize,
    pub base_seed: u64,
    /// Draws of the simulated limit per width in `k_grid` (0 disables).
    #[serde(default)]
    pub limit_draws: usize,
    #[serde(default = "default_gram_draws")]
    pub gram_draws: usize,
    #[serde(default)]
    pub limit: LimitOptions,
}

impl ExperimentConfig {
    pub fn desk(n_grid: Vec<usize>, k_grid: Vec<usize>, replicates: usize, base_seed: u64) -> Self {
        Self {
            spec: RegressionSpec::default(),
            bx: ConstraintBox::default(),
            fit: FitConfig::default(),
            schedule: PenaltySchedule::bic(1),
            n_grid,
            k_grid,
            replicates,
            base_seed,
            limit_draws: 0,
            gram_draws: DEFAULT_GRAM_DRAWS,
            limit: LimitOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.bx.validate()?;
        self.fit.validate()?;
        if self.n_grid.is_empty() || self.k_grid.is_empty() {
            return Err(Error::Config("n_grid and k_grid must be non-empty".into()));
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be >= 1".into()));
        }
        if self.n_grid.iter().any(|&n| n < 2) || self.k_grid.contains(&0) {
            return Err(Error::Config("sample sizes must be >= 2 and widths >= 1".into()));
        }
        if self.spec.input_dim != self.fit.warm_starts.first().map_or(self.spec.input_dim, |w| w.input_dim()) {
            return Err(Error::Config("warm starts do not match the input dimension".into()));
        }
        if let PenaltySchedule::BicLike { input_dim } = self.schedule {
            if input_dim != self.spec.input_dim {
                return Err(Error::Config("schedule input_dim differs from spec input_dim".into()));
            }
        }
        if let Some(m) = self.schedule.max_k() {
            if m < self.k_max() {
                return Err(Error::Config(format!("penalty table covers k <= {m}, need {}", self.k_max())));
            }
        }
        Ok(())
    }

    pub fn k_max(&self) -> usize {
        self.k_grid.iter().copied().max().unwrap_or(1)
    }

    pub fn hash(&self) -> String {
        config_hash(self)
    }

    /// `# sigma2=..;config_hash=..;base_seed=..`, without the `# `.
    pub fn provenance_line(&self) -> String {
        provenance_line(self.spec.sigma2, &self.hash(), self.base_seed)
    }
}

pub fn provenance_line(sigma2: f64, hash: &str, seed: u64) -> String {
    format!("sigma2={sigma2};config_hash={hash};base_seed={seed}")
}

/// One `(replicate, n, k)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub replicate: usize,
    pub n: usize,
    pub k: usize,
    pub sup_loglik: f64,
    pub two_lambda: f64,
    pub k_hat: usize,
    pub converged: bool,
    pub error: Option<String>,
}

/// `T_n(1..K)` for one `(replicate, n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub replicate: usize,
    pub n: usize,
    pub k_hat: usize,
    pub t_n: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateMatrix {
    pub cells: Vec<Cell>,
    pub selections: Vec<SelectionRow>,
}

impl ReplicateMatrix {
    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.error.is_some()).count()
    }

    /// `2λ` over replicates for one `(n, k)`, skipping failed cells.
    pub fn two_lambda(&self, n: usize, k: usize) -> Vec<f64> {
        self.cells
            .iter()
            .filter(|c| c.n == n && c.k == k && c.error.is_none())
            .map(|c| c.two_lambda)
            .collect()
    }

    /// `k̂` over replicates at sample size `n`.
    pub fn k_hats(&self, n: usize) -> Vec<usize> {
        self.selections.iter().filter(|s| s.n == n).map(|s| s.k_hat).collect()
    }
}

/// Warm starts embedding the truth: `θ⁰` itself at `k⁰` and repeated unit
/// splits of it at larger widths.
pub fn truth_warm_starts(spec: &RegressionSpec, k_max: usize) -> Vec<MlpParams> {
    let mut out = Vec::new();
    let mut theta = spec.theta0.clone();
    while theta.k() <= k_max {
        out.push(theta.clone());
        theta = split_largest_unit(&theta);
    }
    out
}

fn dataset_for(spec: &RegressionSpec, n: usize, seed: u64) -> Result<Dataset> {
    let data = generate_dataset(spec, n, seed)?;
    Ok(if data.sigma2 > 0.0 { data } else { data.with_sigma2(1.0) })
}

fn likelihood_spec(spec: &RegressionSpec) -> RegressionSpec {
    if spec.sigma2 > 0.0 {
        spec.clone()
    } else {
        RegressionSpec { sigma2: 1.0, ..spec.clone() }
    }
}

struct CellBatch {
    cells: Vec<Cell>,
    selection: Option<SelectionRow>,
}

fn run_one(config: &ExperimentConfig, replicate: usize, n: usize) -> CellBatch {
    let rep_seed = derive_seed(config.base_seed, replicate as u64);
    let k_max = config.k_max();
    let failed = |msg: String| CellBatch {
        cells: config
            .k_grid
            .iter()
            .map(|&k| Cell {
                replicate,
                n,
                k,
                sup_loglik: f64::NAN,
                two_lambda: f64::NAN,
                k_hat: 0,
                converged: false,
                error: Some(msg.clone()),
            })
            .collect(),
        selection: None,
    };
    let data = match dataset_for(&config.spec, n, derive_seed(rep_seed, DATA_TAG ^ n as u64)) {
        Ok(d) => d,
        Err(e) => return failed(e.to_string()),
    };
    let mut fit = config.fit.clone();
    fit.seed = derive_seed(rep_seed, FIT_TAG ^ n as u64);
    fit.warm_starts.extend(truth_warm_starts(&config.spec, k_max));
    let profile = match profile_lr_curve(&data, k_max, &config.bx, &fit) {
        Ok(p) => p,
        Err(e) => return failed(e.to_string()),
    };
    let suprema: Vec<(f64, bool)> = profile.iter().map(|e| (e.sup_loglik, e.fit.converged)).collect();
    let report = match SelectionReport::from_suprema(&suprema, n, &config.schedule) {
        Ok(r) => r,
        Err(e) => return failed(e.to_string()),
    };
    let lspec = likelihood_spec(&config.spec);
    let cells = config
        .k_grid
        .iter()
        .map(|&k| {
            let entry = &profile[k - 1];
            let (two_lambda, error) = match lr_statistic(entry.sup_loglik, &lspec, &data) {
                Ok(v) => (v, None),
                Err(e) => (f64::NAN, Some(e.to_string())),
            };
            Cell {
                replicate,
                n,
                k,
                sup_loglik: entry.sup_loglik,
                two_lambda,
                k_hat: report.k_hat,
                converged: entry.fit.converged,
                error,
            }
        })
        .collect();
    let selection = SelectionRow { replicate, n, k_hat: report.k_hat, t_n: report.per_k.iter().map(|e| e.t_n).collect() };
    CellBatch { cells, selection: Some(selection) }
}

/// Fits every `(replicate, n)` pair and records `2λ` for each `k` in the grid
/// plus the selected width. Cell failures are recorded, never fatal.
pub fn run_replicates(config: &ExperimentConfig) -> Result<ReplicateMatrix> {
    config.validate()?;
    let jobs: Vec<(usize, usize)> =
        (0..config.replicates).flat_map(|r| config.n_grid.iter().map(move |&n| (r, n))).collect();
    let batches: Vec<CellBatch> = jobs.par_iter().map(|&(r, n)| run_one(config, r, n)).collect();
    let mut cells = Vec::new();
    let mut selections = Vec::new();
    for b in batches {
        cells.extend(b.cells);
        selections.extend(b.selection);
    }
    Ok(ReplicateMatrix { cells, selections })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub n: usize,
    pub k: usize,
    pub two_lambda: SummaryStats,
    pub failed: usize,
    pub not_converged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KHatFrequency {
    pub n: usize,
    /// Entry `j` is the fraction of replicates with `k̂ = j + 1`.
    pub frequencies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitSummary {
    pub k: usize,
    pub stats: SummaryStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub config_hash: String,
    pub base_seed: u64,
    pub sigma2: f64,
    pub cells: Vec<CellSummary>,
    pub k_hat: Vec<KHatFrequency>,
    pub limit: Vec<LimitSummary>,
}

/// Per-cell summaries; a cell's KS distance is against the limit sample of
/// the same width when one is supplied.
pub fn summarize_experiment(
    config: &ExperimentConfig,
    matrix: &ReplicateMatrix,
    limits: &[LimitSample],
) -> Result<ExperimentSummary> {
    let mut cells = Vec::new();
    for &n in &config.n_grid {
        for &k in &config.k_grid {
            let sample = matrix.two_lambda(n, k);
            let all: Vec<&Cell> = matrix.cells.iter().filter(|c| c.n == n && c.k == k).collect();
            if sample.is_empty() {
                continue;
            }
            let mut stats = summarize(&sample)?;
            if let Some(l) = limits.iter().find(|l| l.k == k) {
                stats.ks_distance = Some(ks_distance(&sample, &l.values)?);
            }
            cells.push(CellSummary {
                n,
                k,
                two_lambda: stats,
                failed: all.iter().filter(|c| c.error.is_some()).count(),
                not_converged: all.iter().filter(|c| !c.converged).count(),
            });
        }
    }
    let k_max = config.k_max();
    let k_hat = config
        .n_grid
        .iter()
        .map(|&n| {
            let ks = matrix.k_hats(n);
            let total = ks.len().max(1) as f64;
            KHatFrequency { n, frequencies: (1..=k_max).map(|k| ks.iter().filter(|&&v| v == k).count() as f64 / total).collect() }
        })
        .collect();
    let limit = limits
        .iter()
        .map(|l| Ok(LimitSummary { k: l.k, stats: summarize(&l.values)? }))
        .collect::<Result<_>>()?;
    Ok(ExperimentSummary {
        config_hash: config.hash(),
        base_seed: config.base_seed,
        sigma2: config.spec.sigma2,
        cells,
        k_hat,
        limit,
    })
}

pub fn write_replicates_csv<W: Write>(matrix: &ReplicateMatrix, comment: &str, mut out: W) -> Result<()> {
    writeln!(out, "# {comment}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["replicate", "n", "k", "sup_loglik", "two_lambda", "k_hat", "converged"])?;
    for c in &matrix.cells {
        w.write_record([
            c.replicate.to_string(),
            c.n.to_string(),
            c.k.to_string(),
            c.sup_loglik.to_string(),
            c.two_lambda.to_string(),
            c.k_hat.to_string(),
            (c.converged && c.error.is_none()).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_selection_csv<W: Write>(matrix: &ReplicateMatrix, k_max: usize, comment: &str, mut out: W) -> Result<()> {
    writeln!(out, "# {comment}")?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["replicate".to_string(), "n".into(), "k_hat".into()];
    header.extend((1..=k_max).map(|k| format!("T_{k}")));
    w.write_record(&header)?;
    for s in &matrix.selections {
        let mut rec = vec![s.replicate.to_string(), s.n.to_string(), s.k_hat.to_string()];
        rec.extend(s.t_n.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Files written by [`run_experiment`].
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub matrix: ReplicateMatrix,
    pub summary: ExperimentSummary,
    pub files: Vec<PathBuf>,
}

/// Replicates, optional limit samples and summaries, written to `out_dir`
/// as `replicates.csv`, `selection.csv`, `summary.json` (and `limit_k{k}.csv`).
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentOutput> {
    config.validate()?;
    fs::create_dir_all(out_dir)?;
    let matrix = run_replicates(config)?;
    let mut limits = Vec::new();
    let comment = config.provenance_line();
    let mut files = Vec::new();
    if config.limit_draws > 0 {
        let gram = experiment_gram(config)?;
        for &k in &config.k_grid {
            if k < config.spec.true_width() {
                continue;
            }
            let sample = simulate_limit(
                &config.spec,
                k,
                &gram,
                config.limit_draws,
                derive_seed(config.base_seed, LIMIT_TAG),
                &config.limit,
            )?;
            let path = out_dir.join(format!("limit_k{k}.csv"));
            sample.write_csv(fs::File::create(&path)?, Some(&comment))?;
            files.push(path);
            limits.push(sample);
        }
    }
    let summary = summarize_experiment(config, &matrix, &limits)?;
    let path = out_dir.join("replicates.csv");
    write_replicates_csv(&matrix, &comment, fs::File::create(&path)?)?;
    files.push(path);
    let path = out_dir.join("selection.csv");
    write_selection_csv(&matrix, config.k_max(), &comment, fs::File::create(&path)?)?;
    files.push(path);
    let path = out_dir.join("summary.json");
    fs::write(&path, serde_json::to_string_pretty(&summary)?)?;
    files.push(path);
    Ok(ExperimentOutput { matrix, summary, files })
}

fn experiment_gram(config: &ExperimentConfig) -> Result<GramMatrix> {
    let basis = basis_for(&config.spec, &config.bx, &config.limit);
    gram_matrix_with(&config.spec, basis, GramMode::MonteCarlo, config.gram_draws, derive_seed(config.base_seed, GRAM_TAG))
}

/// Core basis, plus the free-unit grid when the extended index set is on.
pub fn basis_for(spec: &RegressionSpec, bx: &ConstraintBox, opt: &LimitOptions) -> ScoreBasis {
    let basis = ScoreBasis::new(spec);
    if opt.extended_index_set {
        basis.with_weight_grid(bx, opt.extra_points_per_axis, opt.extra_radius)
    } else {
        basis
    }
}

/// `2λ` at one width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrReport {
    pub k: usize,
    pub n: usize,
    pub sup_loglik: f64,
    pub true_loglik: f64,
    pub two_lambda: f64,
    pub converged: bool,
}

/// Fits width `k` (warm-started from the truth) and forms `2λ`.
pub fn lr_report(data: &Dataset, spec: &RegressionSpec, k: usize, bx: &ConstraintBox, config: &FitConfig) -> Result<LrReport> {
    let lspec = likelihood_spec(spec);
    let mut cfg = config.clone();
    cfg.warm_starts.extend(truth_warm_starts(spec, k));
    let profile = profile_lr_curve(data, k, bx, &cfg)?;
    let fit: &FitResult = &profile[k - 1].fit;
    Ok(LrReport {
        k,
        n: data.len(),
        sup_loglik: fit.loglik,
        true_loglik: conditional_loglik(&lspec.theta0, data)?,
        two_lambda: lr_statistic(fit.loglik, &lspec, data)?,
        converged: fit.converged,
    })
}

/// Finite-difference validation of the second-order derivative catalog over
/// random observations and random base points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub draws: usize,
    pub k: usize,
    pub steps: FdSteps,
    pub max_first_rel: f64,
    pub max_second_rel: f64,
    pub worst_first_draw: usize,
    pub worst_second_draw: usize,
}

/// Each draw picks a grouping of `k` fitted units, positive mixing weights
/// and an observation `z` from the true model.
pub fn run_gradcheck(spec: &RegressionSpec, k: usize, draws: usize, seed: u64, steps: FdSteps) -> Result<GradcheckReport> {
    let lspec = likelihood_spec(spec);
    let partitions = enumerate_partitions(k, spec.true_width())?;
    let data = generate_dataset(&lspec, draws.max(1), seed)?;
    let mut rng = stream_rng(seed, 1);
    let mut report = GradcheckReport {
        draws,
        k,
        steps,
        max_first_rel: 0.0,
        max_second_rel: 0.0,
        worst_first_draw: 0,
        worst_second_draw: 0,
    };
    for (i, (x, y)) in data.rows().take(draws).enumerate() {
        let part = &partitions[rng.random_range(0..partitions.len())];
        let mut mixing = vec![0.0; part.used_units()];
        for g in 0..part.k0() {
            let raw: Vec<f64> = part.group(g).map(|_| rng.random_range(0.05..1.0)).collect();
            let total: f64 = raw.iter().sum();
            for (j, r) in part.group(g).zip(raw) {
                mixing[j] = r / total;
            }
        }
        let base = Reparameterization::base_point(&lspec, part, mixing)?;
        let r = fd_check_derivatives(&base, &lspec, x, y, steps)?;
        if r.max_first_rel > report.max_first_rel {
            report.max_first_rel = r.max_first_rel;
            report.worst_first_draw = i;
        }
        if r.max_second_rel > report.max_second_rel {
            report.max_second_rel = r.max_second_rel;
            report.worst_second_draw = i;
        }
    }
    Ok(report)
}

/// Linear-independence report for both Gram estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct H4Summary {
    pub monte_carlo: H4Report,
    pub gauss_hermite: Option<H4Report>,
    pub mc_draws: usize,
    pub seed: u64,
    pub agree: bool,
}

pub fn run_check_h4(spec: &RegressionSpec, mc_draws: usize, seed: u64) -> Result<H4Summary> {
    let mc = gram_matrix_with(spec, ScoreBasis::new(spec), GramMode::MonteCarlo, mc_draws, seed)?;
    let monte_carlo = check_h4(&mc);
    let gauss_hermite = if spec.input_dim == 1 {
        Some(check_h4(&gram_matrix_with(spec, ScoreBasis::new(spec), GramMode::GaussHermite, 0, seed)?))
    } else {
        None
    };
    let agree = gauss_hermite.as_ref().is_none_or(|g| g.pass == monte_carlo.pass);
    Ok(H4Summary { monte_carlo, gauss_hermite, mc_draws, seed, agree })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(spec: RegressionSpec) -> ExperimentConfig {
        let mut c = ExperimentConfig::desk(vec![100], vec![1], 1, 5);
        c.spec = spec;
        c.fit.n_starts = 2;
        c
    }

    #[test]
    fn noiseless_cell_has_no_lr() {
        let c = tiny(RegressionSpec { sigma2: 0.0, ..Default::default() });
        let m = run_replicates(&c).unwrap();
        assert_eq!(m.cells.len(), 1);
        assert!(m.cells[0].error.is_none());
        assert!(m.cells[0].two_lambda.abs() <= 1e-6, "{:?}", m.cells[0]);
    }

    #[test]
    fn replicates_are_deterministic() {
        let mut c = tiny(RegressionSpec::default());
        c.k_grid = vec![1, 2];
        c.replicates = 2;
        let a = run_replicates(&c).unwrap();
        let b = run_replicates(&c).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.cells.len(), 4);
        assert_eq!(a.selections.len(), 2);
    }

    #[test]
    fn config_validation() {
        let mut c = tiny(RegressionSpec::default());
        c.n_grid.clear();
        assert!(c.validate().is_err());
        let mut c = tiny(RegressionSpec::default());
        c.replicates = 0;
        assert!(c.validate().is_err());
        let json = serde_json::to_value(tiny(RegressionSpec::default())).unwrap();
        assert!(json.get("box").is_some());
        let back: ExperimentConfig = serde_json::from_value(json).unwrap();
        assert_eq!(back, tiny(RegressionSpec::default()));
    }

    #[test]
    fn truth_embeddings_compute_the_truth() {
        let spec = RegressionSpec::default();
        let w = truth_warm_starts(&spec, 3);
        assert_eq!(w.iter().map(MlpParams::k).collect::<Vec<_>>(), vec![1, 2, 3]);
        for p in &w {
            assert!((p.forward(&[0.4]).unwrap() - spec.regression(&[0.4])).abs() < 1e-15);
        }
    }
}
