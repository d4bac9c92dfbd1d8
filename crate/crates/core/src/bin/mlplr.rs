use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;

use mlp_lr::harness::{self, provenance_line, ExperimentConfig};
use mlp_lr::likelihood::FdSteps;
use mlp_lr::limit_law::{gram_matrix_with, GramMode, LimitOptions};
use mlp_lr::provenance::config_hash;
use mlp_lr::{
    fit_mle, generate_dataset, select_architecture, simulate_limit, ConstraintBox, Dataset, Error, FitConfig,
    PenaltySchedule, RegressionSpec, Result,
};

#[derive(Parser)]
#[command(name = "mlplr", version, about = "Likelihood-ratio tests and width selection for one-hidden-layer MLP regression")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Adds free-unit columns to the limit index set (limit only).
    #[arg(long, global = true)]
    extended_index_set: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    MonteCarlo,
    GaussHermite,
}

impl From<Mode> for GramMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::MonteCarlo => GramMode::MonteCarlo,
            Mode::GaussHermite => GramMode::GaussHermite,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Spec JSON to dataset CSV.
    Gen {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value = "data.csv")]
        output: String,
    },
    /// Dataset and width to FitResult JSON.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long = "box")]
        bx: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "fit.json")]
        output: String,
    },
    /// Dataset and spec to 2λ at width k.
    Lr {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        k: usize,
        #[arg(long = "box")]
        bx: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "lr.json")]
        output: String,
    },
    /// Dataset and penalty schedule to SelectionReport JSON.
    Select {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        k_max: usize,
        #[arg(long)]
        schedule: Option<PathBuf>,
        #[arg(long = "box")]
        bx: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "selection.json")]
        output: String,
    },
    /// Spec and width to a LimitSample CSV.
    Limit {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 10_000)]
        draws: usize,
        #[arg(long, default_value_t = harness::DEFAULT_GRAM_DRAWS)]
        gram_draws: usize,
        #[arg(long, value_enum, default_value = "monte-carlo")]
        gram_mode: Mode,
        #[arg(long)]
        options: Option<PathBuf>,
        #[arg(long = "box")]
        bx: Option<PathBuf>,
        #[arg(long, default_value = "limit.csv")]
        output: String,
    },
    /// Spec to the Gram eigenvalue report.
    CheckH4 {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = harness::DEFAULT_GRAM_DRAWS)]
        gram_draws: usize,
        #[arg(long, default_value = "h4.json")]
        output: String,
    },
    /// Spec to the finite-difference derivative report.
    Gradcheck {
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Fitted width of the random base points (default k⁰ + 1).
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 100)]
        draws: usize,
        #[arg(long, default_value = "gradcheck.json")]
        output: String,
    },
    /// ExperimentConfig JSON to replicates.csv, selection.csv and summary.json.
    Experiment {
        #[arg(long)]
        config: PathBuf,
    },
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn read_or_default<T: DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T> {
    path.as_deref().map_or_else(|| Ok(T::default()), read_json)
}

fn write_json<T: serde::Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(value)?)?;
    Ok(path)
}

/// JSON output with provenance fields alongside the payload.
#[derive(serde::Serialize)]
struct Stamped<'a, T: serde::Serialize> {
    config_hash: String,
    base_seed: u64,
    #[serde(flatten)]
    payload: &'a T,
}

fn stamped<'a, T: serde::Serialize>(payload: &'a T, hash_of: &impl serde::Serialize, seed: u64) -> Stamped<'a, T> {
    Stamped { config_hash: config_hash(hash_of), base_seed: seed, payload }
}

fn load_data(path: &Path) -> Result<Dataset> {
    Dataset::load_csv(path, 1.0)
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    if let Some(t) = g.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let out = &g.out_dir;
    match &cli.command {
        Command::Gen { spec, n, output } => {
            let spec: RegressionSpec = read_or_default(spec)?;
            let data = generate_dataset(&spec, *n, g.seed)?;
            fs::create_dir_all(out)?;
            let path = out.join(output);
            data.save_csv(&path, Some(&provenance_line(spec.sigma2, &config_hash(&spec), g.seed)))?;
            println!("{}", path.display());
        }
        Command::Fit { data, k, bx, config, output } => {
            let d = load_data(data)?;
            let bx: ConstraintBox = read_or_default(bx)?;
            let mut cfg: FitConfig = read_or_default(config)?;
            cfg.seed = g.seed;
            let fit = fit_mle(&d, *k, &bx, &cfg)?;
            let path = write_json(out, output, &stamped(&fit, &(&bx, &cfg, k), g.seed))?;
            println!("loglik={} converged={} -> {}", fit.loglik, fit.converged, path.display());
            if !fit.converged {
                return Err(Error::Optimizer("no start met the gradient tolerance".into()));
            }
        }
        Command::Lr { data, spec, k, bx, config, output } => {
            let d = load_data(data)?;
            let spec: RegressionSpec = read_or_default(spec)?;
            let bx: ConstraintBox = read_or_default(bx)?;
            let mut cfg: FitConfig = read_or_default(config)?;
            cfg.seed = g.seed;
            let r = harness::lr_report(&d, &spec, *k, &bx, &cfg)?;
            let path = write_json(out, output, &stamped(&r, &(&spec, &bx, &cfg, k), g.seed))?;
            println!("two_lambda={} -> {}", r.two_lambda, path.display());
            if !r.converged {
                return Err(Error::Optimizer("no start met the gradient tolerance".into()));
            }
        }
        Command::Select { data, k_max, schedule, bx, config, output } => {
            let d = load_data(data)?;
            let schedule: PenaltySchedule = match schedule {
                Some(p) => read_json(p)?,
                None => PenaltySchedule::bic(d.input_dim),
            };
            let bx: ConstraintBox = read_or_default(bx)?;
            let mut cfg: FitConfig = read_or_default(config)?;
            cfg.seed = g.seed;
            let r = select_architecture(&d, *k_max, &bx, &cfg, &schedule)?;
            let path = write_json(out, output, &stamped(&r, &(&schedule, &bx, &cfg, k_max), g.seed))?;
            println!("k_hat={} -> {}", r.k_hat, path.display());
            if !r.all_converged() {
                return Err(Error::Optimizer("some widths did not converge".into()));
            }
        }
        Command::Limit { spec, k, draws, gram_draws, gram_mode, options, bx, output } => {
            let spec: RegressionSpec = read_or_default(spec)?;
            let bx: ConstraintBox = read_or_default(bx)?;
            let mut opt: LimitOptions = read_or_default(options)?;
            opt.extended_index_set |= g.extended_index_set;
            let basis = harness::basis_for(&spec, &bx, &opt);
            let gram = gram_matrix_with(&spec, basis, (*gram_mode).into(), *gram_draws, g.seed)?;
            let sample = simulate_limit(&spec, *k, &gram, *draws, g.seed, &opt)?;
            fs::create_dir_all(out)?;
            let path = out.join(output);
            let hash = config_hash(&(&spec, &opt, k, draws, gram_draws));
            sample.write_csv(fs::File::create(&path)?, Some(&provenance_line(spec.sigma2, &hash, g.seed)))?;
            let mean = sample.values.iter().sum::<f64>() / sample.values.len().max(1) as f64;
            println!("mean={mean} -> {}", path.display());
        }
        Command::CheckH4 { spec, gram_draws, output } => {
            let spec: RegressionSpec = read_or_default(spec)?;
            let r = harness::run_check_h4(&spec, *gram_draws, g.seed)?;
            let path = write_json(out, output, &stamped(&r, &(&spec, gram_draws), g.seed))?;
            println!(
                "min_eigenvalue={} raw_min_eigenvalue={} pass={} -> {}",
                r.monte_carlo.min_eigenvalue,
                r.monte_carlo.raw_min_eigenvalue,
                r.monte_carlo.pass,
                path.display()
            );
        }
        Command::Gradcheck { spec, k, draws, output } => {
            let spec: RegressionSpec = read_or_default(spec)?;
            let k = k.unwrap_or(spec.true_width() + 1);
            let r = harness::run_gradcheck(&spec, k, *draws, g.seed, FdSteps::default())?;
            let path = write_json(out, output, &stamped(&r, &(&spec, k, draws), g.seed))?;
            println!("max_first_rel={} max_second_rel={} -> {}", r.max_first_rel, r.max_second_rel, path.display());
        }
        Command::Experiment { config } => {
            let mut cfg: ExperimentConfig = read_json(config)?;
            cfg.limit.extended_index_set |= g.extended_index_set;
            let o = harness::run_experiment(&cfg, out)?;
            for f in &o.files {
                println!("{}", f.display());
            }
            let failed = o.matrix.failed_cells();
            if failed > 0 {
                return Err(Error::Optimizer(format!("{failed} cells failed")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
