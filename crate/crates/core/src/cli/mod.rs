//! `quenchnet` command-line driver.
//!
//! Exit codes: 0 success, 1 domain or convergence failure, 2 I/O or usage error.

pub mod config;
pub mod raw;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::calibration::{build_calibration, CalibrationError, CalibrationTable, CurveBundle};
use crate::dataset::{
    self, read_dataset, read_rows, write_dataset, Dataset, DatasetError, MismatchSpec,
    DEFAULT_RANGE, DEFAULT_SAMPLES, DEFAULT_TRAIN_FRACTION,
};
use crate::evaluation::{
    self, ae_per_observation, mae_of, profile_from_ae, write_ae_csv, write_profile_csv, EvalError,
    SweepGrid,
};
use crate::network::{
    self, AdamState, ModelFile, NetworkError, NetworkModel, NetworkSpec, TrainConfig,
    DEFAULT_OUTPUT_SCALE,
};
use config::{pick, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Domain(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Domain(_) => 1,
            CliError::Usage(_) | CliError::Io(_) | CliError::Parse(_) => 2,
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io { .. } => CliError::Io(e.to_string()),
            DatasetError::Parse { .. } | DatasetError::Meta { .. } => {
                CliError::Parse(e.to_string())
            }
            _ => CliError::Domain(e.to_string()),
        }
    }
}

impl From<CalibrationError> for CliError {
    fn from(e: CalibrationError) -> Self {
        match e {
            CalibrationError::Io { .. } => CliError::Io(e.to_string()),
            CalibrationError::Json { .. }
            | CalibrationError::Version { .. }
            | CalibrationError::Shape => CliError::Parse(e.to_string()),
            _ => CliError::Domain(e.to_string()),
        }
    }
}

impl From<NetworkError> for CliError {
    fn from(e: NetworkError) -> Self {
        match e {
            NetworkError::Io { .. } => CliError::Io(e.to_string()),
            NetworkError::Json { .. } | NetworkError::Version { .. } | NetworkError::Shape(_) => {
                CliError::Parse(e.to_string())
            }
            NetworkError::Spec(_) | NetworkError::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Domain(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Network(n) => n.into(),
            EvalError::Io { .. } => CliError::Io(e.to_string()),
            EvalError::Grid(_) | EvalError::Bins(_) => CliError::Usage(e.to_string()),
            _ => CliError::Domain(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "quenchnet",
    version,
    about = "Oxygen-sensor calibration and neural-network inversion"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Normalize raw tan θ readings into per-temperature quench-curve bundles
    Ingest {
        /// Raw CSV: frequency_hz,temperature_c,o2_percent_air,tan_theta
        raw: PathBuf,
        /// Directory receiving curves_<T>C.json files
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Fit the two-site model at every frequency and spline the parameters
    Calibrate {
        /// Curve bundle written by `ingest`
        curves: PathBuf,
        /// Calibration JSON to write
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic (or model-mismatched) dataset from a calibration
    Generate(GenerateArgs),
    /// Split a dataset, train one network and report MAE on both parts
    Train(TrainArgs),
    /// Score a model on a dataset: AE table, concentration profile, summary
    Evaluate(EvaluateArgs),
    /// Train every architecture of a layer × neuron grid
    Sweep(SweepArgs),
    /// Predict concentration from ratio vectors
    Predict(PredictArgs),
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// JSON run configuration; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Calibration JSON written by `calibrate`
    calibration: PathBuf,
    /// Dataset CSV to write (metadata goes to <name>.meta.json)
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of observations
    #[arg(long)]
    samples: Option<usize>,
    /// Lower label bound, % air
    #[arg(long)]
    c_min: Option<f64>,
    /// Upper label bound (exclusive), % air
    #[arg(long)]
    c_max: Option<f64>,
    /// Frequency grid in Hz; defaults to the calibration knots
    #[arg(long, value_delimiter = ',')]
    frequencies_hz: Option<Vec<f64>>,
    /// Emit a model-mismatch test set at explicit concentrations instead
    #[arg(long)]
    mismatch: bool,
    /// Mismatch concentrations, % air
    #[arg(long, value_delimiter = ',')]
    concentrations: Option<Vec<f64>>,
    /// Mismatch ratio noise
    #[arg(long)]
    noise_sigma: Option<f64>,
    /// Mismatch bias; defaults to 2 % air of error at 100 % air
    #[arg(long, allow_negative_numbers = true)]
    curvature_bias: Option<f64>,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Debug, Args)]
struct TrainOptions {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Cost-trace interval, epochs
    #[arg(long)]
    log_every: Option<usize>,
    /// Fraction of observations used for training
    #[arg(long)]
    train_fraction: Option<f64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Dataset CSV
    data: PathBuf,
    /// Model JSON to write
    #[arg(long)]
    out: PathBuf,
    /// Hidden layers
    #[arg(long)]
    layers: Option<usize>,
    /// Neurons per hidden layer
    #[arg(long)]
    neurons: Option<usize>,
    /// Write the cost trace as epoch,cost CSV
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    train: TrainOptions,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Model JSON
    #[arg(long)]
    model: PathBuf,
    /// Dataset CSV
    data: PathBuf,
    /// Directory receiving ae.csv, profile.csv and summary.txt
    #[arg(long)]
    out_dir: PathBuf,
    /// Profile bin edges, % air
    #[arg(long, value_delimiter = ',', default_value = "0,20,40,60,80,100,110")]
    bins: Vec<f64>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Dataset CSV, split into train and dev like `train` does
    data: PathBuf,
    /// Optional test dataset (for example a mismatch set)
    #[arg(long)]
    test: Option<PathBuf>,
    /// Report CSV to write
    #[arg(long)]
    out: PathBuf,
    /// Aligned-text summary to write
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Directory receiving one model per trial
    #[arg(long)]
    models_dir: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    layer_counts: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    neuron_counts: Option<Vec<usize>>,
    /// Concurrent trials
    #[arg(long)]
    workers: Option<usize>,
    /// Train for 10⁵ epochs instead of the CI-scale default
    #[arg(long)]
    paper_scale: bool,
    /// Write 0 in the duration column so the report depends only on inputs
    #[arg(long)]
    omit_timing: bool,
    #[command(flatten)]
    train: TrainOptions,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Debug, Args)]
struct PredictArgs {
    /// Model JSON
    #[arg(long)]
    model: PathBuf,
    /// Ratio vector, one value per frequency
    #[arg(
        value_delimiter = ',',
        allow_negative_numbers = true,
        conflicts_with = "csv"
    )]
    ratios: Vec<f64>,
    /// CSV of ratio rows (dataset files are accepted too)
    #[arg(long)]
    csv: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Ingest { raw, out_dir } => cmd_ingest(&raw, &out_dir),
        Command::Calibrate { curves, out } => cmd_calibrate(&curves, &out),
        Command::Generate(a) => cmd_generate(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Predict(a) => cmd_predict(&a),
    }
}

fn require_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Io(format!("{}: no such file", path.display())))
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

fn cmd_ingest(raw_path: &Path, out_dir: &Path) -> Result<(), CliError> {
    require_file(raw_path)?;
    let bundles = raw::normalize(&raw::read_raw(raw_path)?)?;
    create_dir(out_dir)?;
    for b in &bundles {
        // fail here rather than in `calibrate` on malformed curves
        b.to_curves()?;
        let path = out_dir.join(raw::bundle_file_name(b.temperature_c));
        b.save(&path)?;
        println!(
            "{}: {} curves at {} °C",
            path.display(),
            b.curves.len(),
            b.temperature_c
        );
    }
    Ok(())
}

fn cmd_calibrate(curves_path: &Path, out: &Path) -> Result<(), CliError> {
    require_file(curves_path)?;
    let curves = CurveBundle::load(curves_path)?.to_curves()?;
    let table = build_calibration(&curves)?;
    table.save(out)?;
    println!(
        "{:>12} {:>10} {:>12} {:>12} {:>10}",
        "freq_hz", "f", "ksv1", "ksv2", "converged"
    );
    for k in table.knots() {
        println!(
            "{:>12.3} {:>10.6} {:>12.6e} {:>12.6e} {:>10}",
            k.omega.hz(),
            k.params.f(),
            k.params.ksv1(),
            k.params.ksv2(),
            k.converged
        );
    }
    if !table.all_converged() {
        return Err(CliError::Domain(format!(
            "fit did not converge at every frequency; calibration written to {}",
            out.display()
        )));
    }
    Ok(())
}

fn seed_of(flag: Option<u64>, cfg: &RunConfig) -> Result<u64, CliError> {
    flag.or(cfg.seed).ok_or_else(|| {
        CliError::Usage("a seed is required: pass --seed or set \"seed\" in --config".into())
    })
}

fn cmd_generate(a: &GenerateArgs) -> Result<(), CliError> {
    let cfg = RunConfig::load_opt(a.config.config.as_deref())?;
    let seed = seed_of(a.seed, &cfg)?;
    require_file(&a.calibration)?;
    let table = CalibrationTable::load(&a.calibration)?;
    let grid = a
        .frequencies_hz
        .clone()
        .or(cfg.generate.frequencies_hz.clone())
        .unwrap_or_else(|| table.frequencies().iter().map(|w| w.hz()).collect());
    let ds = if a.mismatch {
        let concentrations = a
            .concentrations
            .clone()
            .or(cfg.mismatch.concentrations.clone())
            .unwrap_or_else(|| crate::fixture::CONCENTRATIONS.to_vec());
        let defaults = MismatchSpec::default_for(&table, &grid)?;
        let spec = MismatchSpec {
            ratio_noise_sigma: pick(
                a.noise_sigma,
                cfg.mismatch.ratio_noise_sigma,
                defaults.ratio_noise_sigma,
            ),
            curvature_bias: pick(
                a.curvature_bias,
                cfg.mismatch.curvature_bias,
                defaults.curvature_bias,
            ),
        };
        dataset::generate_mismatch_test(&table, &grid, &concentrations, &spec, seed)?
    } else {
        let m = pick(a.samples, cfg.generate.samples, DEFAULT_SAMPLES);
        let lo = pick(a.c_min, cfg.generate.c_min, DEFAULT_RANGE.0);
        let hi = pick(a.c_max, cfg.generate.c_max, DEFAULT_RANGE.1);
        dataset::generate_synthetic(&table, &grid, m, (lo, hi), seed)?
    };
    write_dataset(&ds, &a.out)?;
    println!(
        "{}: {} observations, {} frequencies",
        a.out.display(),
        ds.len(),
        ds.input_dim()
    );
    Ok(())
}

fn train_config(
    o: &TrainOptions,
    cfg: &RunConfig,
    default_epochs: usize,
) -> Result<TrainConfig, CliError> {
    let d = TrainConfig::default();
    let t = &cfg.train;
    let out = TrainConfig {
        learning_rate: pick(o.learning_rate, t.learning_rate, d.learning_rate),
        epochs: pick(o.epochs, t.epochs, default_epochs),
        beta1: pick(o.beta1, t.beta1, d.beta1),
        beta2: pick(o.beta2, t.beta2, d.beta2),
        epsilon: pick(o.epsilon, t.epsilon, d.epsilon),
        seed: seed_of(o.seed, cfg)?,
        log_every: pick(o.log_every, t.log_every, d.log_every),
    };
    out.validate()?;
    Ok(out)
}

fn load_split(
    path: &Path,
    o: &TrainOptions,
    cfg: &RunConfig,
    seed: u64,
) -> Result<(Dataset, Dataset), CliError> {
    require_file(path)?;
    let ds = read_dataset(path)?;
    let fraction = pick(
        o.train_fraction,
        cfg.split.train_fraction,
        DEFAULT_TRAIN_FRACTION,
    );
    Ok(dataset::split(&ds, fraction, seed)?)
}

fn cmd_train(a: &TrainArgs) -> Result<(), CliError> {
    let cfg = RunConfig::load_opt(a.config.config.as_deref())?;
    let tc = train_config(&a.train, &cfg, TrainConfig::default().epochs)?;
    let (train, dev) = load_split(&a.data, &a.train, &cfg, tc.seed)?;
    let spec = NetworkSpec {
        input_dim: train.input_dim(),
        hidden_layers: pick(a.layers, cfg.network.hidden_layers, 3),
        neurons_per_layer: pick(a.neurons, cfg.network.neurons_per_layer, 50),
        output_scale: pick(None, cfg.network.output_scale, DEFAULT_OUTPUT_SCALE),
    };
    spec.validate()?;
    let mut model = NetworkModel::init(spec, tc.seed)?;
    let mut state = AdamState::new(spec)?;
    let report = network::train_from(&mut model, &mut state, &train, &tc)?;
    ModelFile::new(&model, Some(&state), Some(&tc)).save(&a.out)?;
    if let Some(path) = &a.trace {
        let mut text = String::from("epoch,cost\n");
        for (e, j) in &report.cost_trace {
            text.push_str(&format!("{e},{j}\n"));
        }
        write_text(path, &text)?;
    }
    let mae_train = evaluation::mae(&model, &train)?;
    let mae_dev = evaluation::mae(&model, &dev)?;
    println!("MAE_train {mae_train:.6} % air");
    println!("MAE_dev   {mae_dev:.6} % air");
    println!(
        "final cost {:.6e} after {} epochs",
        report.final_cost, tc.epochs
    );
    Ok(())
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<(), CliError> {
    require_file(&a.model)?;
    require_file(&a.data)?;
    let model = NetworkModel::load(&a.model)?;
    let ds = read_dataset(&a.data)?;
    let ae = ae_per_observation(&model, &ds)?;
    let bins = profile_from_ae(&ae, &a.bins)?;
    create_dir(&a.out_dir)?;
    write_ae_csv(&ae, &a.out_dir.join("ae.csv"))?;
    write_profile_csv(&bins, &a.out_dir.join("profile.csv"))?;

    let max_ae = ae.iter().map(|r| r.ae).fold(0.0, f64::max);
    let mut summary = format!(
        "observations {}\nMAE {:.6} % air\nmax AE {:.6} % air\n\n{:>8} {:>8} {:>6} {:>10} {:>10} {:>10}\n",
        ae.len(),
        mae_of(&ae),
        max_ae,
        "bin_lo",
        "bin_hi",
        "count",
        "mean_ae",
        "median_ae",
        "max_ae"
    );
    for b in &bins {
        let (mean, med, max) = b.stats.map_or_else(
            || ("-".into(), "-".into(), "-".into()),
            |(a, m, x)| (format!("{a:.4}"), format!("{m:.4}"), format!("{x:.4}")),
        );
        summary.push_str(&format!(
            "{:>8} {:>8} {:>6} {mean:>10} {med:>10} {max:>10}\n",
            b.lo, b.hi, b.count
        ));
    }
    write_text(&a.out_dir.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn cmd_sweep(a: &SweepArgs) -> Result<(), CliError> {
    let cfg = RunConfig::load_opt(a.config.config.as_deref())?;
    let default_epochs = if a.paper_scale {
        TrainConfig::default().epochs
    } else {
        evaluation::CI_EPOCHS
    };
    let tc = train_config(&a.train, &cfg, default_epochs)?;
    let (train, dev) = load_split(&a.data, &a.train, &cfg, tc.seed)?;
    let test = match &a.test {
        Some(p) => {
            require_file(p)?;
            Some(read_dataset(p)?)
        }
        None => None,
    };
    let defaults = SweepGrid::default();
    let grid = SweepGrid {
        layer_counts: pick(
            a.layer_counts.clone(),
            cfg.sweep.layer_counts.clone(),
            defaults.layer_counts,
        ),
        neuron_counts: pick(
            a.neuron_counts.clone(),
            cfg.sweep.neuron_counts.clone(),
            defaults.neuron_counts,
        ),
        train_config: tc,
        base_seed: tc.seed,
    };
    let workers = pick(a.workers, cfg.sweep.workers, 1);
    if workers == 0 {
        return Err(CliError::Usage("--workers must be >= 1".into()));
    }
    let report = evaluation::run_sweep(&grid, &train, &dev, test.as_ref(), workers)?;
    write_text(&a.out, &evaluation::sweep_csv(&report.rows, !a.omit_timing))?;
    let summary = evaluation::sweep_summary(&report.rows, !a.omit_timing);
    if let Some(p) = &a.summary {
        write_text(p, &summary)?;
    }
    if let Some(dir) = &a.models_dir {
        create_dir(dir)?;
        for ((l, n), model) in &report.models {
            model.save(&dir.join(format!("model_L{l}_n{n}.json")))?;
        }
    }
    print!("{summary}");
    Ok(())
}

fn cmd_predict(a: &PredictArgs) -> Result<(), CliError> {
    require_file(&a.model)?;
    let model = NetworkModel::load(&a.model)?;
    let n = model.spec().input_dim;
    let rows: Vec<Vec<f64>> = match &a.csv {
        Some(path) => {
            require_file(path)?;
            read_ratio_rows(path, n)?
        }
        None if a.ratios.is_empty() => {
            return Err(CliError::Usage(format!("give {n} ratios or --csv <file>")));
        }
        None => vec![a.ratios.clone()],
    };
    for r in rows {
        if r.len() != n {
            return Err(CliError::Usage(format!(
                "expected {n} ratios, got {}",
                r.len()
            )));
        }
        println!("{:.6}", model.forward(&r)?);
    }
    Ok(())
}

/// Rows of bare ratios (optionally under an `r_1,…,r_N` header), or a dataset file.
fn read_ratio_rows(path: &Path, n: usize) -> Result<Vec<Vec<f64>>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    if text.starts_with("o2_percent_air") {
        return Ok(read_rows(path, Some(n))?
            .into_iter()
            .map(|o| o.ratios)
            .collect());
    }
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with("r_")) {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Parse(format!("{}, line {}: {e}", path.display(), i + 1)))?;
        rows.push(row);
    }
    Ok(rows)
}
