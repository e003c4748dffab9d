//! Error metrics, the architecture sweep and per-concentration error profiles.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::network::{self, NetworkError, NetworkModel, NetworkSpec, TrainConfig};
use crate::rng;

pub const SWEEP_CSV_HEADER: &str =
    "layers,neurons,seed,mae_train,mae_dev,mae_test,epochs,duration_s,status";
pub const PROFILE_CSV_HEADER: &str = "bin_lo,bin_hi,count,mean_ae,median_ae,max_ae";
pub const AE_CSV_HEADER: &str = "o2_measured,o2_predicted,ae";

/// Epoch count of the CI-scale sweep; the full-length runs use
/// [`TrainConfig::default`]'s 10⁵.
pub const CI_EPOCHS: usize = 20_000;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dataset is empty")]
    Empty,
    #[error("datasets do not share the frequency grid ({0})")]
    GridMismatch(String),
    #[error("invalid sweep grid: {0}")]
    Grid(String),
    #[error("invalid bins: {0}")]
    Bins(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// One observation's prediction and absolute error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AeRow {
    pub o2_measured: f64,
    pub o2_predicted: f64,
    pub ae: f64,
}

/// Absolute errors in stored order.
pub fn ae_per_observation(model: &NetworkModel, data: &Dataset) -> Result<Vec<AeRow>, EvalError> {
    if data.is_empty() {
        return Err(EvalError::Empty);
    }
    let pred = model.predict_dataset(data)?;
    Ok(data
        .labels()
        .into_iter()
        .zip(pred)
        .map(|(y, p)| AeRow {
            o2_measured: y,
            o2_predicted: p,
            ae: (p - y).abs(),
        })
        .collect())
}

/// Mean of the AE column, summed in stored order.
pub fn mae_of(rows: &[AeRow]) -> f64 {
    rows.iter().map(|r| r.ae).sum::<f64>() / rows.len() as f64
}

pub fn mae(model: &NetworkModel, data: &Dataset) -> Result<f64, EvalError> {
    Ok(mae_of(&ae_per_observation(model, data)?))
}

pub fn write_ae_csv(rows: &[AeRow], path: &Path) -> Result<(), EvalError> {
    let mut out = format!("{AE_CSV_HEADER}\n");
    for r in rows {
        writeln!(out, "{},{},{}", r.o2_measured, r.o2_predicted, r.ae).expect("write to String");
    }
    write_text(path, &out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// `(mean, median, max)` AE; `None` for an empty bin.
    pub stats: Option<(f64, f64, f64)>,
}

/// AE summary per concentration bin. Bins are `[lo, hi)` except the last,
/// which is closed; every label must fall inside the edges.
pub fn profile_from_ae(rows: &[AeRow], edges: &[f64]) -> Result<Vec<ProfileBin>, EvalError> {
    if edges.len() < 2
        || edges.iter().any(|e| !e.is_finite())
        || edges.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(EvalError::Bins(
            "need at least two finite, strictly increasing edges".into(),
        ));
    }
    let (first, last) = (edges[0], edges[edges.len() - 1]);
    if let Some(r) = rows
        .iter()
        .find(|r| r.o2_measured < first || r.o2_measured > last)
    {
        return Err(EvalError::Bins(format!(
            "label {} outside [{first}, {last}]",
            r.o2_measured
        )));
    }
    let nb = edges.len() - 1;
    let mut members: Vec<Vec<f64>> = vec![Vec::new(); nb];
    for r in rows {
        // index of the last edge ≤ label, capped at the final bin
        let k = edges.partition_point(|&e| e <= r.o2_measured).clamp(1, nb) - 1;
        members[k].push(r.ae);
    }
    Ok(members
        .into_iter()
        .enumerate()
        .map(|(k, mut ae)| {
            let count = ae.len();
            let stats = (count > 0).then(|| {
                let mean = ae.iter().sum::<f64>() / count as f64;
                ae.sort_by(f64::total_cmp);
                let median = if count % 2 == 1 {
                    ae[count / 2]
                } else {
                    0.5 * (ae[count / 2 - 1] + ae[count / 2])
                };
                (mean, median, ae[count - 1])
            });
            ProfileBin {
                lo: edges[k],
                hi: edges[k + 1],
                count,
                stats,
            }
        })
        .collect())
}

pub fn concentration_profile(
    model: &NetworkModel,
    data: &Dataset,
    edges: &[f64],
) -> Result<Vec<ProfileBin>, EvalError> {
    profile_from_ae(&ae_per_observation(model, data)?, edges)
}

/// Statistics of empty bins are left blank.
pub fn write_profile_csv(bins: &[ProfileBin], path: &Path) -> Result<(), EvalError> {
    let mut out = format!("{PROFILE_CSV_HEADER}\n");
    for b in bins {
        match b.stats {
            Some((mean, median, max)) => {
                writeln!(out, "{},{},{},{mean},{median},{max}", b.lo, b.hi, b.count)
            }
            None => writeln!(out, "{},{},0,,,", b.lo, b.hi),
        }
        .expect("write to String");
    }
    write_text(path, &out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub layer_counts: Vec<usize>,
    pub neuron_counts: Vec<usize>,
    pub train_config: TrainConfig,
    pub base_seed: u64,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            layer_counts: vec![1, 2, 3],
            neuron_counts: vec![3, 5, 10, 20, 30, 50],
            train_config: TrainConfig {
                epochs: CI_EPOCHS,
                ..TrainConfig::default()
            },
            base_seed: 0,
        }
    }
}

impl SweepGrid {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.layer_counts.is_empty() || self.neuron_counts.is_empty() {
            return Err(EvalError::Grid(
                "layer and neuron counts must be non-empty".into(),
            ));
        }
        if self.layer_counts.contains(&0) || self.neuron_counts.contains(&0) {
            return Err(EvalError::Grid("counts must be >= 1".into()));
        }
        self.train_config.validate()?;
        Ok(())
    }

    /// Distinct `(layers, neurons)` cells in key order.
    pub fn cells(&self) -> Vec<(usize, usize)> {
        let mut cells: Vec<_> = self
            .layer_counts
            .iter()
            .flat_map(|&l| self.neuron_counts.iter().map(move |&n| (l, n)))
            .collect();
        cells.sort_unstable();
        cells.dedup();
        cells
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrialStatus {
    Ok,
    Aborted(String),
}

impl TrialStatus {
    fn label(&self) -> String {
        match self {
            TrialStatus::Ok => "ok".into(),
            TrialStatus::Aborted(why) => format!("aborted: {}", why.replace([',', '\n'], ";")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub layers: usize,
    pub neurons: usize,
    pub seed: u64,
    pub mae_train: Option<f64>,
    pub mae_dev: Option<f64>,
    pub mae_test: Option<f64>,
    pub epochs: usize,
    pub duration_s: f64,
    pub initial_cost: Option<f64>,
    pub final_cost: Option<f64>,
    pub status: TrialStatus,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    /// Sorted by `(layers, neurons)`.
    pub rows: Vec<TrialRow>,
    pub models: BTreeMap<(usize, usize), NetworkModel>,
}

impl SweepReport {
    pub fn row(&self, layers: usize, neurons: usize) -> Option<&TrialRow> {
        self.rows
            .iter()
            .find(|r| (r.layers, r.neurons) == (layers, neurons))
    }
}

fn same_grid(a: &Dataset, b: &Dataset, what: &str) -> Result<(), EvalError> {
    if a.frequencies_hz() != b.frequencies_hz() {
        return Err(EvalError::GridMismatch(what.into()));
    }
    Ok(())
}

fn run_trial(
    grid: &SweepGrid,
    (layers, neurons): (usize, usize),
    train: &Dataset,
    dev: &Dataset,
    test: Option<&Dataset>,
) -> (TrialRow, Option<NetworkModel>) {
    let seed = rng::trial_seed(grid.base_seed, layers, neurons);
    let cfg = TrainConfig {
        seed,
        ..grid.train_config
    };
    let mut row = TrialRow {
        layers,
        neurons,
        seed,
        mae_train: None,
        mae_dev: None,
        mae_test: None,
        epochs: cfg.epochs,
        duration_s: 0.0,
        initial_cost: None,
        final_cost: None,
        status: TrialStatus::Ok,
    };
    let outcome = NetworkSpec::new(train.input_dim(), layers, neurons)
        .and_then(|spec| network::train(spec, train, &cfg))
        .map_err(EvalError::from)
        .and_then(|(model, report)| {
            row.duration_s = report.duration_s;
            row.initial_cost = Some(report.initial_cost);
            row.final_cost = Some(report.final_cost);
            row.mae_train = Some(mae(&model, train)?);
            row.mae_dev = Some(mae(&model, dev)?);
            row.mae_test = test.map(|t| mae(&model, t)).transpose()?;
            Ok(model)
        });
    match outcome {
        Ok(model) => (row, Some(model)),
        Err(e) => {
            row.status = TrialStatus::Aborted(e.to_string());
            (row, None)
        }
    }
}

/// Trains every grid cell once. Trials run on up to `workers` threads; each
/// trial's seed depends only on its own cell, so the report does not depend
/// on scheduling. A trial that fails is flagged and the sweep continues.
type TrialResult = (TrialRow, Option<NetworkModel>);

pub fn run_sweep(
    grid: &SweepGrid,
    train: &Dataset,
    dev: &Dataset,
    test: Option<&Dataset>,
    workers: usize,
) -> Result<SweepReport, EvalError> {
    grid.validate()?;
    if train.is_empty() || dev.is_empty() || test.is_some_and(Dataset::is_empty) {
        return Err(EvalError::Empty);
    }
    same_grid(train, dev, "train vs dev")?;
    if let Some(t) = test {
        same_grid(train, t, "train vs test")?;
    }
    let cells = grid.cells();
    let results: Mutex<Vec<Option<TrialResult>>> = Mutex::new(vec![None; cells.len()]);
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, cells.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&cell) = cells.get(i) else { break };
                let out = run_trial(grid, cell, train, dev, test);
                results.lock().expect("no worker panicked")[i] = Some(out);
            });
        }
    });
    let mut rows = Vec::with_capacity(cells.len());
    let mut models = BTreeMap::new();
    for (row, model) in results
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .flatten()
    {
        if let Some(m) = model {
            models.insert((row.layers, row.neurons), m);
        }
        rows.push(row);
    }
    Ok(SweepReport { rows, models })
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

/// Sweep rows as CSV. With `timing` off the duration column is written as 0,
/// which makes the file a pure function of the inputs and seeds.
pub fn sweep_csv(rows: &[TrialRow], timing: bool) -> String {
    let mut out = format!("{SWEEP_CSV_HEADER}\n");
    for r in rows {
        let duration = if timing {
            format!("{:.3}", r.duration_s)
        } else {
            "0".into()
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.layers,
            r.neurons,
            r.seed,
            opt(r.mae_train),
            opt(r.mae_dev),
            opt(r.mae_test),
            r.epochs,
            duration,
            r.status.label()
        )
        .expect("write to String");
    }
    out
}

/// Aligned human-readable table of the sweep.
pub fn sweep_summary(rows: &[TrialRow], timing: bool) -> String {
    let cell = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
    let mut out = format!(
        "{:>6} {:>7} {:>10} {:>10} {:>10} {:>9}  {}\n",
        "layers", "neurons", "mae_train", "mae_dev", "mae_test", "time_s", "status"
    );
    for r in rows {
        writeln!(
            out,
            "{:>6} {:>7} {:>10} {:>10} {:>10} {:>9.1}  {}",
            r.layers,
            r.neurons,
            cell(r.mae_train),
            cell(r.mae_dev),
            cell(r.mae_test),
            if timing { r.duration_s } else { 0.0 },
            r.status.label()
        )
        .expect("write to String");
    }
    out
}

/// True when `mae_dev` never rises by more than `tolerance` from one neuron
/// count to the next. `points` are `(neurons, mae_dev)` for one layer count.
pub fn non_increasing_within(points: &[(usize, f64)], tolerance: f64) -> bool {
    let mut sorted = points.to_vec();
    sorted.sort_by_key(|p| p.0);
    sorted.windows(2).all(|w| w[1].1 <= w[0].1 + tolerance)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), EvalError> {
    fs::write(path, text).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })
}
