//! Labeled observations: synthetic generation, train/dev split, model-mismatch
//! test sets and the CSV + `.meta.json` dataset format.
//!
//! An observation is the vector of phase ratios `r(ω_i, T, c)` over the
//! frequency grid, labeled with the oxygen concentration `c`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::CalibrationTable;
use crate::quench::{
    phase_ratio_r, Concentration, DomainError, ModulationFrequency, Temperature, TwoSiteParams,
};
use crate::rng;
use crate::spline::SplineError;

pub const DATASET_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_SAMPLES: usize = 5000;
pub const DEFAULT_RANGE: (f64, f64) = (0.0, 110.0);
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

/// Ratio noise of the default mismatch test set.
pub const DEFAULT_MISMATCH_SIGMA: f64 = 5e-4;
/// Concentration error (% air) the default mismatch bias induces at 100 % air.
pub const DEFAULT_MISMATCH_DEVIATION: f64 = 2.0;

// Lower clamp for perturbed ratios; keeps them inside (0, 1].
const RATIO_FLOOR: f64 = f64::EPSILON;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset is empty")]
    Empty,
    #[error("sample count must be >= 1")]
    NoSamples,
    #[error("invalid concentration range [{0}, {1}]")]
    Range(f64, f64),
    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    Fraction(f64),
    #[error("ratio noise sigma must be finite and >= 0, got {0}")]
    Sigma(f64),
    #[error("frequency grid must be non-empty and strictly increasing")]
    Grid,
    #[error("frequency grid outside the calibrated range: {0}")]
    OutsideCalibration(#[source] SplineError),
    #[error("observation {index}: {reason}")]
    Observation { index: usize, reason: String },
    #[error("{path}, line {line}: {reason}")]
    Parse {
        path: String,
        line: u64,
        reason: String,
    },
    #[error("{path}: {reason}")]
    Meta { path: String, reason: String },
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Where a dataset's observations came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Synthetic,
    Experimental,
    Mismatch,
}

/// Perturbation applied by [`generate_mismatch_test`]:
/// `r ← clamp(r·(1 + curvature_bias·(c/100)²) + N(0, ratio_noise_sigma²), (0, 1])`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MismatchSpec {
    pub ratio_noise_sigma: f64,
    pub curvature_bias: f64,
}

impl MismatchSpec {
    /// Bias that shifts the model ratios at 100 % air by the same amount a
    /// concentration error of `deviation` % air would, in the least-squares sense
    /// over the grid.
    pub fn calibrated_bias(
        table: &CalibrationTable,
        grid_hz: &[f64],
        deviation: f64,
    ) -> Result<f64, DatasetError> {
        let params = grid_params(table, grid_hz)?;
        let at = |c: f64| -> Result<Vec<f64>, DatasetError> {
            let c = Concentration::new(c)?;
            Ok(params.iter().map(|p| phase_ratio_r(p, c)).collect())
        };
        let base = at(100.0)?;
        let shifted = at(100.0 - deviation)?;
        let num: f64 = base.iter().zip(&shifted).map(|(b, s)| b * (s - b)).sum();
        let den: f64 = base.iter().map(|b| b * b).sum();
        Ok(num / den)
    }

    /// Default mismatch set-up: ratio noise [`DEFAULT_MISMATCH_SIGMA`] and a bias
    /// worth [`DEFAULT_MISMATCH_DEVIATION`] % air at 100 % air.
    pub fn default_for(table: &CalibrationTable, grid_hz: &[f64]) -> Result<Self, DatasetError> {
        Ok(Self {
            ratio_noise_sigma: DEFAULT_MISMATCH_SIGMA,
            curvature_bias: Self::calibrated_bias(table, grid_hz, DEFAULT_MISMATCH_DEVIATION)?,
        })
    }
}

/// Records how a dataset was produced; stored in the sidecar metadata.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concentration_range: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concentrations: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mismatch: Option<MismatchSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitInfo {
    pub role: String,
    pub train_fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub o2: Concentration,
    pub temperature: Temperature,
    pub ratios: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    frequencies_hz: Vec<f64>,
    temperature: Temperature,
    observations: Vec<Observation>,
    provenance: Provenance,
    seed: Option<u64>,
    generator: GeneratorParams,
}

impl Dataset {
    /// Assembles a dataset, checking every observation against the grid.
    pub fn new(
        frequencies_hz: Vec<f64>,
        temperature: Temperature,
        observations: Vec<Observation>,
        provenance: Provenance,
        seed: Option<u64>,
        generator: GeneratorParams,
    ) -> Result<Self, DatasetError> {
        check_grid(&frequencies_hz)?;
        for (index, obs) in observations.iter().enumerate() {
            if obs.ratios.len() != frequencies_hz.len() {
                return Err(DatasetError::Observation {
                    index,
                    reason: format!(
                        "{} ratios for a {}-frequency grid",
                        obs.ratios.len(),
                        frequencies_hz.len()
                    ),
                });
            }
            if let Some((i, r)) = obs.ratios.iter().enumerate().find(|(_, r)| !ratio_ok(**r)) {
                return Err(DatasetError::Observation {
                    index,
                    reason: format!("r_{} = {r} outside (0, 1]", i + 1),
                });
            }
        }
        Ok(Self {
            frequencies_hz,
            temperature,
            observations,
            provenance,
            seed,
            generator,
        })
    }

    pub fn frequencies_hz(&self) -> &[f64] {
        &self.frequencies_hz
    }

    pub fn input_dim(&self) -> usize {
        self.frequencies_hz.len()
    }

    pub fn temperature(&self) -> Temperature {
        self.temperature
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn generator(&self) -> &GeneratorParams {
        &self.generator
    }

    pub fn labels(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.o2.value()).collect()
    }

    fn with_observations(
        &self,
        observations: Vec<Observation>,
        generator: GeneratorParams,
    ) -> Self {
        Self {
            frequencies_hz: self.frequencies_hz.clone(),
            temperature: self.temperature,
            observations,
            provenance: self.provenance,
            seed: self.seed,
            generator,
        }
    }
}

fn ratio_ok(r: f64) -> bool {
    r > 0.0 && r <= 1.0
}

fn check_grid(grid_hz: &[f64]) -> Result<(), DatasetError> {
    if grid_hz.is_empty()
        || grid_hz.iter().any(|f| !(f.is_finite() && *f > 0.0))
        || grid_hz.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(DatasetError::Grid);
    }
    Ok(())
}

fn grid_params(
    table: &CalibrationTable,
    grid_hz: &[f64],
) -> Result<Vec<TwoSiteParams>, DatasetError> {
    check_grid(grid_hz)?;
    grid_hz
        .iter()
        .map(|&hz| {
            table
                .sample_params(ModulationFrequency::from_hz(hz)?)
                .map_err(DatasetError::OutsideCalibration)
        })
        .collect()
}

fn model_ratios(params: &[TwoSiteParams], c: Concentration) -> Vec<f64> {
    params.iter().map(|p| phase_ratio_r(p, c)).collect()
}

/// Draws `m` labels uniformly on `[c_lo, c_hi)` and computes their noiseless
/// ratio vectors from the calibration curves.
pub fn generate_synthetic(
    table: &CalibrationTable,
    grid_hz: &[f64],
    m: usize,
    (c_lo, c_hi): (f64, f64),
    seed: u64,
) -> Result<Dataset, DatasetError> {
    if m == 0 {
        return Err(DatasetError::NoSamples);
    }
    if !(c_lo.is_finite() && c_hi.is_finite() && 0.0 <= c_lo && c_lo < c_hi) {
        return Err(DatasetError::Range(c_lo, c_hi));
    }
    let params = grid_params(table, grid_hz)?;
    let temperature = table.temperature();
    let mut rng = rng::stream(seed, rng::GENERATE);
    let observations = (0..m)
        .map(|_| {
            let o2 = Concentration::new(rng.random_range(c_lo..c_hi))?;
            Ok(Observation {
                o2,
                temperature,
                ratios: model_ratios(&params, o2),
            })
        })
        .collect::<Result<Vec<_>, DatasetError>>()?;
    Dataset::new(
        grid_hz.to_vec(),
        temperature,
        observations,
        Provenance::Synthetic,
        Some(seed),
        GeneratorParams {
            samples: Some(m),
            concentration_range: Some((c_lo, c_hi)),
            ..GeneratorParams::default()
        },
    )
}

/// Shuffles with the seeded split stream; the first `⌊m·train_fraction⌋`
/// observations of the permutation become the training set.
pub fn split(
    ds: &Dataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), DatasetError> {
    if ds.is_empty() {
        return Err(DatasetError::Empty);
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DatasetError::Fraction(train_fraction));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut rng::stream(seed, rng::SPLIT));
    let n_train = (ds.len() as f64 * train_fraction).floor() as usize;
    let pick = |idx: &[usize], role: &str| {
        let obs = idx.iter().map(|&i| ds.observations[i].clone()).collect();
        let generator = GeneratorParams {
            split: Some(SplitInfo {
                role: role.to_string(),
                train_fraction,
                seed,
            }),
            ..ds.generator.clone()
        };
        ds.with_observations(obs, generator)
    };
    Ok((
        pick(&order[..n_train], "train"),
        pick(&order[n_train..], "dev"),
    ))
}

/// Model ratios at explicit concentrations, perturbed by `spec` to emulate the
/// residual structure between the two-site model and real measurements.
pub fn generate_mismatch_test(
    table: &CalibrationTable,
    grid_hz: &[f64],
    concentrations: &[f64],
    spec: &MismatchSpec,
    seed: u64,
) -> Result<Dataset, DatasetError> {
    if concentrations.is_empty() {
        return Err(DatasetError::NoSamples);
    }
    if !(spec.ratio_noise_sigma.is_finite() && spec.ratio_noise_sigma >= 0.0) {
        return Err(DatasetError::Sigma(spec.ratio_noise_sigma));
    }
    let params = grid_params(table, grid_hz)?;
    let temperature = table.temperature();
    let noise = Normal::new(0.0, spec.ratio_noise_sigma)
        .map_err(|_| DatasetError::Sigma(spec.ratio_noise_sigma))?;
    let mut rng = rng::stream(seed, rng::MISMATCH);
    let observations = concentrations
        .iter()
        .map(|&c| {
            let o2 = Concentration::new(c)?;
            let bias = 1.0 + spec.curvature_bias * (c / 100.0).powi(2);
            let ratios = model_ratios(&params, o2)
                .into_iter()
                .map(|r| {
                    let e = if spec.ratio_noise_sigma > 0.0 {
                        noise.sample(&mut rng)
                    } else {
                        0.0
                    };
                    (r * bias + e).clamp(RATIO_FLOOR, 1.0)
                })
                .collect();
            Ok(Observation {
                o2,
                temperature,
                ratios,
            })
        })
        .collect::<Result<Vec<_>, DatasetError>>()?;
    Dataset::new(
        grid_hz.to_vec(),
        temperature,
        observations,
        Provenance::Mismatch,
        Some(seed),
        GeneratorParams {
            concentrations: Some(concentrations.to_vec()),
            mismatch: Some(*spec),
            ..GeneratorParams::default()
        },
    )
}

/// Sidecar metadata written next to every dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub version: u32,
    pub frequencies_hz: Vec<f64>,
    pub temperature_c: f64,
    pub provenance: Provenance,
    pub seed: Option<u64>,
    pub generator: GeneratorParams,
}

/// `data.csv` → `data.meta.json`.
pub fn meta_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

pub fn csv_header(n: usize) -> String {
    let mut h = String::from("o2_percent_air,temperature_c");
    for i in 1..=n {
        write!(h, ",r_{i}").expect("write to String");
    }
    h
}

/// 17 significant digits, enough for an exact round trip.
fn fmt_full(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<(), DatasetError> {
    let io = |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = csv_header(ds.input_dim());
    out.push('\n');
    for obs in &ds.observations {
        out.push_str(&fmt_full(obs.o2.value()));
        out.push(',');
        out.push_str(&fmt_full(obs.temperature.celsius()));
        for r in &obs.ratios {
            out.push(',');
            out.push_str(&fmt_full(*r));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(io)?;

    let meta = DatasetMeta {
        version: DATASET_FORMAT_VERSION,
        frequencies_hz: ds.frequencies_hz.clone(),
        temperature_c: ds.temperature.celsius(),
        provenance: ds.provenance,
        seed: ds.seed,
        generator: ds.generator.clone(),
    };
    let mpath = meta_path(path);
    let mut text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    text.push('\n');
    fs::write(&mpath, text).map_err(|source| DatasetError::Io {
        path: mpath.display().to_string(),
        source,
    })
}

pub fn read_meta(csv_path: &Path) -> Result<DatasetMeta, DatasetError> {
    let mpath = meta_path(csv_path);
    let shown = mpath.display().to_string();
    let text = fs::read_to_string(&mpath).map_err(|source| DatasetError::Io {
        path: shown.clone(),
        source,
    })?;
    let meta: DatasetMeta = serde_json::from_str(&text).map_err(|e| DatasetError::Meta {
        path: shown.clone(),
        reason: e.to_string(),
    })?;
    if meta.version != DATASET_FORMAT_VERSION {
        return Err(DatasetError::Meta {
            path: shown,
            reason: format!(
                "unsupported version {} (expected {DATASET_FORMAT_VERSION})",
                meta.version
            ),
        });
    }
    Ok(meta)
}

/// Reads the observation rows of a dataset CSV, checking the header and every
/// row against an `n`-ratio layout. Errors carry the 1-based line number.
pub fn read_rows(path: &Path, n: Option<usize>) -> Result<Vec<Observation>, DatasetError> {
    let shown = path.display().to_string();
    let parse_err = |line: u64, reason: String| DatasetError::Parse {
        path: shown.clone(),
        line,
        reason,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => DatasetError::Io {
                path: shown.clone(),
                source,
            },
            other => parse_err(0, format!("{other:?}")),
        })?;
    let mut records = reader.records();
    let header = match records.next() {
        Some(rec) => rec.map_err(|e| parse_err(1, e.to_string()))?,
        None => return Err(parse_err(1, "missing header".into())),
    };
    let n_cols = header.len();
    let n = n.unwrap_or(n_cols.saturating_sub(2));
    let header_line = header.iter().collect::<Vec<_>>().join(",");
    if n == 0 || header_line != csv_header(n) {
        return Err(parse_err(
            1,
            format!("malformed header, expected `{}`", csv_header(n.max(1))),
        ));
    }

    let mut observations = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != n + 2 {
            return Err(parse_err(
                line,
                format!(
                    "expected {} columns ({n} ratios), found {}",
                    n + 2,
                    rec.len()
                ),
            ));
        }
        let mut values = Vec::with_capacity(rec.len());
        for (col, field) in rec.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                parse_err(line, format!("column {}: cannot parse `{field}`", col + 1))
            })?;
            values.push(v);
        }
        let o2 = Concentration::new(values[0]).map_err(|e| parse_err(line, e.to_string()))?;
        let temperature =
            Temperature::new(values[1]).map_err(|e| parse_err(line, e.to_string()))?;
        let ratios = values[2..].to_vec();
        if let Some((i, r)) = ratios.iter().enumerate().find(|(_, r)| !ratio_ok(**r)) {
            return Err(parse_err(line, format!("r_{} = {r} outside (0, 1]", i + 1)));
        }
        observations.push(Observation {
            o2,
            temperature,
            ratios,
        });
    }
    Ok(observations)
}

pub fn read_dataset(path: &Path) -> Result<Dataset, DatasetError> {
    let meta = read_meta(path)?;
    let observations = read_rows(path, Some(meta.frequencies_hz.len()))?;
    let temperature = Temperature::new(meta.temperature_c)?;
    Dataset::new(
        meta.frequencies_hz,
        temperature,
        observations,
        meta.provenance,
        meta.seed,
        meta.generator,
    )
}
