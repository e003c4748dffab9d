//! Per-frequency two-site fits and the calibration table built from them.
//!
//! Each quench curve `r(c)` measured at one modulation frequency is fitted with
//! Levenberg-Marquardt on the unconstrained coordinates
//! `(u, v₁, v₂)` where `f = logistic(u)` and `K_SVi = exp(vᵢ)`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quench::{
    phase_ratio_r, Concentration, DomainError, ModulationFrequency, Temperature, TwoSiteParams,
};
use crate::spline::{ParamCurves, SplineError};

pub const CALIBRATION_FORMAT_VERSION: u32 = 1;
pub const CURVES_FORMAT_VERSION: u32 = 1;

const MIN_POINTS: usize = 4;
const REFERENCE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("quench curve needs at least {MIN_POINTS} points, got {0}")]
    TooFewPoints(usize),
    #[error("duplicate concentration {0} % air in quench curve")]
    DuplicateConcentration(f64),
    #[error("ratio r must be finite and > 0, got {0}")]
    InvalidRatio(f64),
    #[error("zero-oxygen reference point must have r = 1, got {0}")]
    BadReference(f64),
    #[error("curve carries no quenching information (all r = 1)")]
    Degenerate,
    #[error("need at least two nonzero concentrations with r < 1 for an initial guess")]
    NoInitialSlope,
    #[error("calibration needs at least 3 frequencies, got {0}")]
    TooFewFrequencies(usize),
    #[error("duplicate modulation frequency {0} Hz")]
    DuplicateFrequency(f64),
    #[error("temperature labels differ: {0} °C vs {1} °C")]
    MixedTemperatures(f64, f64),
    #[error("unsupported {what} format version {found} (expected {expected})")]
    Version {
        what: &'static str,
        found: u32,
        expected: u32,
    },
    #[error("calibration file field lengths disagree")]
    Shape,
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Spline(#[from] SplineError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
}

/// Normalized quench curve `r(c)` at one frequency and temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct QuenchCurve {
    omega: ModulationFrequency,
    temperature: Temperature,
    points: Vec<(Concentration, f64)>,
}

impl QuenchCurve {
    pub fn new(
        omega: ModulationFrequency,
        temperature: Temperature,
        points: Vec<(Concentration, f64)>,
    ) -> Result<Self, CalibrationError> {
        if points.len() < MIN_POINTS {
            return Err(CalibrationError::TooFewPoints(points.len()));
        }
        let mut cs: Vec<f64> = points.iter().map(|(c, _)| c.value()).collect();
        cs.sort_by(f64::total_cmp);
        if let Some(w) = cs.windows(2).find(|w| w[0] == w[1]) {
            return Err(CalibrationError::DuplicateConcentration(w[0]));
        }
        for &(c, r) in &points {
            if !(r.is_finite() && r > 0.0) {
                return Err(CalibrationError::InvalidRatio(r));
            }
            if c.value() == 0.0 && (r - 1.0).abs() > REFERENCE_TOLERANCE {
                return Err(CalibrationError::BadReference(r));
            }
        }
        Ok(Self {
            omega,
            temperature,
            points,
        })
    }

    pub fn omega(&self) -> ModulationFrequency {
        self.omega
    }

    pub fn temperature(&self) -> Temperature {
        self.temperature
    }

    pub fn points(&self) -> &[(Concentration, f64)] {
        &self.points
    }
}

/// Outcome of one Levenberg-Marquardt fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: TwoSiteParams,
    pub residual_norm: f64,
    /// `r_model(c_j) − r_j`, in input order.
    pub per_point_residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Sum of squared residuals after each accepted step, starting at the initial guess.
    pub cost_trace: Vec<f64>,
}

/// Damping schedule and stopping tolerances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmSettings {
    pub initial_lambda: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    pub step_tolerance: f64,
    pub gradient_tolerance: f64,
    pub max_iterations: usize,
    /// Largest per-iteration move of any unconstrained coordinate. In log space
    /// an unbounded step can park a constant near zero, where its Jacobian
    /// column vanishes and the gradient test fires spuriously.
    pub max_step: f64,
}

impl Default for LmSettings {
    fn default() -> Self {
        Self {
            initial_lambda: 1e-3,
            lambda_up: 10.0,
            lambda_down: 10.0,
            step_tolerance: 1e-10,
            gradient_tolerance: 1e-12,
            max_iterations: 200,
            max_step: 2.0,
        }
    }
}

// Keeps logit/log finite for boundary initial guesses.
const PARAM_FLOOR: f64 = 1e-12;

fn logistic(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

fn to_unconstrained(p: &TwoSiteParams) -> [f64; 3] {
    let f = p.f().clamp(PARAM_FLOOR, 1.0 - PARAM_FLOOR);
    [
        (f / (1.0 - f)).ln(),
        p.ksv1().max(PARAM_FLOOR).ln(),
        p.ksv2().max(PARAM_FLOOR).ln(),
    ]
}

fn from_unconstrained(theta: &[f64; 3]) -> Result<TwoSiteParams, DomainError> {
    TwoSiteParams::new(logistic(theta[0]), theta[1].exp(), theta[2].exp())
}

/// Residuals and the Jacobian of the residuals w.r.t. `(u, v₁, v₂)`.
fn residuals_and_jacobian(theta: &[f64; 3], data: &[(f64, f64)]) -> (Vec<f64>, Vec<[f64; 3]>) {
    let f = logistic(theta[0]);
    let (k1, k2) = (theta[1].exp(), theta[2].exp());
    let mut res = Vec::with_capacity(data.len());
    let mut jac = Vec::with_capacity(data.len());
    for &(c, r) in data {
        let d1 = 1.0 / (1.0 + k1 * c);
        let d2 = 1.0 / (1.0 + k2 * c);
        res.push(f * d1 + (1.0 - f) * d2 - r);
        jac.push([
            f * (1.0 - f) * (d1 - d2),
            -f * c * d1 * d1 * k1,
            -(1.0 - f) * c * d2 * d2 * k2,
        ]);
    }
    (res, jac)
}

fn sum_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn residuals_only(theta: &[f64; 3], data: &[(f64, f64)]) -> Vec<f64> {
    let f = logistic(theta[0]);
    let (k1, k2) = (theta[1].exp(), theta[2].exp());
    data.iter()
        .map(|&(c, r)| f / (1.0 + k1 * c) + (1.0 - f) / (1.0 + k2 * c) - r)
        .collect()
}

/// Solves the symmetric 3×3 system by Gaussian elimination with partial pivoting.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col] == 0.0 || !a[pivot][col].is_finite() {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let w = a[row][col] / a[col][col];
            let pivot_row = a[col];
            for (x, p) in a[row][col..].iter_mut().zip(&pivot_row[col..]) {
                *x -= w * p;
            }
            b[row] -= w * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let tail: f64 = (row + 1..3).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Fits `(f, K_SV1, K_SV2)` to one quench curve.
///
/// Running out of iterations is not an error: the result comes back with
/// `converged = false`.
pub fn fit_two_site(
    curve: &QuenchCurve,
    init: &TwoSiteParams,
) -> Result<FitResult, CalibrationError> {
    fit_two_site_with(curve, init, &LmSettings::default())
}

pub fn fit_two_site_with(
    curve: &QuenchCurve,
    init: &TwoSiteParams,
    settings: &LmSettings,
) -> Result<FitResult, CalibrationError> {
    if curve.points.iter().all(|&(_, r)| r == 1.0) {
        return Err(CalibrationError::Degenerate);
    }
    let data: Vec<(f64, f64)> = curve.points.iter().map(|&(c, r)| (c.value(), r)).collect();

    let mut theta = to_unconstrained(init);
    let (mut res, mut jac) = residuals_and_jacobian(&theta, &data);
    let mut cost = sum_sq(&res);
    let mut cost_trace = vec![cost];
    let mut lambda = settings.initial_lambda;
    // Marquardt scaling by the largest diagonal seen so far (MINPACK-style), so a
    // column that fades out keeps being damped.
    let mut scale = [f64::MIN_POSITIVE; 3];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < settings.max_iterations {
        iterations += 1;

        let mut jtj = [[0.0; 3]; 3];
        let mut grad = [0.0; 3];
        for (row, &e) in jac.iter().zip(&res) {
            for i in 0..3 {
                grad[i] += row[i] * e;
                for j in 0..3 {
                    jtj[i][j] += row[i] * row[j];
                }
            }
        }
        if grad.iter().fold(0.0f64, |m, g| m.max(g.abs())) < settings.gradient_tolerance {
            converged = true;
            break;
        }

        let mut damped = jtj;
        for (i, row) in damped.iter_mut().enumerate() {
            scale[i] = scale[i].max(jtj[i][i]);
            row[i] += lambda * scale[i];
        }
        let Some(mut step) = solve3(damped, [-grad[0], -grad[1], -grad[2]]) else {
            lambda *= settings.lambda_up;
            continue;
        };
        let longest = step.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        if longest > settings.max_step {
            step.iter_mut()
                .for_each(|s| *s *= settings.max_step / longest);
        }
        let candidate = [theta[0] + step[0], theta[1] + step[1], theta[2] + step[2]];
        let step_norm = step.iter().map(|s| s * s).sum::<f64>().sqrt();
        let theta_norm = theta.iter().map(|s| s * s).sum::<f64>().sqrt();

        let trial = residuals_only(&candidate, &data);
        let trial_cost = sum_sq(&trial);
        if trial_cost.is_finite() && trial_cost < cost {
            theta = candidate;
            (res, jac) = residuals_and_jacobian(&theta, &data);
            cost = trial_cost;
            cost_trace.push(cost);
            lambda = (lambda / settings.lambda_down).max(1e-300);
        } else {
            lambda *= settings.lambda_up;
        }
        if step_norm <= settings.step_tolerance * (theta_norm + settings.step_tolerance) {
            converged = true;
            break;
        }
        if !lambda.is_finite() {
            break;
        }
    }

    let params = collapse_equal_sites(from_unconstrained(&theta)?.canonical())?;
    let per_point_residuals: Vec<f64> = curve
        .points
        .iter()
        .map(|&(c, r)| phase_ratio_r(&params, c) - r)
        .collect();
    Ok(FitResult {
        params,
        residual_norm: sum_sq(&per_point_residuals).sqrt(),
        per_point_residuals,
        iterations,
        converged,
        cost_trace,
    })
}

// Relative K_SV gap below which the two sites are treated as one.
const SITE_COLLAPSE_TOLERANCE: f64 = 1e-4;

/// With `K_SV1 ≈ K_SV2` every `f` yields the same curve; report the
/// single-site form `f = 1` with the emission-weighted constant.
fn collapse_equal_sites(p: TwoSiteParams) -> Result<TwoSiteParams, DomainError> {
    if p.ksv1() - p.ksv2() > SITE_COLLAPSE_TOLERANCE * p.ksv1() {
        return Ok(p);
    }
    let k = p.f() * p.ksv1() + (1.0 - p.f()) * p.ksv2();
    TwoSiteParams::new(1.0, k, k)
}

/// Starting point for [`fit_two_site`]: `f = 0.8`, `K_SV1` from the slope of
/// `1/r − 1` over the two lowest nonzero concentrations (least squares through
/// the origin), `K_SV2 = K_SV1 / 10`.
pub fn default_init(curve: &QuenchCurve) -> Result<TwoSiteParams, CalibrationError> {
    let mut nonzero: Vec<(f64, f64)> = curve
        .points
        .iter()
        .filter(|(c, _)| c.value() > 0.0)
        .map(|&(c, r)| (c.value(), r))
        .collect();
    if nonzero.len() < 2 {
        return Err(CalibrationError::NoInitialSlope);
    }
    nonzero.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (num, den) = nonzero[..2].iter().fold((0.0, 0.0), |(n, d), &(c, r)| {
        (n + c * (1.0 / r - 1.0), d + c * c)
    });
    let slope = num / den;
    if !(slope.is_finite() && slope > 0.0) {
        return Err(CalibrationError::NoInitialSlope);
    }
    Ok(TwoSiteParams::new(0.8, slope, slope / 10.0)?)
}

/// One fitted knot of the calibration table.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationKnot {
    pub omega: ModulationFrequency,
    pub params: TwoSiteParams,
    pub converged: bool,
    /// Full fit details; absent when the table was loaded from a file.
    pub fit: Option<FitResult>,
}

/// Fitted parameters per frequency plus their spline curves, at one temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationTable {
    temperature: Temperature,
    knots: Vec<CalibrationKnot>,
    curves: ParamCurves,
}

impl CalibrationTable {
    /// Builds a table from already-known knots (sorted by frequency here).
    pub fn from_knots(
        temperature: Temperature,
        mut knots: Vec<CalibrationKnot>,
    ) -> Result<Self, CalibrationError> {
        if knots.len() < 3 {
            return Err(CalibrationError::TooFewFrequencies(knots.len()));
        }
        knots.sort_by(|a, b| a.omega.angular().total_cmp(&b.omega.angular()));
        if let Some(w) = knots.windows(2).find(|w| w[0].omega == w[1].omega) {
            return Err(CalibrationError::DuplicateFrequency(w[0].omega.hz()));
        }
        let omegas: Vec<_> = knots.iter().map(|k| k.omega).collect();
        let params: Vec<_> = knots.iter().map(|k| k.params).collect();
        let curves = ParamCurves::from_knots(&omegas, &params)?;
        Ok(Self {
            temperature,
            knots,
            curves,
        })
    }

    pub fn temperature(&self) -> Temperature {
        self.temperature
    }

    pub fn knots(&self) -> &[CalibrationKnot] {
        &self.knots
    }

    pub fn curves(&self) -> &ParamCurves {
        &self.curves
    }

    pub fn frequencies(&self) -> Vec<ModulationFrequency> {
        self.knots.iter().map(|k| k.omega).collect()
    }

    /// False when any per-frequency fit hit the iteration limit.
    pub fn all_converged(&self) -> bool {
        self.knots.iter().all(|k| k.converged)
    }

    pub fn sample_params(&self, omega: ModulationFrequency) -> Result<TwoSiteParams, SplineError> {
        self.curves.sample_params(omega)
    }

    pub fn to_file(&self) -> CalibrationFile {
        CalibrationFile {
            version: CALIBRATION_FORMAT_VERSION,
            temperature_c: self.temperature.celsius(),
            frequencies_hz: self.knots.iter().map(|k| k.omega.hz()).collect(),
            f: self.knots.iter().map(|k| k.params.f()).collect(),
            ksv1: self.knots.iter().map(|k| k.params.ksv1()).collect(),
            ksv2: self.knots.iter().map(|k| k.params.ksv2()).collect(),
            converged: self.knots.iter().map(|k| k.converged).collect(),
        }
    }

    pub fn from_file(file: &CalibrationFile) -> Result<Self, CalibrationError> {
        if file.version != CALIBRATION_FORMAT_VERSION {
            return Err(CalibrationError::Version {
                what: "calibration",
                found: file.version,
                expected: CALIBRATION_FORMAT_VERSION,
            });
        }
        let n = file.frequencies_hz.len();
        if [
            file.f.len(),
            file.ksv1.len(),
            file.ksv2.len(),
            file.converged.len(),
        ]
        .iter()
        .any(|&l| l != n)
        {
            return Err(CalibrationError::Shape);
        }
        let knots = (0..n)
            .map(|i| {
                Ok(CalibrationKnot {
                    omega: ModulationFrequency::from_hz(file.frequencies_hz[i])?,
                    params: TwoSiteParams::new(file.f[i], file.ksv1[i], file.ksv2[i])?,
                    converged: file.converged[i],
                    fit: None,
                })
            })
            .collect::<Result<Vec<_>, CalibrationError>>()?;
        Self::from_knots(Temperature::new(file.temperature_c)?, knots)
    }

    pub fn save(&self, path: &Path) -> Result<(), CalibrationError> {
        write_json(path, &self.to_file())
    }

    pub fn load(path: &Path) -> Result<Self, CalibrationError> {
        Self::from_file(&read_json(path)?)
    }
}

/// Fits every curve independently and splines the results over frequency.
pub fn build_calibration(curves: &[QuenchCurve]) -> Result<CalibrationTable, CalibrationError> {
    if curves.len() < 3 {
        return Err(CalibrationError::TooFewFrequencies(curves.len()));
    }
    let temperature = curves[0].temperature;
    if let Some(c) = curves.iter().find(|c| c.temperature != temperature) {
        return Err(CalibrationError::MixedTemperatures(
            temperature.celsius(),
            c.temperature.celsius(),
        ));
    }
    let knots = curves
        .iter()
        .map(|curve| {
            let init = default_init(curve)?;
            let fit = fit_two_site(curve, &init)?;
            Ok(CalibrationKnot {
                omega: curve.omega,
                params: fit.params,
                converged: fit.converged,
                fit: Some(fit),
            })
        })
        .collect::<Result<Vec<_>, CalibrationError>>()?;
    CalibrationTable::from_knots(temperature, knots)
}

/// On-disk calibration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationFile {
    pub version: u32,
    pub temperature_c: f64,
    pub frequencies_hz: Vec<f64>,
    pub f: Vec<f64>,
    pub ksv1: Vec<f64>,
    pub ksv2: Vec<f64>,
    pub converged: Vec<bool>,
}

/// One normalized curve inside a [`CurveBundle`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveRecord {
    pub frequency_hz: f64,
    pub o2_percent_air: Vec<f64>,
    pub r: Vec<f64>,
}

/// All quench curves measured at one temperature; written by `ingest`, read by `calibrate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveBundle {
    pub version: u32,
    pub temperature_c: f64,
    pub curves: Vec<CurveRecord>,
}

impl CurveBundle {
    pub fn to_curves(&self) -> Result<Vec<QuenchCurve>, CalibrationError> {
        if self.version != CURVES_FORMAT_VERSION {
            return Err(CalibrationError::Version {
                what: "curve bundle",
                found: self.version,
                expected: CURVES_FORMAT_VERSION,
            });
        }
        let t = Temperature::new(self.temperature_c)?;
        self.curves
            .iter()
            .map(|rec| {
                if rec.o2_percent_air.len() != rec.r.len() {
                    return Err(CalibrationError::Shape);
                }
                let points = rec
                    .o2_percent_air
                    .iter()
                    .zip(&rec.r)
                    .map(|(&c, &r)| Ok((Concentration::new(c)?, r)))
                    .collect::<Result<Vec<_>, CalibrationError>>()?;
                QuenchCurve::new(ModulationFrequency::from_hz(rec.frequency_hz)?, t, points)
            })
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), CalibrationError> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self, CalibrationError> {
        read_json(path)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CalibrationError> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|source| CalibrationError::Json {
            path: path.display().to_string(),
            source,
        })?;
    text.push('\n');
    fs::write(path, text).map_err(|source| CalibrationError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CalibrationError> {
    let text = fs::read_to_string(path).map_err(|source| CalibrationError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| CalibrationError::Json {
        path: path.display().to_string(),
        source,
    })
}
