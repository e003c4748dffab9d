//! Calibration and neural-network inversion for luminescence-quenching
//! oxygen sensors read out by phase fluorimetry.
//!
//! The pipeline runs in stages, each owned by one module:
//!
//! * [`quench`]: closed-form two-site Stern-Volmer physics and the phase ratio
//!   `r = tan θ / tan θ₀`.
//! * [`spline`]: natural cubic splines over modulation frequency.
//! * [`calibration`]: per-frequency Levenberg-Marquardt fits of `(f, K_SV1, K_SV2)`.
//! * [`dataset`]: synthetic observation generation, train/dev split,
//!   model-mismatch test sets and the CSV dataset format.
//! * [`network`]: a small sigmoid feed-forward regressor trained with full-batch Adam.
//! * [`evaluation`]: MAE / AE metrics, architecture sweeps and error profiles.
//! * [`cli`]: the `quenchnet` command-line driver.

mod activation;
pub mod calibration;
pub mod cli;
pub mod dataset;
pub mod evaluation;
pub mod fixture;
pub mod network;
pub mod quench;
pub mod rng;
pub mod spline;

pub use calibration::{CalibrationTable, FitResult, QuenchCurve};
pub use dataset::{Dataset, MismatchSpec, Observation, Provenance};
pub use network::{NetworkModel, NetworkSpec, TrainConfig, TrainReport};
pub use quench::{Concentration, ModulationFrequency, PhaseShift, Temperature, TwoSiteParams};
pub use spline::{CubicSpline, ParamCurves};
