//! Built-in fixture sensor used by examples, tests and the shipped sample files.
//!
//! The parameter curves are smooth made-up functions of frequency in the range a
//! Pt-porphyrin sensor spot typically shows (f ≈ 0.8–0.9, K_SV1 ≈ 0.02–0.03
//! (% air)⁻¹, K_SV2 ≈ K_SV1/10). They are not measured values.

use crate::calibration::{CalibrationKnot, CalibrationTable};
use crate::quench::{
    phase_ratio_r, Concentration, ModulationFrequency, Temperature, TwoSiteParams,
};

pub const TEMPERATURE_C: f64 = 45.0;

/// Unquenched lifetime used to synthesize raw phase readings, in seconds.
pub const TAU0_SECONDS: f64 = 50e-6;

/// Concentrations (% air) of the fixture's quench curves and mismatch test set.
pub const CONCENTRATIONS: [f64; 10] = [0.0, 5.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 80.0, 100.0];

/// Sixteen log-spaced frequencies, 500 Hz to 16 kHz.
pub fn frequencies_hz() -> Vec<f64> {
    (0..16).map(|k| 500.0 * 2f64.powf(k as f64 / 3.0)).collect()
}

pub fn frequencies() -> Vec<ModulationFrequency> {
    frequencies_hz()
        .into_iter()
        .map(|hz| ModulationFrequency::from_hz(hz).expect("positive"))
        .collect()
}

/// Fixture parameters at a frequency in [500 Hz, 16 kHz].
pub fn params_at_hz(hz: f64) -> TwoSiteParams {
    let s = ((hz / 500.0).ln() / 32f64.ln()).clamp(0.0, 1.0);
    let f = 0.80 + 0.10 * (0.5 * std::f64::consts::PI * s).sin();
    let ksv1 = 0.030 - 0.010 * s.powf(1.5);
    let ksv2 = 0.1 * ksv1 * (1.0 + 0.2 * s);
    TwoSiteParams::new(f, ksv1, ksv2).expect("fixture parameters are valid")
}

/// Calibration table with the fixture parameters as exact knots.
pub fn calibration() -> CalibrationTable {
    let knots = frequencies()
        .into_iter()
        .map(|omega| CalibrationKnot {
            omega,
            params: params_at_hz(omega.hz()),
            converged: true,
            fit: None,
        })
        .collect();
    CalibrationTable::from_knots(Temperature::new(TEMPERATURE_C).expect("finite"), knots)
        .expect("fixture knots are valid")
}

/// One raw phase reading: `(frequency_hz, temperature_c, o2_percent_air, tan_theta)`.
pub type RawRow = (f64, f64, f64, f64);

/// Raw phase readings synthesized from the fixture model with
/// `tan θ = ω·τ₀·r(c)`, ordered by frequency then concentration.
pub fn raw_rows() -> Vec<RawRow> {
    let mut rows = Vec::new();
    for omega in frequencies() {
        let p = params_at_hz(omega.hz());
        let tan0 = omega.angular() * TAU0_SECONDS;
        for c in CONCENTRATIONS {
            let r = phase_ratio_r(&p, Concentration::new(c).expect("non-negative"));
            rows.push((omega.hz(), TEMPERATURE_C, c, tan0 * r));
        }
    }
    rows
}
