//! Two-site Stern-Volmer quenching model and the phase-fluorimetric ratio.
//!
//! Units are fixed crate-wide: concentrations in % air (100 % air = 20 % vol O₂),
//! quenching constants in (% air)⁻¹, modulation frequencies stored as angular
//! frequency in rad/s.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("concentration must be finite and >= 0, got {0}")]
    Concentration(f64),
    #[error("modulation frequency must be finite and > 0, got {0} rad/s")]
    Frequency(f64),
    #[error("temperature must be finite, got {0}")]
    Temperature(f64),
    #[error("quenching constant must be finite and >= 0, got {0}")]
    QuenchingConstant(f64),
    #[error("lifetime must be finite and > 0, got {0} s")]
    Lifetime(f64),
    #[error("fraction f must lie in [0, 1], got {0}")]
    Fraction(f64),
}

/// Oxygen concentration in % air.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Concentration(f64);

impl Concentration {
    pub fn new(value: f64) -> Result<Self, DomainError> {
        if value.is_finite() && value >= 0.0 {
            Ok(Self(value))
        } else {
            Err(DomainError::Concentration(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Modulation frequency. All model arithmetic uses the angular value (rad/s);
/// the cyclic value is kept exactly as given so files written in Hz round-trip
/// bit-for-bit.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ModulationFrequency {
    angular: f64,
    hz: f64,
}

impl ModulationFrequency {
    pub fn from_angular(angular: f64) -> Result<Self, DomainError> {
        if angular.is_finite() && angular > 0.0 {
            Ok(Self {
                angular,
                hz: angular / (2.0 * PI),
            })
        } else {
            Err(DomainError::Frequency(angular))
        }
    }

    pub fn from_hz(hz: f64) -> Result<Self, DomainError> {
        let angular = 2.0 * PI * hz;
        if hz.is_finite() && angular > 0.0 {
            Ok(Self { angular, hz })
        } else {
            Err(DomainError::Frequency(angular))
        }
    }

    pub fn angular(self) -> f64 {
        self.angular
    }

    pub fn hz(self) -> f64 {
        self.hz
    }
}

/// Temperature label in °C. Carried as metadata; the model is evaluated at fixed T.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Temperature(f64);

impl Temperature {
    pub fn new(celsius: f64) -> Result<Self, DomainError> {
        if celsius.is_finite() {
            Ok(Self(celsius))
        } else {
            Err(DomainError::Temperature(celsius))
        }
    }

    pub fn celsius(self) -> f64 {
        self.0
    }
}

/// Phase shift θ of the emitted luminescence, in radians.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct PhaseShift(f64);

impl PhaseShift {
    pub fn radians(self) -> f64 {
        self.0
    }

    pub fn tan(self) -> f64 {
        self.0.tan()
    }
}

/// The per-frequency parameter triple `(f, K_SV1, K_SV2)` of the two-site model.
///
/// Fit results follow the convention `ksv1 >= ksv2` (site 1 is the more strongly
/// quenched one); see [`TwoSiteParams::canonical`]. The constructor itself does
/// not enforce the ordering so that interpolated parameters can be represented
/// as-is.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoSiteParams {
    f: f64,
    ksv1: f64,
    ksv2: f64,
}

impl TwoSiteParams {
    pub fn new(f: f64, ksv1: f64, ksv2: f64) -> Result<Self, DomainError> {
        if !(f.is_finite() && (0.0..=1.0).contains(&f)) {
            return Err(DomainError::Fraction(f));
        }
        for k in [ksv1, ksv2] {
            if !(k.is_finite() && k >= 0.0) {
                return Err(DomainError::QuenchingConstant(k));
            }
        }
        Ok(Self { f, ksv1, ksv2 })
    }

    pub fn f(&self) -> f64 {
        self.f
    }

    pub fn ksv1(&self) -> f64 {
        self.ksv1
    }

    pub fn ksv2(&self) -> f64 {
        self.ksv2
    }

    /// Relabels the sites so that `ksv1 >= ksv2`. The curve is unchanged:
    /// swapping the constants together with `f ↔ 1 − f` is a symmetry of the model.
    pub fn canonical(self) -> Self {
        if self.ksv1 >= self.ksv2 {
            self
        } else {
            Self {
                f: 1.0 - self.f,
                ksv1: self.ksv2,
                ksv2: self.ksv1,
            }
        }
    }
}

/// Single-site Stern-Volmer ratio `I₀/I = τ₀/τ = 1 + K·c`.
pub fn sv_ratio(ksv: f64, c: Concentration) -> Result<f64, DomainError> {
    if !(ksv.is_finite() && ksv >= 0.0) {
        return Err(DomainError::QuenchingConstant(ksv));
    }
    Ok(1.0 + ksv * c.value())
}

/// Two-site intensity ratio `I₀/I`, the reciprocal of [`phase_ratio_r`].
pub fn two_site_intensity_ratio(p: &TwoSiteParams, c: Concentration) -> f64 {
    1.0 / phase_ratio_r(p, c)
}

/// Phase shift of a single-exponential emitter, `θ = arctan(ωτ)`.
pub fn phase_from_lifetime(
    omega: ModulationFrequency,
    tau_seconds: f64,
) -> Result<PhaseShift, DomainError> {
    if !(tau_seconds.is_finite() && tau_seconds > 0.0) {
        return Err(DomainError::Lifetime(tau_seconds));
    }
    Ok(PhaseShift((omega.angular() * tau_seconds).atan()))
}

/// Phase ratio `r = tan θ / tan θ₀ = f/(1+K₁c) + (1−f)/(1+K₂c)`, in (0, 1].
///
/// Evaluated as `1 − c·[f·K₁/(1+K₁c) + (1−f)·K₂/(1+K₂c)]`, which is
/// algebraically identical and returns exactly 1 at `c = 0` for every `f`.
pub fn phase_ratio_r(p: &TwoSiteParams, c: Concentration) -> f64 {
    let c = c.value();
    1.0 - c * (p.f * p.ksv1 / (1.0 + p.ksv1 * c) + (1.0 - p.f) * p.ksv2 / (1.0 + p.ksv2 * c))
}
