//! Natural cubic spline interpolation and the frequency-dependent parameter curves.

use thiserror::Error;

use crate::quench::{DomainError, ModulationFrequency, TwoSiteParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplineError {
    #[error("knot abscissae and ordinates differ in length ({xs} vs {ys})")]
    LengthMismatch { xs: usize, ys: usize },
    #[error("a cubic spline needs at least 3 knots, got {0}")]
    TooFewKnots(usize),
    #[error("knot abscissae must be strictly increasing (index {0})")]
    NotIncreasing(usize),
    #[error("non-finite knot value at index {0}")]
    NonFinite(usize),
    #[error("{x} is outside the spline domain [{lo}, {hi}]")]
    OutOfDomain { x: f64, lo: f64, hi: f64 },
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Natural cubic spline (zero second derivative at both ends).
///
/// Stored as knot values plus the second derivative `M_k` at every knot; on
/// `[x_k, x_{k+1}]` the interpolant is the unique cubic matching the values and
/// second derivatives at both interval ends.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    second: Vec<f64>,
}

impl CubicSpline {
    pub fn new(xs: &[f64], ys: &[f64]) -> Result<Self, SplineError> {
        if xs.len() != ys.len() {
            return Err(SplineError::LengthMismatch {
                xs: xs.len(),
                ys: ys.len(),
            });
        }
        let n = xs.len();
        if n < 3 {
            return Err(SplineError::TooFewKnots(n));
        }
        if let Some(i) = (0..n).find(|&i| !xs[i].is_finite() || !ys[i].is_finite()) {
            return Err(SplineError::NonFinite(i));
        }
        if let Some(i) = (1..n).find(|&i| xs[i] <= xs[i - 1]) {
            return Err(SplineError::NotIncreasing(i));
        }

        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let slope: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / h[i]).collect();

        // Interior system for M_1..M_{n-2}:
        //   h_{i-1} M_{i-1} + 2(h_{i-1}+h_i) M_i + h_i M_{i+1} = 6 (s_i - s_{i-1})
        // with M_0 = M_{n-1} = 0. Forward sweep, then back substitution.
        let m = n - 2;
        let mut diag = vec![0.0; m];
        let mut rhs = vec![0.0; m];
        for k in 0..m {
            let i = k + 1;
            diag[k] = 2.0 * (h[i - 1] + h[i]);
            rhs[k] = 6.0 * (slope[i] - slope[i - 1]);
        }
        for k in 1..m {
            let w = h[k] / diag[k - 1];
            diag[k] -= w * h[k];
            rhs[k] -= w * rhs[k - 1];
        }
        let mut second = vec![0.0; n];
        for k in (0..m).rev() {
            let upper = if k + 1 < m {
                h[k + 1] * second[k + 2]
            } else {
                0.0
            };
            second[k + 1] = (rhs[k] - upper) / diag[k];
        }

        Ok(Self {
            xs: xs.to_vec(),
            ys: ys.to_vec(),
            second,
        })
    }

    pub fn knots_x(&self) -> &[f64] {
        &self.xs
    }

    pub fn knots_y(&self) -> &[f64] {
        &self.ys
    }

    /// Second derivatives at the knots (zero at both ends).
    pub fn knot_second_derivatives(&self) -> &[f64] {
        &self.second
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }

    /// Evaluates the spline. No extrapolation: `x` must lie within the knot range.
    pub fn eval(&self, x: f64) -> Result<f64, SplineError> {
        let (lo, hi) = self.domain();
        if !(x >= lo && x <= hi) {
            return Err(SplineError::OutOfDomain { x, lo, hi });
        }
        // first knot strictly greater than x
        let upper = self.xs.partition_point(|&k| k <= x);
        if upper > 0 && self.xs[upper - 1] == x {
            return Ok(self.ys[upper - 1]);
        }
        let i = upper - 1;
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let (y0, y1) = (self.ys[i], self.ys[i + 1]);
        let (m0, m1) = (self.second[i], self.second[i + 1]);
        let h = x1 - x0;
        let a = x1 - x;
        let b = x - x0;
        Ok((m0 * a * a * a + m1 * b * b * b) / (6.0 * h)
            + (y0 / h - m0 * h / 6.0) * a
            + (y1 / h - m1 * h / 6.0) * b)
    }
}

/// Spline curves `f(ω)`, `K_SV1(ω)`, `K_SV2(ω)` over angular frequency, all
/// sharing the calibration frequency grid as knots.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamCurves {
    f_curve: CubicSpline,
    ksv1_curve: CubicSpline,
    ksv2_curve: CubicSpline,
}

impl ParamCurves {
    pub fn from_knots(
        omegas: &[ModulationFrequency],
        params: &[TwoSiteParams],
    ) -> Result<Self, SplineError> {
        let xs: Vec<f64> = omegas.iter().map(|w| w.angular()).collect();
        let col = |g: fn(&TwoSiteParams) -> f64| params.iter().map(g).collect::<Vec<_>>();
        Ok(Self {
            f_curve: CubicSpline::new(&xs, &col(TwoSiteParams::f))?,
            ksv1_curve: CubicSpline::new(&xs, &col(TwoSiteParams::ksv1))?,
            ksv2_curve: CubicSpline::new(&xs, &col(TwoSiteParams::ksv2))?,
        })
    }

    pub fn f_curve(&self) -> &CubicSpline {
        &self.f_curve
    }

    pub fn ksv1_curve(&self) -> &CubicSpline {
        &self.ksv1_curve
    }

    pub fn ksv2_curve(&self) -> &CubicSpline {
        &self.ksv2_curve
    }

    /// Angular-frequency domain covered by the curves.
    pub fn domain(&self) -> (f64, f64) {
        self.f_curve.domain()
    }

    /// Parameters at `omega`, with `f` clamped into [0, 1] and the constants to >= 0.
    pub fn sample_params(&self, omega: ModulationFrequency) -> Result<TwoSiteParams, SplineError> {
        let w = omega.angular();
        let f = self.f_curve.eval(w)?.clamp(0.0, 1.0);
        let k1 = self.ksv1_curve.eval(w)?.max(0.0);
        let k2 = self.ksv2_curve.eval(w)?.max(0.0);
        Ok(TwoSiteParams::new(f, k1, k2)?)
    }
}
