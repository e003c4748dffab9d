//! Logistic sigmoid with a branch-free exp so batch evaluation vectorizes.
//!
//! The polynomial agrees with libm `exp` to about one ulp over the range the
//! sigmoid can resolve. Every lane does the same IEEE operations, so results
//! do not depend on which instruction set the dispatcher picks.

const LOG2E: f64 = std::f64::consts::LOG2_E;
// ln 2 split so k·LN2_HI is exact over the clamped range
const LN2_HI: f64 = f64::from_bits(0x3fe6_2e42_fee0_0000);
const LN2_LO: f64 = f64::from_bits(0x3dea_39ef_3579_3c76);
// 1.5·2^52: adding it rounds to an integer held in the low mantissa bits
const SHIFT: f64 = 6_755_399_441_055_744.0;

#[inline(always)]
fn exp(x: f64) -> f64 {
    let x = x.clamp(-708.0, 709.0);
    let t = x * LOG2E + SHIFT;
    let k = t - SHIFT;
    let r = (x - k * LN2_HI) - k * LN2_LO;
    // Taylor to r^12 on |r| ≤ ln2/2
    let mut p = 1.0 / 479_001_600.0;
    p = p * r + 1.0 / 39_916_800.0;
    p = p * r + 1.0 / 3_628_800.0;
    p = p * r + 1.0 / 362_880.0;
    p = p * r + 1.0 / 40_320.0;
    p = p * r + 1.0 / 5_040.0;
    p = p * r + 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    p = p * r + 1.0;
    p = p * r + 1.0;
    p * f64::from_bits(t.to_bits().wrapping_add(1023) << 52)
}

#[inline(always)]
pub(crate) fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + exp(-z))
}

fn sigmoid_slice_generic(v: &mut [f64]) {
    for z in v {
        *z = sigmoid(*z);
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
fn sigmoid_slice_avx2(v: &mut [f64]) {
    for z in v {
        *z = sigmoid(*z);
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f")]
fn sigmoid_slice_avx512(v: &mut [f64]) {
    for z in v {
        *z = sigmoid(*z);
    }
}

pub(crate) fn sigmoid_in_place(v: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx512f") {
            // SAFETY: the feature was detected at runtime
            return unsafe { sigmoid_slice_avx512(v) };
        }
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: as above
            return unsafe { sigmoid_slice_avx2(v) };
        }
    }
    sigmoid_slice_generic(v)
}
