//! Standard normal helpers and the common test-result record.

use libm::erfc;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc_inv;

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Φ(x).
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// 1 − Φ(x), accurate in the upper tail.
#[inline]
pub fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

/// Φ⁻¹(p) for p in [0, 1].
#[inline]
pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else {
        -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
    }
}

/// Upper-tail p-value of a chi-square with one degree of freedom.
pub fn chi2_1_sf(x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        erfc((x * 0.5).sqrt())
    }
}

/// Outcome of a standardized test. `z < 0` favors the experimental arm and
/// `p_one_sided` is the lower tail Φ(z).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub z: f64,
    pub p_one_sided: f64,
    pub p_two_sided: f64,
    pub method_label: String,
}

impl TestResult {
    pub fn from_z(z: f64, method_label: impl Into<String>) -> Self {
        let p_one_sided = norm_cdf(z);
        let p_two_sided = (2.0 * p_one_sided.min(norm_sf(z))).min(1.0);
        Self {
            z,
            p_one_sided,
            p_two_sided,
            method_label: method_label.into(),
        }
    }

    /// The same test read with control as the hypothesized superior arm.
    pub fn reoriented(&self) -> Self {
        Self::from_z(-self.z, self.method_label.clone())
    }
}
