//! Weighted log-rank statistics over the Fleming-Harrington weight family.

use serde::{Deserialize, Serialize};

use crate::data::{Arm, ValidatedDataset};
use crate::error::{NphError, Result};
use crate::normal::TestResult;

/// Fleming-Harrington weight `S(t−)^rho · (1 − S(t−))^gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FhWeight {
    pub rho: f64,
    pub gamma: f64,
}

impl FhWeight {
    pub const LOGRANK: FhWeight = FhWeight {
        rho: 0.0,
        gamma: 0.0,
    };

    pub fn new(rho: f64, gamma: f64) -> Result<Self> {
        if !(rho.is_finite() && gamma.is_finite() && rho >= 0.0 && gamma >= 0.0) {
            return Err(NphError::InvalidWeight { rho, gamma });
        }
        Ok(Self { rho, gamma })
    }

    pub fn is_logrank(&self) -> bool {
        self.rho == 0.0 && self.gamma == 0.0
    }

    pub fn label(&self) -> String {
        format!("FH({},{})", self.rho, self.gamma)
    }
}

impl std::fmt::Display for FhWeight {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "FH({},{})", self.rho, self.gamma)
    }
}

/// `s_left^rho · (1 − s_left)^gamma` with `0^0 = 1`.
pub fn fh_weight_at(weight: FhWeight, s_left: f64) -> f64 {
    let pow = |base: f64, exp: f64| if exp == 0.0 { 1.0 } else { base.powf(exp) };
    pow(s_left, weight.rho) * pow(1.0 - s_left, weight.gamma)
}

/// Pooled risk-set bookkeeping at each distinct event time. Shared by the
/// rank tests, their correlation and the Cox fits.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskTable {
    pub times: Vec<f64>,
    /// Pooled number at risk.
    pub n: Vec<f64>,
    /// Experimental-arm number at risk.
    pub n_exp: Vec<f64>,
    /// Pooled events.
    pub d: Vec<f64>,
    /// Experimental-arm events.
    pub d_exp: Vec<f64>,
    /// Pooled KM just before each event time.
    pub s_left: Vec<f64>,
}

impl RiskTable {
    pub fn new(dataset: &ValidatedDataset) -> Self {
        let records = dataset.records();
        let mut table = RiskTable {
            times: Vec::new(),
            n: Vec::new(),
            n_exp: Vec::new(),
            d: Vec::new(),
            d_exp: Vec::new(),
            s_left: Vec::new(),
        };
        let mut n = records.len();
        let mut n_exp = dataset.n_arm(Arm::Experimental);
        let mut s = 1.0;
        let mut i = 0;
        while i < records.len() {
            let t = records[i].time;
            let (mut d, mut d_exp, mut leave, mut leave_exp) = (0usize, 0usize, 0usize, 0usize);
            while i < records.len() && records[i].time == t {
                let r = &records[i];
                let is_exp = r.arm == Arm::Experimental;
                if r.event {
                    d += 1;
                    d_exp += usize::from(is_exp);
                }
                leave += 1;
                leave_exp += usize::from(is_exp);
                i += 1;
            }
            if d > 0 {
                table.times.push(t);
                table.n.push(n as f64);
                table.n_exp.push(n_exp as f64);
                table.d.push(d as f64);
                table.d_exp.push(d_exp as f64);
                table.s_left.push(s);
                s *= 1.0 - d as f64 / n as f64;
            }
            n -= leave;
            n_exp -= leave_exp;
        }
        table
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Observed-minus-expected experimental events at each event time.
    pub fn observed_minus_expected(&self) -> Vec<f64> {
        (0..self.len())
            .map(|k| self.d_exp[k] - self.d[k] * self.n_exp[k] / self.n[k])
            .collect()
    }

    /// Hypergeometric variance at each event time, tie-corrected.
    pub fn variance_terms(&self) -> Vec<f64> {
        (0..self.len())
            .map(|k| {
                let (n, ne, d) = (self.n[k], self.n_exp[k], self.d[k]);
                if n <= 1.0 {
                    0.0
                } else {
                    ne * (n - ne) * d * (n - d) / (n * n * (n - 1.0))
                }
            })
            .collect()
    }

    pub fn fh_weights(&self, weight: FhWeight) -> Vec<f64> {
        self.s_left
            .iter()
            .map(|&s| fh_weight_at(weight, s))
            .collect()
    }
}

/// Per-event-time decomposition of a weighted log-rank statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WlrComponents {
    pub event_times: Vec<f64>,
    pub weights: Vec<f64>,
    pub observed_minus_expected: Vec<f64>,
    pub variance_terms: Vec<f64>,
}

impl WlrComponents {
    pub fn from_table(table: &RiskTable, weights: Vec<f64>) -> Self {
        debug_assert_eq!(weights.len(), table.len());
        Self {
            event_times: table.times.clone(),
            weights,
            observed_minus_expected: table.observed_minus_expected(),
            variance_terms: table.variance_terms(),
        }
    }

    /// Σ w_k u_k.
    pub fn score(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.observed_minus_expected)
            .map(|(w, u)| w * u)
            .sum()
    }

    /// Σ w_k² v_k.
    pub fn variance(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.variance_terms)
            .map(|(w, v)| w * w * v)
            .sum()
    }

    pub fn z(&self) -> Result<f64> {
        let var = self.variance();
        if var <= 0.0 || !var.is_finite() {
            return Err(NphError::ZeroVariance);
        }
        Ok(self.score() / var.sqrt())
    }
}

pub fn wlr_components(dataset: &ValidatedDataset, weight: FhWeight) -> Result<WlrComponents> {
    dataset.require_rank_testable()?;
    let table = RiskTable::new(dataset);
    let weights = table.fh_weights(weight);
    Ok(WlrComponents::from_table(&table, weights))
}

pub fn wlr_test(dataset: &ValidatedDataset, weight: FhWeight) -> Result<TestResult> {
    let comps = wlr_components(dataset, weight)?;
    Ok(TestResult::from_z(comps.z()?, weight_label(weight)))
}

/// Z for an arbitrary weight vector on a precomputed risk table.
pub fn weighted_z(table: &RiskTable, weights: &[f64]) -> Result<f64> {
    let u = table.observed_minus_expected();
    let v = table.variance_terms();
    let (mut num, mut var) = (0.0, 0.0);
    for k in 0..table.len() {
        num += weights[k] * u[k];
        var += weights[k] * weights[k] * v[k];
    }
    if var <= 0.0 || !var.is_finite() {
        return Err(NphError::ZeroVariance);
    }
    Ok(num / var.sqrt())
}

pub(crate) fn weight_label(weight: FhWeight) -> String {
    if weight.is_logrank() {
        "Log-rank".to_string()
    } else {
        weight.label()
    }
}
