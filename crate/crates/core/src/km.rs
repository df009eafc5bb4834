//! Kaplan-Meier product-limit estimation with Greenwood variance.

use serde::{Deserialize, Serialize};

use crate::data::{Arm, ValidatedDataset};
use crate::error::{NphError, Result};

/// Right-continuous step survival estimate. `survival[k]` is the value on
/// `[times[k], times[k+1])`; the curve is 1 before `times[0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmCurve {
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
    pub at_risk: Vec<usize>,
    pub events: Vec<usize>,
    pub greenwood_var: Vec<f64>,
    /// Largest observed time (event or censored) in the estimated subset.
    pub last_time: f64,
}

impl KmCurve {
    /// Product-limit estimate over already-sorted `(time, event)` pairs.
    /// Pairs must be ascending in time with events first at ties.
    pub(crate) fn from_sorted<I>(pairs: I) -> Option<Self>
    where
        I: IntoIterator<Item = (f64, bool)>,
    {
        let pairs: Vec<(f64, bool)> = pairs.into_iter().collect();
        let last_time = pairs.last()?.0;
        let mut curve = KmCurve {
            times: Vec::new(),
            survival: Vec::new(),
            at_risk: Vec::new(),
            events: Vec::new(),
            greenwood_var: Vec::new(),
            last_time,
        };
        let mut n_at_risk = pairs.len();
        let mut s = 1.0;
        let mut gw_sum = 0.0;
        let mut i = 0;
        while i < pairs.len() {
            let t = pairs[i].0;
            let mut d = 0;
            let mut c = 0;
            while i < pairs.len() && pairs[i].0 == t {
                if pairs[i].1 {
                    d += 1;
                } else {
                    c += 1;
                }
                i += 1;
            }
            if d > 0 {
                s *= 1.0 - d as f64 / n_at_risk as f64;
                if n_at_risk > d {
                    gw_sum += d as f64 / (n_at_risk as f64 * (n_at_risk - d) as f64);
                }
                curve.times.push(t);
                curve.survival.push(s);
                curve.at_risk.push(n_at_risk);
                curve.events.push(d);
                curve.greenwood_var.push(s * s * gw_sum);
            }
            n_at_risk -= d + c;
        }
        Some(curve)
    }

    /// Ŝ(t), right-continuous.
    pub fn survival_at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&x| x <= t);
        if k == 0 {
            1.0
        } else {
            self.survival[k - 1]
        }
    }

    /// Ŝ(t−), the value just before `t`.
    pub fn survival_left(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&x| x < t);
        if k == 0 {
            1.0
        } else {
            self.survival[k - 1]
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

fn filtered_pairs(dataset: &ValidatedDataset, arm: Option<Arm>, invert: bool) -> Vec<(f64, bool)> {
    let mut pairs: Vec<(f64, bool)> = dataset
        .records()
        .iter()
        .filter(|r| arm.is_none_or(|a| r.arm == a))
        .map(|r| (r.time, r.event ^ invert))
        .collect();
    if invert {
        // re-establish events-first at ties after the role swap
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
    }
    pairs
}

/// Kaplan-Meier estimate for one arm, or pooled when `arm` is `None`.
pub fn km_estimate(dataset: &ValidatedDataset, arm: Option<Arm>) -> Result<KmCurve> {
    KmCurve::from_sorted(filtered_pairs(dataset, arm, false)).ok_or(NphError::EmptyAfterFilter)
}

/// Kaplan-Meier estimate of the censoring distribution (event roles reversed).
pub fn censoring_km(dataset: &ValidatedDataset, arm: Option<Arm>) -> Result<KmCurve> {
    KmCurve::from_sorted(filtered_pairs(dataset, arm, true)).ok_or(NphError::EmptyAfterFilter)
}

/// Pooled-arm KM survival just before `t`.
pub fn pooled_km_left(dataset: &ValidatedDataset, t: f64) -> f64 {
    let records = dataset.records();
    let mut n_at_risk = records.len();
    let mut s = 1.0;
    let mut i = 0;
    while i < records.len() && records[i].time < t {
        let time = records[i].time;
        let mut d = 0;
        let mut leaving = 0;
        while i < records.len() && records[i].time == time {
            d += usize::from(records[i].event);
            leaving += 1;
            i += 1;
        }
        if d > 0 {
            s *= 1.0 - d as f64 / n_at_risk as f64;
        }
        n_at_risk -= leaving;
    }
    s
}
