//! Treatment-effect estimation: Cox partial likelihood for the arm indicator,
//! the Sasieni weighted Cox estimator, piecewise Cox over time intervals, and
//! Schoenfeld-residual diagnostics with the Grambsch-Therneau test.
//!
//! Ties use the Breslow approximation throughout. The weighted fit solves the
//! weighted score equation; its standard error is the model-based
//! `sqrt(Σ w² V) / Σ w V`, which reduces to `1/sqrt(I)` for unit weights.

use serde::{Deserialize, Serialize};

use crate::data::{Arm, SubjectRecord, ValidatedDataset};
use crate::error::{NphError, Result};
use crate::normal::{chi2_1_sf, norm_quantile};
use crate::wlr::{FhWeight, RiskTable};

const MAX_ITER: usize = 50;
const SCORE_TOL: f64 = 1e-9;
const STEP_TOL: f64 = 1e-10;
/// |log HR| beyond this is treated as a diverging (monotone) likelihood.
const DIVERGENCE_BOUND: f64 = 15.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxFit {
    pub log_hr: f64,
    pub se: f64,
    pub hr: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub weight: Option<FhWeight>,
    pub iterations: usize,
    pub converged: bool,
}

impl CoxFit {
    pub fn wald_z(&self) -> f64 {
        self.log_hr / self.se
    }
}

/// Weighted score U(β), and Σ w_k d_k p_k(1−p_k), Σ w_k² d_k p_k(1−p_k).
fn score_info(table: &RiskTable, weights: Option<&[f64]>, beta: f64) -> (f64, f64, f64) {
    let eb = beta.exp();
    let (mut u, mut info, mut info2) = (0.0, 0.0, 0.0);
    for k in 0..table.len() {
        let w = weights.map_or(1.0, |w| w[k]);
        let ne = table.n_exp[k] * eb;
        let nc = table.n[k] - table.n_exp[k];
        let p = ne / (ne + nc);
        let v = table.d[k] * p * (1.0 - p);
        u += w * (table.d_exp[k] - table.d[k] * p);
        info += w * v;
        info2 += w * w * v;
    }
    (u, info, info2)
}

/// Solves the (weighted) score equation by safeguarded Newton iteration.
pub fn cox_fit_table(
    table: &RiskTable,
    weights: Option<&[f64]>,
    weight: Option<FhWeight>,
) -> CoxFit {
    let mut beta = 0.0;
    let mut iterations = 0;
    let mut converged = false;
    // bracket on the root; U is non-increasing in beta
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    let (mut u, mut info, mut info2) = score_info(table, weights, beta);
    while iterations < MAX_ITER {
        iterations += 1;
        if u.abs() < SCORE_TOL {
            converged = true;
            break;
        }
        if u > 0.0 {
            lo = lo.max(beta);
        } else {
            hi = hi.min(beta);
        }
        let mut next = if info > 0.0 {
            beta + u / info
        } else {
            beta + u.signum()
        };
        next = next.clamp(beta - 2.0, beta + 2.0);
        if !(next > lo && next < hi) && lo.is_finite() && hi.is_finite() {
            next = 0.5 * (lo + hi);
        }
        let step = next - beta;
        beta = next;
        (u, info, info2) = score_info(table, weights, beta);
        if step.abs() < STEP_TOL {
            converged = true;
            break;
        }
        if beta.abs() > DIVERGENCE_BOUND {
            break;
        }
    }
    if beta.abs() > DIVERGENCE_BOUND || !(info > 0.0) {
        converged = false;
    }
    let se = if weights.is_some() {
        info2.sqrt() / info
    } else {
        1.0 / info.sqrt()
    };
    let (ci_low, ci_high) = if converged && se.is_finite() {
        let half = norm_quantile(0.975) * se;
        (Some((beta - half).exp()), Some((beta + half).exp()))
    } else {
        (None, None)
    };
    CoxFit {
        log_hr: beta,
        se,
        hr: beta.exp(),
        ci_low,
        ci_high,
        weight,
        iterations,
        converged,
    }
}

/// Cox HR for experimental vs control. With a weight, the Sasieni weighted
/// estimator using FH weights at the pooled KM left limit. FH(0,0) is the
/// ordinary fit.
pub fn cox_fit(dataset: &ValidatedDataset, weight: Option<FhWeight>) -> Result<CoxFit> {
    dataset.require_rank_testable()?;
    let table = RiskTable::new(dataset);
    Ok(fit_on_table(&table, weight))
}

pub(crate) fn fit_on_table(table: &RiskTable, weight: Option<FhWeight>) -> CoxFit {
    match weight {
        Some(w) if !w.is_logrank() => {
            let weights = table.fh_weights(w);
            cox_fit_table(table, Some(&weights), Some(w))
        }
        _ => cox_fit_table(table, None, weight),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalFit {
    pub start: f64,
    pub end: f64,
    /// `None` when the interval lacks an event in either arm.
    pub fit: Option<CoxFit>,
    pub events_control: usize,
    pub events_experimental: usize,
}

impl IntervalFit {
    pub fn estimable(&self) -> bool {
        self.fit.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseCoxFit {
    pub cut_points: Vec<f64>,
    pub intervals: Vec<IntervalFit>,
}

/// Records restricted to the interval `(start, end]`: subjects still under
/// observation after `start`, followed to `min(time, end)`.
pub fn split_interval(dataset: &ValidatedDataset, start: f64, end: f64) -> Vec<SubjectRecord> {
    dataset
        .records()
        .iter()
        .filter(|r| start == 0.0 || r.time > start)
        .map(|r| SubjectRecord {
            time: r.time.min(end),
            event: r.event && r.time <= end,
            ..*r
        })
        .collect()
}

/// Separate Cox fits on each interval between ascending cut points.
/// Non-finite and non-positive cuts are ignored.
pub fn piecewise_cox(dataset: &ValidatedDataset, cut_points: &[f64]) -> Result<PiecewiseCoxFit> {
    dataset.require_two_arms()?;
    let mut cuts: Vec<f64> = cut_points
        .iter()
        .copied()
        .filter(|c| c.is_finite() && *c > 0.0)
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut bounds = vec![0.0];
    bounds.extend(&cuts);
    bounds.push(f64::INFINITY);

    let mut intervals = Vec::with_capacity(bounds.len() - 1);
    for pair in bounds.windows(2) {
        let (start, end) = (pair[0], pair[1]);
        let records = split_interval(dataset, start, end);
        let count = |arm| records.iter().filter(|r| r.event && r.arm == arm).count();
        let events_control = count(Arm::Control);
        let events_experimental = count(Arm::Experimental);
        let fit = if events_control > 0 && events_experimental > 0 {
            let sub = ValidatedDataset::new(records)?;
            Some(fit_on_table(&RiskTable::new(&sub), None)).filter(|f| f.converged)
        } else {
            None
        };
        intervals.push(IntervalFit {
            start,
            end,
            fit,
            events_control,
            events_experimental,
        });
    }
    Ok(PiecewiseCoxFit {
        cut_points: cuts,
        intervals,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchoenfeldDiagnostics {
    /// One entry per observed event.
    pub event_times: Vec<f64>,
    pub residuals: Vec<f64>,
    /// `beta + D · var(beta) · residual`, with D the number of events.
    pub scaled_residuals: Vec<f64>,
    pub gt_statistic: f64,
    pub gt_p: f64,
}

/// Schoenfeld residuals from the unweighted fit and the Grambsch-Therneau
/// test for a linear trend in time (identity transform).
pub fn schoenfeld_gt_test(dataset: &ValidatedDataset) -> Result<SchoenfeldDiagnostics> {
    let fit = cox_fit(dataset, None)?;
    if !fit.converged {
        return Err(NphError::NonConvergence);
    }
    let table = RiskTable::new(dataset);
    Ok(schoenfeld_on_table(&table, &fit))
}

pub(crate) fn schoenfeld_on_table(table: &RiskTable, fit: &CoxFit) -> SchoenfeldDiagnostics {
    let eb = fit.log_hr.exp();
    let var = fit.se * fit.se;
    let total_events: f64 = table.d.iter().sum();
    let scale = total_events * var;

    let mut event_times = Vec::new();
    let mut residuals = Vec::new();
    let mut mean_covariate = Vec::with_capacity(table.len());
    for k in 0..table.len() {
        let ne = table.n_exp[k] * eb;
        let xbar = ne / (ne + table.n[k] - table.n_exp[k]);
        mean_covariate.push(xbar);
        let d_exp = table.d_exp[k] as usize;
        let d_ctl = table.d[k] as usize - d_exp;
        for _ in 0..d_exp {
            event_times.push(table.times[k]);
            residuals.push(1.0 - xbar);
        }
        for _ in 0..d_ctl {
            event_times.push(table.times[k]);
            residuals.push(-xbar);
        }
    }
    let scaled_residuals: Vec<f64> = residuals.iter().map(|r| fit.log_hr + scale * r).collect();

    let g_mean = event_times.iter().sum::<f64>() / total_events;
    let (mut cross, mut g_ss) = (0.0, 0.0);
    for k in 0..table.len() {
        let g = table.times[k] - g_mean;
        cross += g * (table.d_exp[k] - table.d[k] * mean_covariate[k]);
        g_ss += g * g * table.d[k];
    }
    let gt_statistic = if g_ss > 0.0 {
        scale * cross * cross / g_ss
    } else {
        0.0
    };
    SchoenfeldDiagnostics {
        event_times,
        residuals,
        scaled_residuals,
        gt_statistic,
        gt_p: chi2_1_sf(gt_statistic),
    }
}
