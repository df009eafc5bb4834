//! Maximum-type combination tests: MaxCombo over FH weights, Lee's
//! two-component combo, and the Breslow combo.

use serde::{Deserialize, Serialize};

use crate::data::ValidatedDataset;
use crate::error::{NphError, Result};
use crate::estimation::{fit_on_table, CoxFit};
use crate::mvn::MvnIntegrator;
use crate::normal::{norm_cdf, norm_sf};
use crate::wlr::{FhWeight, RiskTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComboSpec {
    components: Vec<FhWeight>,
    label: String,
}

impl ComboSpec {
    pub fn new(components: Vec<FhWeight>, label: impl Into<String>) -> Result<Self> {
        if components.len() < 2 {
            return Err(NphError::InvalidCombo(
                "at least two components are required".into(),
            ));
        }
        for (i, a) in components.iter().enumerate() {
            FhWeight::new(a.rho, a.gamma)?;
            if components[..i].contains(a) {
                return Err(NphError::InvalidCombo(format!("duplicate component {a}")));
            }
        }
        Ok(Self {
            components,
            label: label.into(),
        })
    }

    /// FH(0,0), FH(0,1), FH(1,1), FH(1,0).
    pub fn max_combo() -> Self {
        let w = |r, g| FhWeight { rho: r, gamma: g };
        Self {
            components: vec![w(0.0, 0.0), w(0.0, 1.0), w(1.0, 1.0), w(1.0, 0.0)],
            label: "MaxCombo".into(),
        }
    }

    /// FH(0,1), FH(1,0).
    pub fn lee() -> Self {
        let w = |r, g| FhWeight { rho: r, gamma: g };
        Self {
            components: vec![w(0.0, 1.0), w(1.0, 0.0)],
            label: "Lee".into(),
        }
    }

    pub fn components(&self) -> &[FhWeight] {
        &self.components
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComboResult {
    pub label: String,
    pub component_labels: Vec<String>,
    /// Component Z's in the usual orientation (negative favors experimental).
    pub component_z: Vec<f64>,
    /// Unadjusted one-sided p-values, Φ(z).
    pub component_p: Vec<f64>,
    pub correlation: Vec<Vec<f64>>,
    /// Maximum of the sign-flipped components (positive favors experimental).
    pub z_max: f64,
    pub p_adjusted: f64,
    /// P(max |Z_i| ≥ max |z_i|); filled for reporting, skipped in simulations.
    pub p_two_sided: Option<f64>,
    pub selected_index: usize,
    pub selected_weight: Option<FhWeight>,
    pub selected_hr: Option<CoxFit>,
}

impl ComboResult {
    pub fn selected_p(&self) -> f64 {
        self.component_p[self.selected_index]
    }
}

struct WeightedParts {
    score: Vec<f64>,
    weights: Vec<Vec<f64>>,
    var_terms: Vec<f64>,
}

fn weighted_parts(table: &RiskTable, weights: Vec<Vec<f64>>) -> WeightedParts {
    WeightedParts {
        score: weights
            .iter()
            .map(|w| {
                w.iter()
                    .zip(table.observed_minus_expected())
                    .map(|(w, u)| w * u)
                    .sum()
            })
            .collect(),
        var_terms: table.variance_terms(),
        weights,
    }
}

impl WeightedParts {
    fn covariance(&self, i: usize, j: usize) -> f64 {
        self.weights[i]
            .iter()
            .zip(&self.weights[j])
            .zip(&self.var_terms)
            .map(|((a, b), v)| a * b * v)
            .sum()
    }

    fn z_and_corr(&self) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let m = self.weights.len();
        let mut cov = vec![vec![0.0; m]; m];
        for i in 0..m {
            for j in 0..=i {
                let c = self.covariance(i, j);
                cov[i][j] = c;
                cov[j][i] = c;
            }
        }
        let sd: Vec<f64> = (0..m).map(|i| cov[i][i].sqrt()).collect();
        if sd.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(NphError::ZeroVariance);
        }
        let z = (0..m).map(|i| self.score[i] / sd[i]).collect();
        let corr = (0..m)
            .map(|i| {
                (0..m)
                    .map(|j| {
                        if i == j {
                            1.0
                        } else {
                            (cov[i][j] / (cov[i][i] * cov[j][j]).sqrt()).clamp(-1.0, 1.0)
                        }
                    })
                    .collect()
            })
            .collect();
        Ok((z, corr))
    }
}

/// Plug-in correlation of the standardized weighted log-rank components.
pub fn wlr_correlation(dataset: &ValidatedDataset, spec: &ComboSpec) -> Result<Vec<Vec<f64>>> {
    dataset.require_rank_testable()?;
    let table = RiskTable::new(dataset);
    let weights = spec
        .components
        .iter()
        .map(|&w| table.fh_weights(w))
        .collect();
    Ok(weighted_parts(&table, weights).z_and_corr()?.1)
}

pub fn max_combo_test(dataset: &ValidatedDataset, spec: &ComboSpec) -> Result<ComboResult> {
    max_combo_test_with(dataset, spec, &MvnIntegrator::default())
}

pub fn max_combo_test_with(
    dataset: &ValidatedDataset,
    spec: &ComboSpec,
    mvn: &MvnIntegrator,
) -> Result<ComboResult> {
    dataset.require_rank_testable()?;
    let table = RiskTable::new(dataset);
    let weights = spec
        .components
        .iter()
        .map(|&w| table.fh_weights(w))
        .collect();
    let mut result = max_combo_from_weights(&table, weights, mvn, true)?;
    let selected_weight = spec.components[result.selected_index];
    result.label = spec.label.clone();
    result.component_labels = spec.components.iter().map(|w| w.label()).collect();
    result.selected_weight = Some(selected_weight);
    result.selected_hr = Some(fit_on_table(&table, Some(selected_weight)));
    Ok(result)
}

/// Whether the max test rejects at one-sided level `alpha`, and the index of
/// the component with the smallest p-value. The adjusted p-value lies in
/// `[p_min, m * p_min]`, so the integral is only evaluated when `alpha` falls
/// inside that interval.
pub(crate) fn max_combo_decision(
    table: &RiskTable,
    spec: &ComboSpec,
    mvn: &MvnIntegrator,
    alpha: f64,
) -> Result<(bool, usize)> {
    let weights = spec
        .components
        .iter()
        .map(|&w| table.fh_weights(w))
        .collect();
    let (z, corr) = weighted_parts(table, weights).z_and_corr()?;
    let component_p: Vec<f64> = z.iter().map(|&v| norm_cdf(v)).collect();
    let selected = argmin(&component_p);
    let p_min = component_p[selected];
    let reject = if p_min >= alpha {
        false
    } else if p_min * (z.len() as f64) < alpha {
        true
    } else {
        let z_max = -z[selected];
        mvn.max_exceedance(&corr, z_max)?.value < alpha
    };
    Ok((reject, selected))
}

/// Max test over arbitrary weight vectors on one risk table.
pub(crate) fn max_combo_from_weights(
    table: &RiskTable,
    weights: Vec<Vec<f64>>,
    mvn: &MvnIntegrator,
    two_sided: bool,
) -> Result<ComboResult> {
    let m = weights.len();
    let (z, corr) = weighted_parts(table, weights).z_and_corr()?;
    let z_max = z.iter().map(|v| -v).fold(f64::NEG_INFINITY, f64::max);
    let component_p: Vec<f64> = z.iter().map(|&v| norm_cdf(v)).collect();
    let selected_index = argmin(&component_p);
    let p_adjusted = mvn.max_exceedance(&corr, z_max)?.value;
    let p_two_sided = if two_sided {
        let max_abs = z.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        Some(mvn.max_abs_exceedance(&corr, max_abs)?.value)
    } else {
        None
    };
    Ok(ComboResult {
        label: "MaxCombo".into(),
        component_labels: (0..m).map(|i| format!("component {i}")).collect(),
        component_p,
        component_z: z,
        correlation: corr,
        z_max,
        p_adjusted,
        p_two_sided,
        selected_index,
        selected_weight: None,
        selected_hr: None,
    })
}

pub fn lee_test(dataset: &ValidatedDataset) -> Result<ComboResult> {
    max_combo_test(dataset, &ComboSpec::lee())
}

fn argmin(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold(
            (0, f64::INFINITY),
            |(bi, bv), (i, &v)| {
                if v < bv {
                    (i, v)
                } else {
                    (bi, bv)
                }
            },
        )
        .0
}

/// Pooled Nelson-Aalen cumulative hazard just before each event time.
pub fn nelson_aalen_left(table: &RiskTable) -> Vec<f64> {
    let mut h = 0.0;
    (0..table.len())
        .map(|k| {
            let left = h;
            h += table.d[k] / table.n[k];
            left
        })
        .collect()
}

/// Breslow's acceleration statistic: the log-rank score weighted by the
/// pooled cumulative hazard, i.e. the score for θ in
/// `λ_E(t) / λ_C(t) = exp(β + θ Λ(t))` at β = θ = 0.
pub fn breslow_acceleration_z(dataset: &ValidatedDataset) -> Result<f64> {
    dataset.require_rank_testable()?;
    let table = RiskTable::new(dataset);
    crate::wlr::weighted_z(&table, &nelson_aalen_left(&table))
}

/// Log-rank and Breslow's acceleration statistic combined as a maximum test
/// whose p-value assumes independent components: `1 − (1 − min p)²`.
pub fn breslow_combo_test(dataset: &ValidatedDataset) -> Result<ComboResult> {
    dataset.require_rank_testable()?;
    let table = RiskTable::new(dataset);
    let mut result = breslow_combo_on_table(&table)?;
    if result.selected_index == 0 {
        result.selected_hr = Some(fit_on_table(&table, None));
    }
    Ok(result)
}

pub(crate) fn breslow_combo_on_table(table: &RiskTable) -> Result<ComboResult> {
    let weights = vec![vec![1.0; table.len()], nelson_aalen_left(table)];
    let (z, corr) = weighted_parts(table, weights).z_and_corr()?;
    let component_p: Vec<f64> = z.iter().map(|&v| norm_cdf(v)).collect();
    let z_max = z.iter().map(|v| -v).fold(f64::NEG_INFINITY, f64::max);
    // Sidak rule on the smaller p-value, as if the components were independent
    let sidak = |p: f64| 1.0 - (1.0 - p.clamp(0.0, 1.0)).powi(2);
    let p_adjusted = sidak(component_p.iter().cloned().fold(1.0, f64::min));
    let min_two = z
        .iter()
        .map(|&v| 2.0 * norm_sf(v.abs()))
        .fold(1.0, f64::min);
    let p_two_sided = sidak(min_two);
    let selected_index = argmin(&component_p);
    Ok(ComboResult {
        label: "Combo.Breslow".into(),
        component_labels: vec!["Log-rank".into(), "Breslow acceleration".into()],
        component_z: z,
        component_p,
        correlation: corr,
        z_max,
        p_adjusted,
        p_two_sided: Some(p_two_sided),
        selected_index,
        selected_weight: (selected_index == 0).then_some(FhWeight::LOGRANK),
        selected_hr: None,
    })
}
