//! The `analyze` pipeline: every test, effect estimates, piecewise HRs and
//! the PH diagnostic for one dataset.

use nph_core::combo::{breslow_combo_test, lee_test, max_combo_test, ComboResult, ComboSpec};
use nph_core::estimation::{cox_fit, piecewise_cox, schoenfeld_gt_test, CoxFit};
use nph_core::km_tests::{rmst_diff_test, wkm_statistic, wkm_test};
use nph_core::study::Method;
use nph_core::wlr::{wlr_test, FhWeight};
use nph_core::{TestResult, ValidatedDataset};

use crate::report::{
    sig4, AnalysisMetadata, AnalysisReport, GtSummary, MethodRow, PiecewiseRow, VERSION,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Direction {
    /// One-sided p-values test for a benefit of the experimental arm.
    Experimental,
    /// One-sided p-values test for a benefit of the control arm.
    Control,
}

impl Direction {
    fn name(self) -> &'static str {
        match self {
            Direction::Experimental => "experimental",
            Direction::Control => "control",
        }
    }
}

pub struct AnalyzeOptions {
    pub cuts: Vec<f64>,
    pub tau: Option<f64>,
    pub alpha: f64,
    pub direction: Direction,
}

fn hr_ci(fit: &CoxFit) -> Option<(Option<f64>, Option<f64>)> {
    Some((fit.ci_low, fit.ci_high))
}

fn with_hr(row: MethodRow, fit: nph_core::Result<CoxFit>, name: &str) -> MethodRow {
    match fit {
        Ok(f) if f.converged => row.estimate(name, f.hr, hr_ci(&f)),
        Ok(_) => row.note("HR fit did not converge".into()),
        Err(e) => row.note(format!("HR unavailable: {e}")),
    }
}

fn single(name: &str, r: nph_core::Result<TestResult>, alpha: f64) -> Result<MethodRow, MethodRow> {
    r.map(|t| MethodRow::with_p(name, t.p_two_sided, t.p_one_sided, alpha))
        .map_err(|e| MethodRow::failed(name, e.to_string()))
}

fn combo_row(
    name: &str,
    r: nph_core::Result<ComboResult>,
    original: &ValidatedDataset,
    alpha: f64,
) -> MethodRow {
    match r {
        Err(e) => MethodRow::failed(name, e.to_string()),
        Ok(c) => {
            let row =
                MethodRow::with_p(name, c.p_two_sided.unwrap_or(f64::NAN), c.p_adjusted, alpha);
            let selected = c.component_labels[c.selected_index].clone();
            let row = match c.selected_weight {
                Some(w) => with_hr(row, cox_fit(original, Some(w)), "HR"),
                None => row,
            };
            row.note(format!("selected {selected}"))
        }
    }
}

pub fn analyze(
    dataset: &ValidatedDataset,
    dataset_sha256: String,
    opts: &AnalyzeOptions,
) -> AnalysisReport {
    // one-sided p-values come from the oriented data, estimates from the original
    let oriented = match opts.direction {
        Direction::Experimental => dataset.clone(),
        Direction::Control => dataset
            .to_dataset()
            .with_arms_swapped()
            .validate()
            .expect("valid"),
    };
    let alpha = opts.alpha;
    let mut methods = Vec::new();

    for (name, w) in [
        (Method::Logrank, FhWeight::LOGRANK),
        (
            Method::Fh01,
            FhWeight {
                rho: 0.0,
                gamma: 1.0,
            },
        ),
        (
            Method::Fh10,
            FhWeight {
                rho: 1.0,
                gamma: 0.0,
            },
        ),
        (
            Method::Fh11,
            FhWeight {
                rho: 1.0,
                gamma: 1.0,
            },
        ),
    ] {
        let row = match single(name.label(), wlr_test(&oriented, w), alpha) {
            Ok(row) => {
                let weight = (!w.is_logrank()).then_some(w);
                with_hr(row, cox_fit(dataset, weight), "HR")
            }
            Err(row) => row,
        };
        methods.push(row);
    }

    methods.push(combo_row(
        Method::MaxCombo.label(),
        max_combo_test(&oriented, &ComboSpec::max_combo()),
        dataset,
        alpha,
    ));
    methods.push(combo_row(
        Method::Lee.label(),
        lee_test(&oriented),
        dataset,
        alpha,
    ));
    methods.push(combo_row(
        Method::BreslowCombo.label(),
        breslow_combo_test(&oriented),
        dataset,
        alpha,
    ));

    let rmst_row = match (
        rmst_diff_test(&oriented, opts.tau),
        rmst_diff_test(dataset, opts.tau),
    ) {
        (Ok(t), Ok(est)) => MethodRow::with_p(
            Method::Rmst.label(),
            t.test.p_two_sided,
            t.test.p_one_sided,
            alpha,
        )
        .estimate(
            "RMST difference (E - C)",
            est.diff,
            Some((Some(est.ci_low), Some(est.ci_high))),
        )
        .note(format!("tau = {}", sig4(est.tau))),
        (Err(e), _) | (_, Err(e)) => MethodRow::failed(Method::Rmst.label(), e.to_string()),
    };
    methods.push(rmst_row);

    let wkm_row = match single(Method::Wkm.label(), wkm_test(&oriented), alpha) {
        Ok(row) => match wkm_statistic(dataset) {
            Ok(w) => row.estimate("weighted KM difference", w.statistic, None),
            Err(_) => row,
        },
        Err(row) => row,
    };
    methods.push(wkm_row);

    let piecewise = match piecewise_cox(dataset, &opts.cuts) {
        Ok(fit) => fit
            .intervals
            .iter()
            .map(|iv| {
                let f = iv.fit.as_ref().filter(|f| f.converged);
                PiecewiseRow {
                    start: iv.start,
                    end: iv.end.is_finite().then_some(iv.end),
                    hr: f.map(|f| sig4(f.hr)),
                    ci_low: f.and_then(|f| f.ci_low).map(sig4),
                    ci_high: f.and_then(|f| f.ci_high).map(sig4),
                    events_control: iv.events_control,
                    events_experimental: iv.events_experimental,
                }
            })
            .collect(),
        Err(_) => Vec::new(),
    };

    let schoenfeld = match schoenfeld_gt_test(dataset) {
        Ok(g) => GtSummary {
            statistic: g.gt_statistic.is_finite().then(|| sig4(g.gt_statistic)),
            p_value: g.gt_p.is_finite().then(|| sig4(g.gt_p)),
            events: g.event_times.len(),
            note: None,
        },
        Err(e) => GtSummary {
            statistic: None,
            p_value: None,
            events: dataset.n_events(),
            note: Some(format!("failed: {e}")),
        },
    };

    AnalysisReport {
        methods,
        piecewise,
        schoenfeld,
        metadata: AnalysisMetadata {
            dataset_sha256,
            subjects: dataset.len(),
            events: dataset.n_events(),
            alpha_one_sided: alpha,
            direction: opts.direction.name().to_string(),
            cuts: opts.cuts.clone(),
            tau: opts.tau,
            version: VERSION.to_string(),
        },
    }
}
