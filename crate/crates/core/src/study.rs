//! Replication studies: simulate many trials, apply each test, aggregate
//! rejection rates and geometric-mean hazard ratios.
//!
//! Replicate `i` draws from ChaCha stream `i` under the study seed, and
//! results are reduced in replicate order, so output does not depend on the
//! number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combo::{breslow_combo_on_table, max_combo_decision, ComboSpec};
use crate::data::ValidatedDataset;
use crate::error::{NphError, Result};
use crate::estimation::fit_on_table;
use crate::km_tests::{rmst_diff_test, wkm_test};
use crate::mvn::MvnIntegrator;
use crate::normal::norm_cdf;
use crate::sim::{simulate_trial, ScenarioSpec, TrialDesign};
use crate::wlr::{weighted_z, FhWeight, RiskTable};

/// The nine benchmark tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Logrank,
    Fh01,
    Fh10,
    Fh11,
    Rmst,
    Wkm,
    BreslowCombo,
    MaxCombo,
    Lee,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::Logrank,
        Method::Fh01,
        Method::Fh10,
        Method::Fh11,
        Method::Rmst,
        Method::Wkm,
        Method::BreslowCombo,
        Method::MaxCombo,
        Method::Lee,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::Logrank => "Log.Rank",
            Method::Fh01 => "FH(0,1)",
            Method::Fh10 => "FH(1,0)",
            Method::Fh11 => "FH(1,1)",
            Method::Rmst => "RMST",
            Method::Wkm => "WKM",
            Method::BreslowCombo => "Combo.Breslow",
            Method::MaxCombo => "MaxCombo",
            Method::Lee => "Lee's",
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            Method::Logrank => "logrank",
            Method::Fh01 => "fh01",
            Method::Fh10 => "fh10",
            Method::Fh11 => "fh11",
            Method::Rmst => "rmst",
            Method::Wkm => "wkm",
            Method::BreslowCombo => "breslow_combo",
            Method::MaxCombo => "max_combo",
            Method::Lee => "lee",
        }
    }

    pub fn fh_weight(self) -> Option<FhWeight> {
        let w = |rho, gamma| Some(FhWeight { rho, gamma });
        match self {
            Method::Logrank => w(0.0, 0.0),
            Method::Fh01 => w(0.0, 1.0),
            Method::Fh10 => w(1.0, 0.0),
            Method::Fh11 => w(1.0, 1.0),
            _ => None,
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.id() == s)
            .ok_or_else(|| format!("unknown method {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub scenario: ScenarioSpec,
    pub design: TrialDesign,
    pub replicates: usize,
    pub alpha_one_sided: f64,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub max_combo: ComboSpec,
}

impl StudyConfig {
    pub fn new(scenario: ScenarioSpec, design: TrialDesign, replicates: usize, seed: u64) -> Self {
        Self {
            scenario,
            design,
            replicates,
            alpha_one_sided: 0.025,
            seed,
            methods: Method::ALL.to_vec(),
            max_combo: ComboSpec::max_combo(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.design.validate()?;
        if self.replicates == 0 {
            return Err(NphError::InvalidDesign(
                "replicates must be positive".into(),
            ));
        }
        if !(self.alpha_one_sided > 0.0 && self.alpha_one_sided < 0.5) {
            return Err(NphError::InvalidDesign(
                "alpha_one_sided must lie in (0, 0.5)".into(),
            ));
        }
        Ok(())
    }
}

/// Per-replicate results: rejection at the study level per configured method
/// (`None` when the method failed on that dataset) and the two HR estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateOutcome {
    pub rejected: Vec<Option<bool>>,
    pub cox_log_hr: Option<f64>,
    pub max_combo_log_hr: Option<f64>,
    pub events: usize,
    pub enrolled: usize,
    pub cut_time: f64,
    pub shortfall: bool,
}

/// Applies the requested methods to one dataset and returns the one-sided
/// rejection decisions at `alpha` with the Cox and MaxCombo-selected log HRs.
pub fn analyze_replicate(
    dataset: &ValidatedDataset,
    methods: &[Method],
    max_combo: &ComboSpec,
    alpha: f64,
    mvn: &MvnIntegrator,
) -> (Vec<Option<bool>>, Option<f64>, Option<f64>) {
    if dataset.require_rank_testable().is_err() {
        return (vec![None; methods.len()], None, None);
    }
    let table = RiskTable::new(dataset);
    let mut max_combo_log_hr = None;
    let rejected = methods
        .iter()
        .map(|&m| {
            let below = |p: f64| p < alpha;
            let r = match m {
                Method::Logrank | Method::Fh01 | Method::Fh10 | Method::Fh11 => {
                    let weights = table.fh_weights(m.fh_weight().expect("FH method"));
                    weighted_z(&table, &weights).map(|z| below(norm_cdf(z)))
                }
                Method::Rmst => rmst_diff_test(dataset, None).map(|r| below(r.test.p_one_sided)),
                Method::Wkm => wkm_test(dataset).map(|r| below(r.p_one_sided)),
                Method::BreslowCombo => breslow_combo_on_table(&table).map(|r| below(r.p_adjusted)),
                Method::MaxCombo => {
                    max_combo_decision(&table, max_combo, mvn, alpha).map(|(reject, k)| {
                        let fit = fit_on_table(&table, Some(max_combo.components()[k]));
                        max_combo_log_hr = fit.converged.then_some(fit.log_hr);
                        reject
                    })
                }
                Method::Lee => {
                    max_combo_decision(&table, &ComboSpec::lee(), mvn, alpha).map(|(r, _)| r)
                }
            };
            r.ok()
        })
        .collect();
    let cox = fit_on_table(&table, None);
    let cox_log_hr = cox.converged.then_some(cox.log_hr);
    (rejected, cox_log_hr, max_combo_log_hr)
}

pub fn run_replicate(config: &StudyConfig, index: u64, mvn: &MvnIntegrator) -> ReplicateOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index);
    let trial = simulate_trial(&config.scenario, &config.design, &mut rng);
    let enrolled = trial.dataset.records.len();
    let (rejected, cox_log_hr, max_combo_log_hr) = match trial.dataset.validate() {
        Ok(ds) => analyze_replicate(
            &ds,
            &config.methods,
            &config.max_combo,
            config.alpha_one_sided,
            mvn,
        ),
        Err(_) => (vec![None; config.methods.len()], None, None),
    };
    ReplicateOutcome {
        rejected,
        cox_log_hr,
        max_combo_log_hr,
        events: trial.events,
        enrolled,
        cut_time: trial.cut_time,
        shortfall: trial.shortfall,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub label: String,
    pub rejections: usize,
    pub evaluated: usize,
    pub failures: usize,
    pub rate_percent: f64,
    pub mc_se_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HrSummary {
    pub estimator: String,
    pub geometric_mean: f64,
    pub used: usize,
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub config: StudyConfig,
    pub methods: Vec<MethodSummary>,
    pub hazard_ratios: Vec<HrSummary>,
    pub mean_event_patient_ratio: f64,
    pub mean_cut_time: f64,
    pub shortfalls: usize,
}

impl StudySummary {
    pub fn method(&self, method: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }

    pub fn rate(&self, method: Method) -> f64 {
        self.method(method).map_or(f64::NAN, |m| m.rate_percent)
    }

    pub fn hazard_ratio(&self, estimator: &str) -> Option<&HrSummary> {
        self.hazard_ratios.iter().find(|h| h.estimator == estimator)
    }
}

pub fn summarize(config: &StudyConfig, outcomes: &[ReplicateOutcome]) -> StudySummary {
    let methods = config
        .methods
        .iter()
        .enumerate()
        .map(|(i, &method)| {
            let mut rejections = 0;
            let mut failures = 0;
            for o in outcomes {
                match o.rejected[i] {
                    Some(true) => rejections += 1,
                    Some(false) => {}
                    None => failures += 1,
                }
            }
            let evaluated = outcomes.len() - failures;
            let rate = if evaluated > 0 {
                rejections as f64 / evaluated as f64
            } else {
                f64::NAN
            };
            MethodSummary {
                method,
                label: method.label().to_string(),
                rejections,
                evaluated,
                failures,
                rate_percent: 100.0 * rate,
                mc_se_percent: 100.0 * (rate * (1.0 - rate) / evaluated.max(1) as f64).sqrt(),
            }
        })
        .collect();

    let geometric = |name: &str, pick: &dyn Fn(&ReplicateOutcome) -> Option<f64>| {
        let logs: Vec<f64> = outcomes.iter().filter_map(pick).collect();
        HrSummary {
            estimator: name.to_string(),
            geometric_mean: (logs.iter().sum::<f64>() / logs.len() as f64).exp(),
            used: logs.len(),
            excluded: outcomes.len() - logs.len(),
        }
    };
    let mut hazard_ratios = vec![geometric("Cox", &|o| o.cox_log_hr)];
    if config.methods.contains(&Method::MaxCombo) {
        hazard_ratios.push(geometric("MaxCombo", &|o| o.max_combo_log_hr));
    }

    let n = outcomes.len() as f64;
    let reached: Vec<f64> = outcomes
        .iter()
        .filter(|o| !o.shortfall)
        .map(|o| o.cut_time)
        .collect();
    StudySummary {
        config: config.clone(),
        methods,
        hazard_ratios,
        mean_event_patient_ratio: outcomes
            .iter()
            .map(|o| o.events as f64 / config.design.n_total as f64)
            .sum::<f64>()
            / n,
        mean_cut_time: reached.iter().sum::<f64>() / reached.len().max(1) as f64,
        shortfalls: outcomes.len() - reached.len(),
    }
}

/// Runs `config.replicates` trials on `parallelism` worker threads.
pub fn run_study(config: &StudyConfig, parallelism: usize) -> Result<StudySummary> {
    config.validate()?;
    let mvn = MvnIntegrator::default();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| NphError::InvalidDesign(format!("thread pool: {e}")))?;
    let outcomes: Vec<ReplicateOutcome> = pool.install(|| {
        (0..config.replicates as u64)
            .into_par_iter()
            .map(|i| run_replicate(config, i, &mvn))
            .collect()
    });
    Ok(summarize(config, &outcomes))
}
