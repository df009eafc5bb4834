mod common;

use common::*;
use nph_core::combo::{breslow_combo_test, lee_test, max_combo_test, ComboSpec};
use nph_core::estimation::{cox_fit, schoenfeld_gt_test};
use nph_core::km::{censoring_km, km_estimate};
use nph_core::km_tests::{rmst, rmst_diff_test, wkm_test};
use nph_core::normal::TestResult;
use nph_core::sim::{ScenarioSpec, TrialDesign};
use nph_core::study::{run_study, StudyConfig};
use nph_core::wlr::{weighted_z, wlr_test, FhWeight, RiskTable};
use nph_core::{Arm, SubjectRecord, SurvivalDataset, ValidatedDataset};
use proptest::prelude::*;

fn datasets() -> impl Strategy<Value = ValidatedDataset> {
    let row = (
        any::<bool>(),
        1u32..15,
        0.0f64..1.0,
        prop::bool::weighted(0.7),
    );
    (prop::collection::vec(row, 4..50), any::<bool>())
        .prop_map(|(rows, ties)| {
            let records = rows
                .into_iter()
                .map(|(exp, grid, jitter, event)| {
                    let arm = if exp { Arm::Experimental } else { Arm::Control };
                    let t = if ties {
                        grid as f64
                    } else {
                        grid as f64 + jitter
                    };
                    SubjectRecord::new(arm, t, event)
                })
                .collect();
            SurvivalDataset::new(records).validate().unwrap()
        })
        .prop_filter("needs both arms and an event", |ds| {
            ds.require_rank_testable().is_ok()
        })
}

fn fh_family() -> [FhWeight; 5] {
    [
        fh(0.0, 0.0),
        fh(0.0, 1.0),
        fh(1.0, 0.0),
        fh(1.0, 1.0),
        fh(2.0, 0.5),
    ]
}

fn swapped(ds: &ValidatedDataset) -> ValidatedDataset {
    ds.to_dataset().with_arms_swapped().validate().unwrap()
}

fn assert_mirrored(a: &TestResult, b: &TestResult) {
    assert!((a.z + b.z).abs() < 1e-9, "{} vs {}", a.z, b.z);
    assert!((a.p_one_sided + b.p_one_sided - 1.0).abs() < 1e-9);
    assert!((a.p_two_sided - b.p_two_sided).abs() < 1e-9);
}

fn in_unit(p: f64) -> bool {
    (0.0..=1.0).contains(&p)
}

proptest! {
    #[test]
    fn swapping_arms_negates_single_tests(ds in datasets()) {
        let sw = swapped(&ds);
        for w in fh_family() {
            if let (Ok(a), Ok(b)) = (wlr_test(&ds, w), wlr_test(&sw, w)) {
                assert_mirrored(&a, &b);
            }
        }
        if let (Ok(a), Ok(b)) = (rmst_diff_test(&ds, None), rmst_diff_test(&sw, None)) {
            prop_assert!((a.diff + b.diff).abs() < 1e-9);
            assert_mirrored(&a.test, &b.test);
        }
        if let (Ok(a), Ok(b)) = (wkm_test(&ds), wkm_test(&sw)) {
            assert_mirrored(&a, &b);
        }
        if let (Ok(a), Ok(b)) = (cox_fit(&ds, None), cox_fit(&sw, None)) {
            if a.converged && b.converged {
                prop_assert!((a.log_hr + b.log_hr).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn swapping_arms_negates_combination_components(ds in datasets()) {
        let sw = swapped(&ds);
        if let (Ok(a), Ok(b)) = (breslow_combo_test(&ds), breslow_combo_test(&sw)) {
            for (x, y) in a.component_z.iter().zip(&b.component_z) {
                prop_assert!((x + y).abs() < 1e-9);
            }
            prop_assert!((a.p_two_sided.unwrap() - b.p_two_sided.unwrap()).abs() < 1e-9);
        }
        let spec = ComboSpec::lee();
        if let (Ok(a), Ok(b)) = (max_combo_test(&ds, &spec), max_combo_test(&sw, &spec)) {
            for (x, y) in a.component_z.iter().zip(&b.component_z) {
                prop_assert!((x + y).abs() < 1e-9);
            }
            prop_assert_eq!(&a.correlation, &b.correlation);
        }
    }

    #[test]
    fn fh00_is_the_log_rank(ds in datasets()) {
        if let Ok(r) = wlr_test(&ds, fh(0.0, 0.0)) {
            prop_assert_eq!(r.method_label.as_str(), "Log-rank");
            prop_assert!((r.z - textbook_fh_z(ds.records(), 0.0, 0.0)).abs() < 1e-10);
            prop_assert_eq!(r, wlr_test(&ds, FhWeight::LOGRANK).unwrap());
        }
    }

    #[test]
    fn z_is_invariant_to_weight_scale(ds in datasets(), c in 1e-3f64..1e3) {
        let table = RiskTable::new(&ds);
        for w in fh_family() {
            let weights = table.fh_weights(w);
            let scaled: Vec<f64> = weights.iter().map(|x| c * x).collect();
            if let (Ok(a), Ok(b)) = (weighted_z(&table, &weights), weighted_z(&table, &scaled)) {
                prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
            }
        }
    }

    #[test]
    fn p_values_lie_in_unit_interval(ds in datasets()) {
        for w in fh_family() {
            if let Ok(r) = wlr_test(&ds, w) {
                prop_assert!(in_unit(r.p_one_sided) && in_unit(r.p_two_sided));
            }
        }
        for r in [rmst_diff_test(&ds, None).map(|r| r.test), wkm_test(&ds)].into_iter().flatten() {
            prop_assert!(in_unit(r.p_one_sided) && in_unit(r.p_two_sided));
        }
        if let Ok(r) = breslow_combo_test(&ds) {
            prop_assert!(in_unit(r.p_adjusted) && in_unit(r.p_two_sided.unwrap()));
        }
        if let Ok(g) = schoenfeld_gt_test(&ds) {
            prop_assert!(in_unit(g.gt_p));
        }
    }

    #[test]
    fn km_curves_are_valid(ds in datasets()) {
        for arm in [None, Some(Arm::Control), Some(Arm::Experimental)] {
            let km = km_estimate(&ds, arm).unwrap();
            let mut prev = 1.0;
            for (s, v) in km.survival.iter().zip(&km.greenwood_var) {
                prop_assert!(*s <= prev && *s >= 0.0);
                prop_assert!(*v >= 0.0);
                prev = *s;
            }
            let inverted = ds.to_dataset().with_events_inverted().validate().unwrap();
            match (censoring_km(&ds, arm), km_estimate(&inverted, arm)) {
                (Ok(a), Ok(b)) => {
                    prop_assert_eq!(&a.times, &b.times);
                    prop_assert_eq!(&a.survival, &b.survival);
                }
                (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
            }
        }
    }

    #[test]
    fn rmst_is_monotone_and_additive(ds in datasets(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let km = km_estimate(&ds, None).unwrap();
        let end = km.last_time;
        let (t1, t2) = (end * a.min(b), end * a.max(b));
        let r1 = rmst(&km, t1).unwrap().value;
        let r2 = rmst(&km, t2).unwrap().value;
        prop_assert!(r1 <= r2 + 1e-12);
        prop_assert!(r2 - r1 <= (t2 - t1) + 1e-12);
        // additivity: area on [t1, t2] from the step function directly
        let jumps: Vec<(f64, f64)> = km.times.iter().cloned().zip(km.survival.iter().cloned()).collect();
        let piece = step_area(&jumps, t2) - step_area(&jumps, t1);
        prop_assert!((r1 + piece - r2).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn combination_p_values_respect_bonferroni_bounds(ds in datasets()) {
        // one MVN error budget of slack on either side
        let tol = 5e-4;
        for r in [max_combo_test(&ds, &ComboSpec::max_combo()), lee_test(&ds)].into_iter().flatten() {
            let m = r.component_p.len() as f64;
            let p_min = r.component_p.iter().cloned().fold(1.0, f64::min);
            prop_assert!(in_unit(r.p_adjusted));
            prop_assert!(r.p_adjusted >= p_min - tol, "{} < {}", r.p_adjusted, p_min);
            prop_assert!(r.p_adjusted <= (m * p_min).min(1.0) + tol);
            prop_assert!(in_unit(r.p_two_sided.unwrap()));
        }
    }
}

#[test]
fn study_is_deterministic_across_thread_counts() {
    for scenario in ["null", "crossing2"] {
        let cfg = StudyConfig::new(
            ScenarioSpec::builtin(scenario).unwrap(),
            TrialDesign::new(300, 12.0),
            30,
            2024,
        );
        let serial = run_study(&cfg, 1).unwrap();
        for jobs in [2, 8] {
            assert_eq!(serial, run_study(&cfg, jobs).unwrap());
        }
    }
}

#[test]
fn gt_p_values_are_uniform_under_proportional_hazards() {
    let mut p: Vec<f64> = (0..1000)
        .map(|i| {
            schoenfeld_gt_test(&simulated("ph", 300, 40_000 + i))
                .unwrap()
                .gt_p
        })
        .collect();
    let d = ks_distance(&mut p, |x| x.clamp(0.0, 1.0));
    assert!(d < ks_critical_01(1000), "KS distance {d}");
}

#[test]
fn simulated_trials_respect_the_design() {
    use nph_core::sim::simulate_trial;
    use rand::SeedableRng;
    let design = TrialDesign::new(600, 18.0);
    let scenario = ScenarioSpec::builtin("delayed2").unwrap();
    for seed in 0..20 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let trial = simulate_trial(&scenario, &design, &mut rng);
        assert!(!trial.shortfall);
        assert_eq!(trial.events, design.target_events);
        let records = &trial.dataset.records;
        assert!(records.len() <= design.n_total);
        assert_eq!(
            records.iter().filter(|r| r.event).count(),
            design.target_events
        );
        for r in records {
            assert!(r.time > 0.0 && r.entry >= 0.0 && r.entry <= trial.cut_time);
            assert!(r.entry + r.time <= trial.cut_time + 1e-9);
        }
    }
}
