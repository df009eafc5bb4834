mod common;

use approx::assert_abs_diff_eq;
use common::*;
use nph_core::combo::{max_combo_test, wlr_correlation, ComboSpec};
use nph_core::km::km_estimate;
use nph_core::km_tests::rmst;
use nph_core::sim::{sample_piecewise_exp, PiecewiseHazard, TrialDesign};
use nph_core::wlr::{wlr_components, wlr_test, FhWeight};
use nph_core::{Arm, SubjectRecord, SurvivalDataset};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn hand_dataset_log_rank() {
    let ds = hand_dataset();
    let c = wlr_components(&ds, FhWeight::LOGRANK).unwrap();
    assert_abs_diff_eq!(c.score(), -1.85, epsilon = 1e-10);
    assert_abs_diff_eq!(c.variance(), 0.6775, epsilon = 1e-10);
    let z = wlr_test(&ds, FhWeight::LOGRANK).unwrap().z;
    assert_abs_diff_eq!(z, -1.85 / 0.6775f64.sqrt(), epsilon = 1e-10);
    assert_abs_diff_eq!(z, -2.2476, epsilon = 1e-4);
    assert_abs_diff_eq!(z, textbook_fh_z(ds.records(), 0.0, 0.0), epsilon = 1e-10);
}

#[test]
fn fh_family_matches_textbook_computation() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut datasets = canned_datasets();
    datasets.extend((0..40).map(|_| random_dataset(&mut rng)));
    for ds in &datasets {
        for (rho, gamma) in [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0), (0.5, 2.0)] {
            let Ok(r) = wlr_test(ds, fh(rho, gamma)) else {
                continue;
            };
            let oracle = textbook_fh_z(ds.records(), rho, gamma);
            assert_abs_diff_eq!(r.z, oracle, epsilon = 1e-10);
        }
    }
}

#[test]
fn rmst_is_exact_step_area() {
    let rows = vec![
        SubjectRecord::new(Arm::Control, 1.0, true),
        SubjectRecord::new(Arm::Control, 2.0, false),
        SubjectRecord::new(Arm::Control, 2.5, true),
        SubjectRecord::new(Arm::Control, 4.0, true),
        SubjectRecord::new(Arm::Control, 6.0, false),
        SubjectRecord::new(Arm::Control, 7.0, true),
    ];
    let ds = SurvivalDataset::new(rows).validate().unwrap();
    let km = km_estimate(&ds, None).unwrap();
    // S: 5/6 at 1, then 5/6 * 3/4 = 5/8 at 2.5, 5/8 * 2/3 = 5/12 at 4, 0 at 7
    let jumps = [
        (1.0, 5.0 / 6.0),
        (2.5, 5.0 / 8.0),
        (4.0, 5.0 / 12.0),
        (7.0, 0.0),
    ];
    for tau in [0.5, 1.0, 2.2, 2.5, 3.9, 5.0, 6.5, 7.0] {
        let value = rmst(&km, tau).unwrap().value;
        assert_abs_diff_eq!(value, step_area(&jumps, tau), epsilon = 1e-12);
    }
    let by_hand = 1.0 + 1.5 * 5.0 / 6.0 + 1.5 * 5.0 / 8.0 + 1.0 * 5.0 / 12.0;
    assert_abs_diff_eq!(rmst(&km, 5.0).unwrap().value, by_hand, epsilon = 1e-12);
}

#[test]
fn max_combo_matches_monte_carlo_oracle() {
    let spec = ComboSpec::max_combo();
    for (k, ds) in canned_datasets().iter().enumerate() {
        let r = max_combo_test(ds, &spec).unwrap();
        // 10^7 draws keep the oracle's own standard error near 1.4e-4
        let oracle = mc_max_exceedance(&r.correlation, r.z_max, 10_000_000, 900 + k as u64);
        assert!(
            (r.p_adjusted - oracle).abs() <= 1e-3,
            "dataset {k}: lattice {} vs Monte Carlo {oracle}",
            r.p_adjusted
        );
    }
}

#[test]
fn correlation_matches_permutation_oracle() {
    let design = TrialDesign {
        target_events: 200,
        ..TrialDesign::new(300, 18.0)
    };
    let ds = simulated_with("null", design, 77);
    assert_eq!(ds.n_events(), 200);
    let spec = ComboSpec::max_combo();
    let plug_in = wlr_correlation(&ds, &spec).unwrap();
    let oracle = permutation_correlation(&ds, &spec, 50_000, 78);
    for i in 0..4 {
        for j in 0..4 {
            assert!(
                (plug_in[i][j] - oracle[i][j]).abs() <= 0.02,
                "({i},{j}): {} vs {}",
                plug_in[i][j],
                oracle[i][j]
            );
        }
    }
}

#[test]
fn exponential_draws_pass_ks() {
    let h = PiecewiseHazard::exponential(0.3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut draws: Vec<f64> = (0..5000)
        .map(|_| sample_piecewise_exp(&h, nph_core::sim::open_unit(&mut rng)))
        .collect();
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    // SE of the mean is (1/0.3)/sqrt(5000) ~ 0.047
    assert!((mean - 1.0 / 0.3).abs() < 0.2, "mean {mean}");
    let n = draws.len();
    let d = ks_distance(&mut draws, |t| 1.0 - (-0.3 * t).exp());
    assert!(d < ks_critical_01(n), "KS distance {d}");
}

#[test]
fn piecewise_draws_follow_their_survival_function() {
    let h = PiecewiseHazard::new(vec![3.0, 7.0], vec![0.1, 0.4, 0.05]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut draws: Vec<f64> = (0..5000)
        .map(|_| sample_piecewise_exp(&h, nph_core::sim::open_unit(&mut rng)))
        .collect();
    let n = draws.len();
    let d = ks_distance(&mut draws, |t| 1.0 - h.survival(t));
    assert!(d < ks_critical_01(n), "KS distance {d}");
}
