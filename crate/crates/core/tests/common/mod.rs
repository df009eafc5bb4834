//! Independent reference computations shared by the integration tests.

#![allow(dead_code)]

use nph_core::combo::ComboSpec;
use nph_core::sim::{simulate_trial, ScenarioSpec, TrialDesign};
use nph_core::wlr::{weighted_z, FhWeight, RiskTable};
use nph_core::{Arm, SubjectRecord, SurvivalDataset, ValidatedDataset};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Control events at 1, 2, 3 and experimental events at 4, 5, 6.
pub fn hand_dataset() -> ValidatedDataset {
    let mut rows = Vec::new();
    for t in [1.0, 2.0, 3.0] {
        rows.push(SubjectRecord::new(Arm::Control, t, true));
    }
    for t in [4.0, 5.0, 6.0] {
        rows.push(SubjectRecord::new(Arm::Experimental, t, true));
    }
    SurvivalDataset::new(rows).validate().unwrap()
}

/// One simulated trial, reproducible from `(scenario, n, seed)`.
pub fn simulated(scenario: &str, n: usize, seed: u64) -> ValidatedDataset {
    simulated_with(scenario, TrialDesign::new(n, 18.0), seed)
}

pub fn simulated_with(scenario: &str, design: TrialDesign, seed: u64) -> ValidatedDataset {
    let spec = ScenarioSpec::builtin(scenario).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_trial(&spec, &design, &mut rng)
        .dataset
        .validate()
        .unwrap()
}

/// Five fixed datasets spanning weak to strong effects.
pub fn canned_datasets() -> Vec<ValidatedDataset> {
    vec![
        simulated("null", 300, 101),
        simulated("delayed1", 300, 102),
        simulated("crossing1", 300, 103),
        simulated("diminishing", 600, 104),
        simulated("delayconv1", 300, 105),
    ]
}

/// Weighted log-rank Z computed the long way: for each distinct event time,
/// scan every subject to get risk-set counts; weights from a separately
/// computed pooled Kaplan-Meier left limit.
pub fn textbook_fh_z(records: &[SubjectRecord], rho: f64, gamma: f64) -> f64 {
    let mut times: Vec<f64> = records.iter().filter(|r| r.event).map(|r| r.time).collect();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times.dedup();
    let mut s_left = 1.0;
    let (mut num, mut var) = (0.0, 0.0);
    for &t in &times {
        let at_risk = records.iter().filter(|r| r.time >= t);
        let n = at_risk.clone().count() as f64;
        let n_e = at_risk
            .clone()
            .filter(|r| r.arm == Arm::Experimental)
            .count() as f64;
        let dead = records.iter().filter(|r| r.event && r.time == t);
        let d = dead.clone().count() as f64;
        let d_e = dead.filter(|r| r.arm == Arm::Experimental).count() as f64;
        let pow = |x: f64, e: f64| if e == 0.0 { 1.0 } else { x.powf(e) };
        let w = pow(s_left, rho) * pow(1.0 - s_left, gamma);
        num += w * (d_e - d * n_e / n);
        if n > 1.0 {
            var += w * w * d * (n_e / n) * (1.0 - n_e / n) * (n - d) / (n - 1.0);
        }
        s_left *= 1.0 - d / n;
    }
    num / var.sqrt()
}

/// Area under a right-continuous step function with the given jump times
/// and post-jump values, starting from 1 at time 0, up to `tau`.
pub fn step_area(jumps: &[(f64, f64)], tau: f64) -> f64 {
    let mut area = 0.0;
    let (mut t_prev, mut s_prev) = (0.0, 1.0);
    for &(t, s) in jumps {
        if t >= tau {
            break;
        }
        area += s_prev * (t - t_prev);
        t_prev = t;
        s_prev = s;
    }
    area + s_prev * (tau - t_prev)
}

fn cholesky(c: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = c.len();
    let mut l = vec![vec![0.0; m]; m];
    for j in 0..m {
        let d = c[j][j] - (0..j).map(|k| l[j][k] * l[j][k]).sum::<f64>();
        l[j][j] = d.max(0.0).sqrt();
        for i in (j + 1)..m {
            let v = c[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            l[i][j] = if l[j][j] > 0.0 { v / l[j][j] } else { 0.0 };
        }
    }
    l
}

/// Plain Monte-Carlo estimate of P(max_i X_i > threshold), X ~ N(0, corr).
pub fn mc_max_exceedance(corr: &[Vec<f64>], threshold: f64, draws: usize, seed: u64) -> f64 {
    let l = cholesky(corr);
    let m = corr.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut e = vec![0.0; m];
    let mut hits = 0usize;
    for _ in 0..draws {
        for v in e.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let exceeds = (0..m).any(|i| (0..=i).map(|k| l[i][k] * e[k]).sum::<f64>() > threshold);
        hits += exceeds as usize;
    }
    hits as f64 / draws as f64
}

/// Empirical correlation of the component Z's over random relabelings of
/// the arms.
pub fn permutation_correlation(
    dataset: &ValidatedDataset,
    spec: &ComboSpec,
    reps: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let m = spec.components().len();
    let mut records = dataset.records().to_vec();
    let mut arms: Vec<Arm> = records.iter().map(|r| r.arm).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = vec![0.0; m];
    let mut cross = vec![vec![0.0; m]; m];
    for _ in 0..reps {
        arms.shuffle(&mut rng);
        for (r, a) in records.iter_mut().zip(&arms) {
            r.arm = *a;
        }
        let ds = ValidatedDataset::new(records.clone()).unwrap();
        let table = RiskTable::new(&ds);
        let z: Vec<f64> = spec
            .components()
            .iter()
            .map(|&w| weighted_z(&table, &table.fh_weights(w)).unwrap())
            .collect();
        for i in 0..m {
            sum[i] += z[i];
            for j in 0..m {
                cross[i][j] += z[i] * z[j];
            }
        }
    }
    let n = reps as f64;
    let cov = |i: usize, j: usize| cross[i][j] / n - sum[i] * sum[j] / (n * n);
    (0..m)
        .map(|i| {
            (0..m)
                .map(|j| cov(i, j) / (cov(i, i) * cov(j, j)).sqrt())
                .collect()
        })
        .collect()
}

/// Random small dataset with heavy ties, both arms present and at least one
/// event; used by the seeded property sweeps.
pub fn random_dataset(rng: &mut impl Rng) -> ValidatedDataset {
    loop {
        let n = rng.random_range(4..60);
        let tie_grid = rng.random_bool(0.5);
        let rows: Vec<SubjectRecord> = (0..n)
            .map(|_| {
                let arm = if rng.random_bool(0.5) {
                    Arm::Experimental
                } else {
                    Arm::Control
                };
                let time = if tie_grid {
                    rng.random_range(1..12) as f64
                } else {
                    rng.random_range(0.01..20.0)
                };
                SubjectRecord::new(arm, time, rng.random_bool(0.7))
            })
            .collect();
        let ds = SurvivalDataset::new(rows).validate().unwrap();
        if ds.require_rank_testable().is_ok() && ds.n_arm(Arm::Control) > 1 {
            return ds;
        }
    }
}

/// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
pub fn ks_distance(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value at level 0.01.
pub fn ks_critical_01(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}

pub fn fh(rho: f64, gamma: f64) -> FhWeight {
    FhWeight::new(rho, gamma).unwrap()
}
