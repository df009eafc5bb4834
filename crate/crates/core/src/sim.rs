//! Trial simulation: piecewise-exponential survival, ramped enrollment,
//! exponential dropout and an event-count-triggered data cut.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::data::{Arm, SubjectRecord, SurvivalDataset};
use crate::error::{NphError, Result};

/// Piecewise-constant hazard. `rates[j]` applies on `[cut_points[j-1], cut_points[j])`,
/// with 0 as the first start and the last rate continuing forever.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawHazard")]
pub struct PiecewiseHazard {
    cut_points: Vec<f64>,
    rates: Vec<f64>,
}

#[derive(Deserialize)]
struct RawHazard {
    #[serde(default)]
    cut_points: Vec<f64>,
    rates: Vec<f64>,
}

impl TryFrom<RawHazard> for PiecewiseHazard {
    type Error = NphError;

    fn try_from(raw: RawHazard) -> Result<Self> {
        PiecewiseHazard::new(raw.cut_points, raw.rates)
    }
}

impl PiecewiseHazard {
    pub fn new(cut_points: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        if rates.len() != cut_points.len() + 1 {
            return Err(NphError::InvalidHazard(format!(
                "{} cut points need {} rates, got {}",
                cut_points.len(),
                cut_points.len() + 1,
                rates.len()
            )));
        }
        if rates.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(NphError::InvalidHazard("rates must be positive".into()));
        }
        let mut prev = 0.0;
        for &c in &cut_points {
            if !(c.is_finite() && c > prev) {
                return Err(NphError::InvalidHazard(
                    "cut points must be positive and strictly ascending".into(),
                ));
            }
            prev = c;
        }
        Ok(Self { cut_points, rates })
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        Self::new(Vec::new(), vec![rate])
    }

    pub fn cut_points(&self) -> &[f64] {
        &self.cut_points
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn hazard_at(&self, t: f64) -> f64 {
        self.rates[self.cut_points.partition_point(|&c| c <= t)]
    }

    pub fn cumulative_hazard(&self, t: f64) -> f64 {
        let mut h = 0.0;
        let mut start = 0.0;
        for (j, &rate) in self.rates.iter().enumerate() {
            let end = self.cut_points.get(j).copied().unwrap_or(f64::INFINITY);
            if t <= end {
                return h + rate * (t - start);
            }
            h += rate * (end - start);
            start = end;
        }
        h
    }

    pub fn survival(&self, t: f64) -> f64 {
        (-self.cumulative_hazard(t)).exp()
    }
}

/// Inverse-CDF draw: the time at which the cumulative hazard reaches `−ln u`.
pub fn sample_piecewise_exp(hazard: &PiecewiseHazard, u: f64) -> f64 {
    let mut remaining = -u.ln();
    let mut start = 0.0;
    for (j, &rate) in hazard.rates.iter().enumerate() {
        let end = hazard.cut_points.get(j).copied().unwrap_or(f64::INFINITY);
        let segment = rate * (end - start);
        if remaining <= segment {
            return start + remaining / rate;
        }
        remaining -= segment;
        start = end;
    }
    unreachable!("last segment is unbounded")
}

/// Two arms on a shared cut-point grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub control: PiecewiseHazard,
    pub experimental: PiecewiseHazard,
}

impl ScenarioSpec {
    pub fn new(
        name: impl Into<String>,
        control: PiecewiseHazard,
        experimental: PiecewiseHazard,
    ) -> Result<Self> {
        if control.cut_points != experimental.cut_points {
            return Err(NphError::InvalidHazard(
                "both arms must share the same cut points".into(),
            ));
        }
        Ok(Self {
            name: name.into(),
            control,
            experimental,
        })
    }

    pub const BUILTIN_NAMES: [&'static str; 9] = [
        "delayed1",
        "delayed2",
        "diminishing",
        "crossing1",
        "crossing2",
        "ph",
        "null",
        "delayconv1",
        "delayconv2",
    ];

    /// The nine piecewise-exponential benchmark scenarios (rates per month).
    pub fn builtin(name: &str) -> Option<Self> {
        let (cuts, control, experimental): (&[f64], &[f64], &[f64]) = match name {
            "delayed1" => (&[3.0], &[0.104, 0.161], &[0.103, 0.077]),
            "delayed2" => (&[3.0], &[0.226, 0.222], &[0.210, 0.079]),
            "diminishing" => (&[6.0], &[0.134, 0.140], &[0.098, 0.137]),
            "crossing1" => (&[6.0], &[0.061, 0.090], &[0.068, 0.048]),
            "crossing2" => (&[6.0], &[0.108, 0.334], &[0.123, 0.120]),
            "ph" => (&[3.0], &[0.104, 0.161], &[0.071, 0.110]),
            "null" => (&[3.0], &[0.104, 0.161], &[0.104, 0.161]),
            // periods of 2 and 7 months, so the second change point is at 9
            "delayconv1" => (&[2.0, 9.0], &[0.104, 0.161, 0.140], &[0.103, 0.077, 0.168]),
            "delayconv2" => (&[2.0, 9.0], &[0.104, 0.161, 0.161], &[0.103, 0.077, 0.137]),
            _ => return None,
        };
        let hazard = |rates: &[f64]| PiecewiseHazard {
            cut_points: cuts.to_vec(),
            rates: rates.to_vec(),
        };
        Some(Self {
            name: name.to_string(),
            control: hazard(control),
            experimental: hazard(experimental),
        })
    }

    /// Per-interval hazard ratios λ_E / λ_C.
    pub fn hazard_ratios(&self) -> Vec<f64> {
        self.experimental
            .rates
            .iter()
            .zip(&self.control.rates)
            .map(|(e, c)| e / c)
            .collect()
    }

    pub fn hazard(&self, arm: Arm) -> &PiecewiseHazard {
        match arm {
            Arm::Control => &self.control,
            Arm::Experimental => &self.experimental,
        }
    }
}

/// Accrual intensity during the ramp-up period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum RampShape {
    /// Intensity rises linearly from 0 to the full rate.
    #[default]
    Linear,
    /// Intensity is a constant fraction of the full rate.
    Step { fraction: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialDesign {
    pub n_total: usize,
    pub enrollment_months: f64,
    pub ramp_months: f64,
    pub ramp: RampShape,
    pub dropout_rate: f64,
    pub target_events: usize,
}

impl Default for TrialDesign {
    fn default() -> Self {
        Self {
            n_total: 600,
            enrollment_months: 18.0,
            ramp_months: 6.0,
            ramp: RampShape::Linear,
            dropout_rate: 0.014,
            target_events: 210,
        }
    }
}

impl TrialDesign {
    pub fn new(n_total: usize, enrollment_months: f64) -> Self {
        Self {
            n_total,
            enrollment_months,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_total == 0 || self.n_total % 2 != 0 {
            return Err(NphError::InvalidDesign(
                "n_total must be a positive even number".into(),
            ));
        }
        if self.target_events == 0 || self.target_events > self.n_total {
            return Err(NphError::InvalidDesign(
                "target_events must be in 1..=n_total".into(),
            ));
        }
        if !(self.ramp_months >= 0.0 && self.enrollment_months > self.ramp_months) {
            return Err(NphError::InvalidDesign(
                "enrollment_months must exceed ramp_months".into(),
            ));
        }
        if !(self.dropout_rate >= 0.0 && self.dropout_rate.is_finite()) {
            return Err(NphError::InvalidDesign(
                "dropout_rate must be non-negative".into(),
            ));
        }
        if let RampShape::Step { fraction } = self.ramp {
            if !(fraction > 0.0 && fraction.is_finite()) {
                return Err(NphError::InvalidDesign(
                    "step ramp fraction must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Inverse CDF of the accrual distribution on `[0, enrollment_months]`.
pub fn sample_entry(design: &TrialDesign, u: f64) -> f64 {
    let ramp = design.ramp_months;
    let flat = design.enrollment_months - ramp;
    match design.ramp {
        RampShape::Linear => {
            let ramp_mass = ramp / 2.0;
            let mass = u * (ramp_mass + flat);
            if mass <= ramp_mass {
                (2.0 * ramp * mass).sqrt()
            } else {
                ramp + (mass - ramp_mass)
            }
        }
        RampShape::Step { fraction } => {
            let ramp_mass = fraction * ramp;
            let mass = u * (ramp_mass + flat);
            if mass <= ramp_mass {
                mass / fraction
            } else {
                ramp + (mass - ramp_mass)
            }
        }
    }
}

/// Uniform draw on the open interval (0, 1).
pub fn open_unit<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedTrial {
    pub dataset: SurvivalDataset,
    /// Calendar time of the data cut; infinite when the target was never reached.
    pub cut_time: f64,
    pub events: usize,
    pub shortfall: bool,
}

pub fn simulate_trial<R: RngCore + ?Sized>(
    scenario: &ScenarioSpec,
    design: &TrialDesign,
    rng: &mut R,
) -> SimulatedTrial {
    struct Draw {
        arm: Arm,
        entry: f64,
        survival: f64,
        dropout: f64,
    }
    let per_arm = design.n_total / 2;
    let mut draws = Vec::with_capacity(design.n_total);
    for arm in [Arm::Control, Arm::Experimental] {
        let hazard = scenario.hazard(arm);
        for _ in 0..per_arm {
            let entry = sample_entry(design, open_unit(rng));
            let survival = sample_piecewise_exp(hazard, open_unit(rng));
            let u = open_unit(rng);
            let dropout = if design.dropout_rate > 0.0 {
                -u.ln() / design.dropout_rate
            } else {
                f64::INFINITY
            };
            draws.push(Draw {
                arm,
                entry,
                survival,
                dropout,
            });
        }
    }

    let mut event_calendar: Vec<f64> = draws
        .iter()
        .filter(|d| d.survival <= d.dropout)
        .map(|d| d.entry + d.survival)
        .collect();
    let (cut_time, shortfall) = if event_calendar.len() >= design.target_events {
        let k = design.target_events - 1;
        let (_, kth, _) = event_calendar.select_nth_unstable_by(k, f64::total_cmp);
        (*kth, false)
    } else {
        (f64::INFINITY, true)
    };

    let mut events = 0;
    let records = draws
        .iter()
        .filter(|d| d.entry <= cut_time)
        .map(|d| {
            let time = d.survival.min(d.dropout).min(cut_time - d.entry);
            let event = d.survival <= d.dropout && d.entry + d.survival <= cut_time;
            events += usize::from(event);
            SubjectRecord {
                arm: d.arm,
                time,
                event,
                entry: d.entry,
            }
        })
        .collect();
    SimulatedTrial {
        dataset: SurvivalDataset::new(records),
        cut_time,
        events,
        shortfall,
    }
}
