//! Output records. Values are rounded when a report is built, so the JSON
//! file and the CSV file carry the same numbers and JSON parses back to an
//! identical structure.

use std::io::Write;

use anyhow::Result;
use nph_core::study::{Method, StudySummary};
use serde::{Deserialize, Serialize};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Rounds to four significant digits.
pub fn sig4(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let scale = 10f64.powi(3 - x.abs().log10().floor() as i32);
    (x * scale).round() / scale
}

/// Rounds to three decimals.
pub fn dec3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: String,
    pub p_two_sided: Option<f64>,
    pub p_one_sided: Option<f64>,
    pub significant: Option<bool>,
    pub estimate_name: Option<String>,
    pub estimate: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    /// Selected component, or the failure message.
    pub note: Option<String>,
}

impl MethodRow {
    pub fn failed(method: &str, message: String) -> Self {
        Self {
            method: method.to_string(),
            p_two_sided: None,
            p_one_sided: None,
            significant: None,
            estimate_name: None,
            estimate: None,
            ci_low: None,
            ci_high: None,
            note: Some(format!("failed: {message}")),
        }
    }

    pub fn with_p(method: &str, p_two_sided: f64, p_one_sided: f64, alpha: f64) -> Self {
        Self {
            method: method.to_string(),
            p_two_sided: Some(sig4(p_two_sided)),
            p_one_sided: Some(sig4(p_one_sided)),
            significant: Some(p_one_sided < alpha),
            estimate_name: None,
            estimate: None,
            ci_low: None,
            ci_high: None,
            note: None,
        }
    }

    pub fn estimate(
        mut self,
        name: &str,
        value: f64,
        ci: Option<(Option<f64>, Option<f64>)>,
    ) -> Self {
        self.estimate_name = Some(name.to_string());
        self.estimate = finite(value).map(sig4);
        if let Some((lo, hi)) = ci {
            self.ci_low = lo.and_then(finite).map(sig4);
            self.ci_high = hi.and_then(finite).map(sig4);
        }
        self
    }

    pub fn note(mut self, note: String) -> Self {
        self.note = Some(note);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseRow {
    pub start: f64,
    /// `None` for the open last interval.
    pub end: Option<f64>,
    pub hr: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub events_control: usize,
    pub events_experimental: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtSummary {
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub events: usize,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisMetadata {
    pub dataset_sha256: String,
    pub subjects: usize,
    pub events: usize,
    pub alpha_one_sided: f64,
    pub direction: String,
    pub cuts: Vec<f64>,
    pub tau: Option<f64>,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub methods: Vec<MethodRow>,
    pub piecewise: Vec<PiecewiseRow>,
    pub schoenfeld: GtSummary,
    pub metadata: AnalysisMetadata,
}

fn cell(x: Option<f64>) -> String {
    x.map_or(String::new(), |v| v.to_string())
}

impl AnalysisReport {
    /// One table with a `section` column: method rows, then piecewise rows,
    /// the G-T row and metadata.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "section",
            "label",
            "p_two_sided",
            "p_one_sided",
            "estimate_name",
            "estimate",
            "ci_low",
            "ci_high",
            "note",
        ])?;
        for r in &self.methods {
            w.write_record([
                "method".to_string(),
                r.method.clone(),
                cell(r.p_two_sided),
                cell(r.p_one_sided),
                r.estimate_name.clone().unwrap_or_default(),
                cell(r.estimate),
                cell(r.ci_low),
                cell(r.ci_high),
                r.note.clone().unwrap_or_default(),
            ])?;
        }
        for p in &self.piecewise {
            let end = p.end.map_or("inf".to_string(), |e| e.to_string());
            w.write_record([
                "piecewise".to_string(),
                format!("({}, {end}]", p.start),
                String::new(),
                String::new(),
                "HR".to_string(),
                cell(p.hr),
                cell(p.ci_low),
                cell(p.ci_high),
                format!("events C={} E={}", p.events_control, p.events_experimental),
            ])?;
        }
        let g = &self.schoenfeld;
        w.write_record([
            "diagnostic".to_string(),
            "Grambsch-Therneau".to_string(),
            cell(g.p_value),
            String::new(),
            "chi-square".to_string(),
            cell(g.statistic),
            String::new(),
            String::new(),
            g.note.clone().unwrap_or_default(),
        ])?;
        let m = &self.metadata;
        let meta = [
            ("dataset_sha256", m.dataset_sha256.clone()),
            ("subjects", m.subjects.to_string()),
            ("events", m.events.to_string()),
            ("alpha_one_sided", m.alpha_one_sided.to_string()),
            ("direction", m.direction.clone()),
            ("tau", cell(m.tau)),
            ("version", m.version.clone()),
        ];
        for (k, v) in meta {
            w.write_record(["metadata", k, "", "", "", "", "", "", &v])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub method: Method,
    pub label: String,
    pub rate_percent: f64,
    pub mc_se_percent: f64,
    pub rejections: usize,
    pub evaluated: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HrRow {
    pub estimator: String,
    pub geometric_mean: Option<f64>,
    pub used: usize,
    pub excluded: usize,
}

/// A simulation study result at output precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub scenario: String,
    pub n_total: usize,
    pub enrollment_months: f64,
    pub replicates: usize,
    pub seed: u64,
    pub rates: Vec<RateRow>,
    pub hazard_ratios: Vec<HrRow>,
    pub event_patient_ratio: f64,
    pub mean_cut_time: Option<f64>,
    pub shortfalls: usize,
    pub config: nph_core::study::StudyConfig,
    pub version: String,
}

impl SimulationReport {
    pub fn new(s: &StudySummary) -> Self {
        Self {
            scenario: s.config.scenario.name.clone(),
            n_total: s.config.design.n_total,
            enrollment_months: s.config.design.enrollment_months,
            replicates: s.config.replicates,
            seed: s.config.seed,
            rates: s
                .methods
                .iter()
                .map(|m| RateRow {
                    method: m.method,
                    label: m.label.clone(),
                    rate_percent: dec3(m.rate_percent),
                    mc_se_percent: dec3(m.mc_se_percent),
                    rejections: m.rejections,
                    evaluated: m.evaluated,
                    failures: m.failures,
                })
                .collect(),
            hazard_ratios: s
                .hazard_ratios
                .iter()
                .map(|h| HrRow {
                    estimator: h.estimator.clone(),
                    geometric_mean: finite(h.geometric_mean).map(sig4),
                    used: h.used,
                    excluded: h.excluded,
                })
                .collect(),
            event_patient_ratio: sig4(s.mean_event_patient_ratio),
            mean_cut_time: finite(s.mean_cut_time).map(sig4),
            shortfalls: s.shortfalls,
            config: s.config.clone(),
            version: VERSION.to_string(),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["metric", "name", "value", "mc_se", "count", "excluded"])?;
        for r in &self.rates {
            w.write_record([
                "rejection_rate_percent".to_string(),
                r.label.clone(),
                format!("{:.3}", r.rate_percent),
                format!("{:.3}", r.mc_se_percent),
                r.evaluated.to_string(),
                r.failures.to_string(),
            ])?;
        }
        for h in &self.hazard_ratios {
            w.write_record([
                "geometric_mean_hr".to_string(),
                h.estimator.clone(),
                cell(h.geometric_mean),
                String::new(),
                h.used.to_string(),
                h.excluded.to_string(),
            ])?;
        }
        w.write_record([
            "event_patient_ratio".to_string(),
            String::new(),
            self.event_patient_ratio.to_string(),
            String::new(),
            self.replicates.to_string(),
            String::new(),
        ])?;
        w.write_record([
            "mean_cut_time".to_string(),
            String::new(),
            cell(self.mean_cut_time),
            String::new(),
            (self.replicates - self.shortfalls).to_string(),
            self.shortfalls.to_string(),
        ])?;
        w.flush()?;
        Ok(())
    }
}

/// Rows = sample sizes, columns = methods; used by `table2` and `power`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateGrid {
    pub scenario: String,
    pub enrollment_months: f64,
    pub replicates: usize,
    pub seed: u64,
    pub rows: Vec<SimulationReport>,
    pub version: String,
}

impl RateGrid {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["n_total".to_string()];
        if let Some(first) = self.rows.first() {
            header.extend(first.rates.iter().map(|r| r.label.clone()));
        }
        header.extend(["hr_cox".to_string(), "hr_maxcombo".to_string()]);
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![row.n_total.to_string()];
            rec.extend(row.rates.iter().map(|r| format!("{:.3}", r.rate_percent)));
            for name in ["Cox", "MaxCombo"] {
                let hr = row
                    .hazard_ratios
                    .iter()
                    .find(|h| h.estimator == name)
                    .and_then(|h| h.geometric_mean);
                rec.push(cell(hr));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding() {
        assert_eq!(sig4(0.017_384_9), 0.01738);
        assert_eq!(sig4(123_456.0), 123_500.0);
        assert_eq!(sig4(-0.000_123_46), -0.0001235);
        assert_eq!(sig4(0.0), 0.0);
        assert_eq!(dec3(2.584_6), 2.585);
    }
}
