//! Subject records, dataset validation and CSV ingestion.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{NphError, Result};

/// Treatment arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Arm {
    Control,
    Experimental,
}

impl Arm {
    pub fn swapped(self) -> Arm {
        match self {
            Arm::Control => Arm::Experimental,
            Arm::Experimental => Arm::Control,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Arm::Control => "C",
            Arm::Experimental => "E",
        }
    }
}

/// One patient: follow-up time from randomization (months), event flag and
/// calendar entry time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub arm: Arm,
    pub time: f64,
    pub event: bool,
    pub entry: f64,
}

impl SubjectRecord {
    pub fn new(arm: Arm, time: f64, event: bool) -> Self {
        Self {
            arm,
            time,
            event,
            entry: 0.0,
        }
    }
}

/// Unvalidated collection of subject records.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SurvivalDataset {
    pub records: Vec<SubjectRecord>,
}

impl SurvivalDataset {
    pub fn new(records: Vec<SubjectRecord>) -> Self {
        Self { records }
    }

    /// Builds a dataset from parallel slices; `arm[i]` is true for the experimental arm.
    pub fn from_columns(experimental: &[bool], time: &[f64], event: &[bool]) -> Self {
        let records = experimental
            .iter()
            .zip(time)
            .zip(event)
            .map(|((&e, &t), &d)| {
                let arm = if e { Arm::Experimental } else { Arm::Control };
                SubjectRecord::new(arm, t, d)
            })
            .collect();
        Self { records }
    }

    pub fn with_arms_swapped(&self) -> Self {
        let records = self
            .records
            .iter()
            .map(|r| SubjectRecord {
                arm: r.arm.swapped(),
                ..*r
            })
            .collect();
        Self { records }
    }

    pub fn with_events_inverted(&self) -> Self {
        let records = self
            .records
            .iter()
            .map(|r| SubjectRecord {
                event: !r.event,
                ..*r
            })
            .collect();
        Self { records }
    }

    pub fn validate(&self) -> Result<ValidatedDataset> {
        ValidatedDataset::new(self.records.clone())
    }

    /// Parses the `id,arm,time,event,entry` CSV format. `entry` may be absent
    /// or blank, in which case it defaults to 0.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            #[allow(dead_code)]
            id: String,
            arm: String,
            time: f64,
            event: u8,
            #[serde(default)]
            entry: Option<f64>,
        }

        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let mut records = Vec::new();
        for (i, row) in rdr.deserialize::<Row>().enumerate() {
            // header is line 1
            let line = i + 2;
            let row = row.map_err(|e| NphError::Ingest {
                line,
                message: e.to_string(),
            })?;
            let arm = match row.arm.as_str() {
                "C" | "c" => Arm::Control,
                "E" | "e" => Arm::Experimental,
                other => {
                    return Err(NphError::Ingest {
                        line,
                        message: format!("arm must be C or E, got {other:?}"),
                    })
                }
            };
            let event = match row.event {
                0 => false,
                1 => true,
                other => {
                    return Err(NphError::Ingest {
                        line,
                        message: format!("event must be 0 or 1, got {other}"),
                    })
                }
            };
            if !row.time.is_finite() || row.time < 0.0 {
                return Err(NphError::Ingest {
                    line,
                    message: format!("time must be finite and non-negative, got {}", row.time),
                });
            }
            let entry = row.entry.unwrap_or(0.0);
            if !entry.is_finite() || entry < 0.0 {
                return Err(NphError::Ingest {
                    line,
                    message: format!("entry must be finite and non-negative, got {entry}"),
                });
            }
            records.push(SubjectRecord {
                arm,
                time: row.time,
                event,
                entry,
            });
        }
        Ok(Self { records })
    }

    pub fn to_csv_writer<W: std::io::Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["id", "arm", "time", "event", "entry"])?;
        for (i, r) in self.records.iter().enumerate() {
            w.write_record([
                (i + 1).to_string(),
                r.arm.code().to_string(),
                r.time.to_string(),
                u8::from(r.event).to_string(),
                r.entry.to_string(),
            ])?;
        }
        w.flush()
    }
}

/// Records sorted by time, events before censorings at tied times.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedDataset {
    records: Vec<SubjectRecord>,
    n_control: usize,
    n_experimental: usize,
    n_events: usize,
}

impl ValidatedDataset {
    pub fn new(mut records: Vec<SubjectRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(NphError::EmptyDataset);
        }
        for (index, r) in records.iter().enumerate() {
            if !r.time.is_finite() || r.time < 0.0 {
                return Err(NphError::NegativeTime {
                    index,
                    value: r.time,
                });
            }
            if !r.entry.is_finite() || r.entry < 0.0 {
                return Err(NphError::NegativeEntry {
                    index,
                    value: r.entry,
                });
            }
        }
        records.sort_by(|a, b| a.time.total_cmp(&b.time).then(b.event.cmp(&a.event)));
        let n_experimental = records
            .iter()
            .filter(|r| r.arm == Arm::Experimental)
            .count();
        let n_events = records.iter().filter(|r| r.event).count();
        Ok(Self {
            n_control: records.len() - n_experimental,
            n_experimental,
            n_events,
            records,
        })
    }

    pub fn records(&self) -> &[SubjectRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_arm(&self, arm: Arm) -> usize {
        match arm {
            Arm::Control => self.n_control,
            Arm::Experimental => self.n_experimental,
        }
    }

    pub fn n_events(&self) -> usize {
        self.n_events
    }

    /// True when all records fall in one arm. Only fatal for two-sample operations.
    pub fn single_arm(&self) -> bool {
        self.n_control == 0 || self.n_experimental == 0
    }

    pub fn require_two_arms(&self) -> Result<()> {
        if self.single_arm() {
            Err(NphError::SingleArm)
        } else {
            Ok(())
        }
    }

    /// Two arms and at least one event: the precondition of every rank test.
    pub fn require_rank_testable(&self) -> Result<()> {
        self.require_two_arms()?;
        if self.n_events == 0 {
            return Err(NphError::NoEvents);
        }
        Ok(())
    }

    /// Largest observed (event or censored) time within an arm.
    pub fn max_time(&self, arm: Option<Arm>) -> Option<f64> {
        self.records
            .iter()
            .rev()
            .find(|r| arm.is_none_or(|a| r.arm == a))
            .map(|r| r.time)
    }

    pub fn to_dataset(&self) -> SurvivalDataset {
        SurvivalDataset::new(self.records.clone())
    }
}
