//! Survival tests, effect estimates and trial simulation for comparing two
//! arms under non-proportional hazards.

pub mod combo;
pub mod data;
pub mod error;
pub mod estimation;
pub mod km;
pub mod mvn;
pub mod normal;
pub mod sim;
pub mod study;
pub mod wlr;

pub use data::{Arm, SubjectRecord, SurvivalDataset, ValidatedDataset};
pub use error::{NphError, Result};
pub use normal::TestResult;
