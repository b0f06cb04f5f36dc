//! Patient-trial generalizability analysis over a simplified clinical
//! common data model.
//!
//! The crate covers the full analysis pipeline: ingesting patient-level
//! CDM tables, parsing computable eligibility criteria, evaluating
//! patient-by-trial eligibility, scoring trial generalizability (sGIST,
//! mGIST) and the per-patient composite patient-trial generalizability
//! (cPTG) score, extracting serious-adverse-event outcomes inside a
//! treatment window, and relating cPTG to SAE counts with a
//! zero-inflated negative binomial model. A deterministic synthetic
//! cohort generator makes every stage verifiable against planted ground
//! truth.

pub mod cdm;
pub mod criteria;
pub mod dates;
pub mod eligibility;
pub mod gist;
pub mod outcomes;
pub mod pipeline;
pub mod stats;
pub mod synth;
pub mod units;

pub use cdm::{CohortStore, Patient, PatientId};
pub use criteria::{Criterion, Polarity, Predicate, TrialId, TrialSpec};
pub use eligibility::{EligibilityMatrix, MissingDataPolicy};
pub use gist::{CptgVector, GistReport};
