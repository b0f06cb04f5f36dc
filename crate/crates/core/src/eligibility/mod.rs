//! Criterion and trial evaluation against patient records, and assembly of
//! the patient-by-trial eligibility matrix.
//!
//! Lab criteria follow the any-observation rule: one qualifying
//! observation anywhere in the patient's history satisfies the predicate.
//! Non-computable criteria are always skipped and never decide
//! eligibility. What happens when a computable criterion has no relevant
//! data is governed by [`MissingDataPolicy`].

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cdm::{CohortStore, DxSystem, PatientId, PxSystem, Sex, StoreError};
use crate::criteria::{
    CodeDomain, Criterion, CriterionCodeSystem, DemographicField, Predicate, TrialId, TrialSpec,
};
use crate::dates::age_in_years;
use crate::units::convert_unit;

/// How a computable criterion with no relevant observation is decided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum MissingDataPolicy {
    /// Missing data leaves the criterion unmet: an inclusion fails, an
    /// exclusion does not fire.
    #[default]
    MissingMeansUnmet,
    /// Missing data skips the criterion, removing it from the eligibility
    /// conjunction.
    MissingMeansSkipped,
}

impl MissingDataPolicy {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "missing_means_unmet" => Some(Self::MissingMeansUnmet),
            "missing_means_skipped" => Some(Self::MissingMeansSkipped),
            _ => None,
        }
    }

    pub fn token(&self) -> &'static str {
        match self {
            Self::MissingMeansUnmet => "missing_means_unmet",
            Self::MissingMeansSkipped => "missing_means_skipped",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Met,
    NotMet,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionVerdict {
    pub verdict: Verdict,
    /// Populated for Skipped verdicts and missing-data decisions.
    pub reason: Option<String>,
}

impl CriterionVerdict {
    fn met() -> Self {
        CriterionVerdict { verdict: Verdict::Met, reason: None }
    }
    fn not_met() -> Self {
        CriterionVerdict { verdict: Verdict::NotMet, reason: None }
    }
    fn skipped(reason: impl Into<String>) -> Self {
        CriterionVerdict { verdict: Verdict::Skipped, reason: Some(reason.into()) }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EligibilityResult {
    pub patient_id: PatientId,
    pub trial_id: TrialId,
    pub eligible: bool,
    /// True when every criterion was skipped, so eligibility is vacuous.
    pub vacuous: bool,
    pub index_date: Option<NaiveDate>,
    pub verdicts: Vec<CriterionVerdict>,
}

#[derive(Debug, Error)]
pub enum EligibilityError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("duplicate patient id `{0}` in matrix input")]
    DuplicatePatient(PatientId),
    #[error("empty patient list")]
    NoPatients,
    #[error("empty trial list")]
    NoTrials,
    #[error("cannot write export: {0}")]
    Io(#[from] std::io::Error),
}

/// Outcome of evaluating a bare predicate, before NOT and policy.
enum PredicateOutcome {
    Holds,
    Fails,
    Missing(&'static str),
    Unevaluable(String),
}

fn eval_predicate(
    store: &CohortStore,
    patient_id: &PatientId,
    predicate: &Predicate,
    index_date: Option<NaiveDate>,
) -> Result<PredicateOutcome, StoreError> {
    let record = store.record(patient_id)?;
    match predicate {
        Predicate::Demographic { field, cmp, value, .. } => match field {
            DemographicField::AgeAtIndex => match index_date {
                Some(idx) => {
                    let age = age_in_years(record.patient.birth_date, idx) as f64;
                    if cmp.holds(age, *value) {
                        Ok(PredicateOutcome::Holds)
                    } else {
                        Ok(PredicateOutcome::Fails)
                    }
                }
                None => Ok(PredicateOutcome::Missing("no index date for age computation")),
            },
            DemographicField::Sex => match record.patient.sex {
                Sex::Unknown => Ok(PredicateOutcome::Missing("sex unknown")),
                sex => {
                    let coded = if sex == Sex::Female { 1.0 } else { 0.0 };
                    if cmp.holds(coded, *value) {
                        Ok(PredicateOutcome::Holds)
                    } else {
                        Ok(PredicateOutcome::Fails)
                    }
                }
            },
        },
        Predicate::LabCompare { loinc, test, unit } => {
            let labs = store.labs_for(patient_id, loinc)?;
            if labs.is_empty() {
                return Ok(PredicateOutcome::Missing("no observation for LOINC set"));
            }
            let mut conversion_failure: Option<String> = None;
            for lab in labs {
                match convert_unit(lab.value, &lab.unit, unit) {
                    Ok(converted) => {
                        if test.holds(converted) {
                            // any-observation rule: one qualifying observation suffices
                            return Ok(PredicateOutcome::Holds);
                        }
                    }
                    Err(e) => conversion_failure = Some(e.to_string()),
                }
            }
            match conversion_failure {
                // an unconvertible observation leaves the predicate undecided
                Some(e) => Ok(PredicateOutcome::Unevaluable(format!("unit conversion failed: {e}"))),
                None => Ok(PredicateOutcome::Fails),
            }
        }
        Predicate::CodePresence { domain, system, patterns, presence } => {
            let any = match domain {
                CodeDomain::Diagnosis => {
                    let sys = match system {
                        CriterionCodeSystem::Icd9Cm => DxSystem::Icd9Cm,
                        _ => DxSystem::Icd10Cm,
                    };
                    !store.diagnoses_matching(patient_id, sys, patterns)?.is_empty()
                }
                CodeDomain::Procedure => {
                    let sys = match system {
                        CriterionCodeSystem::Rxnorm => PxSystem::Rxnorm,
                        _ => PxSystem::Hcpcs,
                    };
                    !store.procedures_matching(patient_id, sys, patterns)?.is_empty()
                }
                CodeDomain::Medication => !store.medications_matching(patient_id, patterns)?.is_empty(),
            };
            let holds = match presence {
                crate::criteria::Presence::Present => any,
                crate::criteria::Presence::Absent => !any,
            };
            Ok(if holds { PredicateOutcome::Holds } else { PredicateOutcome::Fails })
        }
        Predicate::NonComputable { reason } => {
            Ok(PredicateOutcome::Unevaluable(format!("non-computable: {reason}")))
        }
    }
}

/// Evaluates one criterion for one patient. The NOT flag inverts Met and
/// NotMet; Skipped verdicts are never inverted, and the missing-data
/// policy applies to the criterion as a whole (after NOT).
pub fn eval_criterion(
    store: &CohortStore,
    patient_id: &PatientId,
    criterion: &Criterion,
    index_date: Option<NaiveDate>,
    policy: MissingDataPolicy,
) -> Result<CriterionVerdict, StoreError> {
    let outcome = eval_predicate(store, patient_id, &criterion.predicate, index_date)?;
    Ok(match outcome {
        PredicateOutcome::Holds => {
            if criterion.negated {
                CriterionVerdict::not_met()
            } else {
                CriterionVerdict::met()
            }
        }
        PredicateOutcome::Fails => {
            if criterion.negated {
                CriterionVerdict::met()
            } else {
                CriterionVerdict::not_met()
            }
        }
        PredicateOutcome::Missing(reason) => match policy {
            MissingDataPolicy::MissingMeansUnmet => {
                CriterionVerdict { verdict: Verdict::NotMet, reason: Some(reason.to_string()) }
            }
            MissingDataPolicy::MissingMeansSkipped => CriterionVerdict::skipped(reason),
        },
        PredicateOutcome::Unevaluable(reason) => CriterionVerdict::skipped(reason),
    })
}

/// Evaluates a full trial: eligible iff every computable inclusion is Met
/// and no computable exclusion is Met, with Skipped verdicts excluded from
/// the conjunction.
pub fn eval_trial(
    store: &CohortStore,
    patient_id: &PatientId,
    trial: &TrialSpec,
    index_date: Option<NaiveDate>,
    policy: MissingDataPolicy,
) -> Result<EligibilityResult, StoreError> {
    let mut verdicts = Vec::with_capacity(trial.criteria.len());
    let mut eligible = true;
    let mut all_skipped = true;
    for criterion in &trial.criteria {
        let cv = eval_criterion(store, patient_id, criterion, index_date, policy)?;
        match (criterion.polarity, cv.verdict) {
            (_, Verdict::Skipped) => {}
            (crate::criteria::Polarity::Include, v) => {
                all_skipped = false;
                if v != Verdict::Met {
                    eligible = false;
                }
            }
            (crate::criteria::Polarity::Exclude, v) => {
                all_skipped = false;
                if v == Verdict::Met {
                    eligible = false;
                }
            }
        }
        verdicts.push(cv);
    }
    Ok(EligibilityResult {
        patient_id: patient_id.clone(),
        trial_id: trial.id.clone(),
        eligible: if all_skipped { true } else { eligible },
        vacuous: all_skipped,
        index_date,
        verdicts,
    })
}

/// N-by-K binary eligibility matrix in the declared patient and trial order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EligibilityMatrix {
    pub patients: Vec<PatientId>,
    pub trials: Vec<TrialId>,
    /// Row-major entries, `bits[i * trials.len() + j]`.
    pub bits: Vec<u8>,
}

impl EligibilityMatrix {
    pub fn entry(&self, i: usize, j: usize) -> u8 {
        self.bits[i * self.trials.len() + j]
    }

    pub fn row(&self, i: usize) -> &[u8] {
        let k = self.trials.len();
        &self.bits[i * k..(i + 1) * k]
    }

    /// Mean of column `j` (the eligible fraction for that trial).
    pub fn column_mean(&self, j: usize) -> f64 {
        if self.patients.is_empty() {
            return 0.0;
        }
        let k = self.trials.len();
        let sum: u64 = self.patients.iter().enumerate().map(|(i, _)| self.bits[i * k + j] as u64).sum();
        sum as f64 / self.patients.len() as f64
    }

    /// Writes the matrix as a delimited file: PATID row keys, trial-id
    /// column keys, 0/1 cells.
    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["PATID".to_string()];
        header.extend(self.trials.iter().map(|t| t.0.clone()));
        w.write_record(&header)?;
        for (i, pid) in self.patients.iter().enumerate() {
            let mut rec = vec![pid.0.clone()];
            rec.extend(self.row(i).iter().map(|b| b.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()
    }

    /// Reads a matrix previously written by [`EligibilityMatrix::write_csv`].
    pub fn read_csv(path: &Path) -> Result<Self, String> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| e.to_string())?;
        let headers = rdr.headers().map_err(|e| e.to_string())?.clone();
        if headers.get(0) != Some("PATID") {
            return Err("matrix file must start with a PATID column".into());
        }
        let trials: Vec<TrialId> = headers.iter().skip(1).map(TrialId::from).collect();
        let mut patients = Vec::new();
        let mut bits = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| e.to_string())?;
            patients.push(PatientId::from(rec.get(0).unwrap_or_default()));
            for cell in rec.iter().skip(1) {
                match cell {
                    "0" => bits.push(0),
                    "1" => bits.push(1),
                    other => return Err(format!("invalid matrix cell `{other}`")),
                }
            }
        }
        Ok(EligibilityMatrix { patients, trials, bits })
    }
}

/// Builds the eligibility matrix for the given patient and trial orderings.
/// `index_dates` supplies each patient's age-computation date; a missing
/// entry makes age criteria fall back to the missing-data policy.
pub fn eligibility_matrix(
    store: &CohortStore,
    patients: &[PatientId],
    trials: &[TrialSpec],
    index_dates: &BTreeMap<PatientId, NaiveDate>,
    policy: MissingDataPolicy,
) -> Result<EligibilityMatrix, EligibilityError> {
    if patients.is_empty() {
        return Err(EligibilityError::NoPatients);
    }
    if trials.is_empty() {
        return Err(EligibilityError::NoTrials);
    }
    let mut seen = std::collections::BTreeSet::new();
    for p in patients {
        if !seen.insert(p) {
            return Err(EligibilityError::DuplicatePatient(p.clone()));
        }
    }
    let mut bits = Vec::with_capacity(patients.len() * trials.len());
    for pid in patients {
        let idx = index_dates.get(pid).copied();
        for trial in trials {
            let res = eval_trial(store, pid, trial, idx, policy)?;
            bits.push(res.eligible as u8);
        }
    }
    Ok(EligibilityMatrix {
        patients: patients.to_vec(),
        trials: trials.iter().map(|t| t.id.clone()).collect(),
        bits,
    })
}

/// Writes one JSON record per (patient, trial) with the detailed verdicts.
pub fn write_verdict_log(
    store: &CohortStore,
    patients: &[PatientId],
    trials: &[TrialSpec],
    index_dates: &BTreeMap<PatientId, NaiveDate>,
    policy: MissingDataPolicy,
    path: &Path,
) -> Result<(), EligibilityError> {
    let file = std::fs::File::create(path)?;
    let mut out = std::io::BufWriter::new(file);
    for pid in patients {
        let idx = index_dates.get(pid).copied();
        for trial in trials {
            let res = eval_trial(store, pid, trial, idx, policy)?;
            let detail: Vec<serde_json::Value> = trial
                .criteria
                .iter()
                .zip(&res.verdicts)
                .map(|(c, v)| {
                    serde_json::json!({
                        "polarity": c.polarity.token(),
                        "trait": c.trait_label,
                        "verdict": v.verdict,
                        "reason": v.reason,
                    })
                })
                .collect();
            let line = serde_json::json!({
                "patient_id": res.patient_id,
                "trial_id": res.trial_id,
                "eligible": res.eligible,
                "vacuous": res.vacuous,
                "index_date": res.index_date,
                "verdicts": detail,
            });
            writeln!(out, "{line}")?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests;
