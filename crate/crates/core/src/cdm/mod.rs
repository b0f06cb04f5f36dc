//! Simplified PCORnet-style common data model: patient demographics plus
//! per-patient diagnosis, procedure, lab, and medication event lists.
//!
//! A [`CohortStore`] is built once by [`ingest::ingest_cohort`] and is
//! immutable afterwards; every query is read-only, so a store can be
//! shared freely across threads.

mod codes;
pub(crate) mod ingest;

pub use codes::{code_matches, normalize_code, CodeError, CodePattern};
pub use ingest::{ingest_cohort, IngestManifest, RejectedRow};

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Opaque patient identifier, unique within a store.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PatientId(pub String);

impl std::fmt::Display for PatientId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for PatientId {
    fn from(s: &str) -> Self {
        PatientId(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sex {
    Female,
    Male,
    Unknown,
}

impl Sex {
    pub fn parse(s: &str) -> Option<Sex> {
        match s.trim().to_ascii_uppercase().as_str() {
            "F" | "FEMALE" => Some(Sex::Female),
            "M" | "MALE" => Some(Sex::Male),
            "U" | "UNKNOWN" | "" => Some(Sex::Unknown),
            _ => None,
        }
    }
}

/// Combined race/ethnicity in the five reporting categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RaceEthnicity {
    NonHispanicWhite,
    NonHispanicBlack,
    Hispanic,
    Other,
    Unknown,
}

impl RaceEthnicity {
    pub fn parse(s: &str) -> Option<RaceEthnicity> {
        match s.trim().to_ascii_uppercase().as_str() {
            "NHW" => Some(RaceEthnicity::NonHispanicWhite),
            "NHB" => Some(RaceEthnicity::NonHispanicBlack),
            "HISPANIC" => Some(RaceEthnicity::Hispanic),
            "OTHER" => Some(RaceEthnicity::Other),
            "UNKNOWN" | "" => Some(RaceEthnicity::Unknown),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            RaceEthnicity::NonHispanicWhite => "NHW",
            RaceEthnicity::NonHispanicBlack => "NHB",
            RaceEthnicity::Hispanic => "Hispanic",
            RaceEthnicity::Other => "Other",
            RaceEthnicity::Unknown => "Unknown",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patient {
    pub id: PatientId,
    pub birth_date: NaiveDate,
    pub sex: Sex,
    pub race_ethnicity: RaceEthnicity,
}

/// Coding system of a diagnosis event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DxSystem {
    Icd9Cm,
    Icd10Cm,
}

impl DxSystem {
    pub fn parse(s: &str) -> Option<DxSystem> {
        match s.trim().to_ascii_uppercase().as_str() {
            "ICD9CM" | "ICD9" => Some(DxSystem::Icd9Cm),
            "ICD10CM" | "ICD10" => Some(DxSystem::Icd10Cm),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            DxSystem::Icd9Cm => "ICD9CM",
            DxSystem::Icd10Cm => "ICD10CM",
        }
    }
}

/// Coding system of a procedure event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PxSystem {
    Hcpcs,
    Rxnorm,
}

impl PxSystem {
    pub fn parse(s: &str) -> Option<PxSystem> {
        match s.trim().to_ascii_uppercase().as_str() {
            "HCPCS" => Some(PxSystem::Hcpcs),
            "RXNORM" => Some(PxSystem::Rxnorm),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            PxSystem::Hcpcs => "HCPCS",
            PxSystem::Rxnorm => "RXNORM",
        }
    }
}

/// Diagnosis with a normalized (undotted, upper-case) code.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DiagnosisEvent {
    pub date: NaiveDate,
    pub code_system: DxSystem,
    pub code: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProcedureEvent {
    pub date: NaiveDate,
    pub code_system: PxSystem,
    pub code: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabResult {
    pub date: NaiveDate,
    pub loinc: String,
    pub value: f64,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MedicationEvent {
    pub date: NaiveDate,
    pub rxnorm: String,
}

/// All records for one patient; event lists are sorted by date (with the
/// full event content as a tiebreaker, so permuted input rows index
/// identically).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient: Patient,
    pub diagnoses: Vec<DiagnosisEvent>,
    pub procedures: Vec<ProcedureEvent>,
    pub labs: Vec<LabResult>,
    pub medications: Vec<MedicationEvent>,
}

impl PatientRecord {
    fn new(patient: Patient) -> Self {
        PatientRecord {
            patient,
            diagnoses: Vec::new(),
            procedures: Vec::new(),
            labs: Vec::new(),
            medications: Vec::new(),
        }
    }

    /// Latest date over all event kinds, if the patient has any event.
    pub fn last_event_date(&self) -> Option<NaiveDate> {
        let mut last: Option<NaiveDate> = None;
        let mut take = |d: NaiveDate| {
            last = Some(match last {
                Some(prev) if prev >= d => prev,
                _ => d,
            });
        };
        self.diagnoses.iter().for_each(|e| take(e.date));
        self.procedures.iter().for_each(|e| take(e.date));
        self.labs.iter().for_each(|e| take(e.date));
        self.medications.iter().for_each(|e| take(e.date));
        last
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unknown patient id `{0}`")]
    UnknownPatient(PatientId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Diagnosis,
    Procedure,
    Lab,
    Medication,
}

/// An owned event of any kind, for uniform query results.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum Event {
    Diagnosis(DiagnosisEvent),
    Procedure(ProcedureEvent),
    Lab(LabResult),
    Medication(MedicationEvent),
}

impl Event {
    pub fn date(&self) -> NaiveDate {
        match self {
            Event::Diagnosis(e) => e.date,
            Event::Procedure(e) => e.date,
            Event::Lab(e) => e.date,
            Event::Medication(e) => e.date,
        }
    }
}

/// Query selector: code patterns for coded domains, a LOINC set for labs.
#[derive(Debug, Clone)]
pub enum EventSelector<'a> {
    Codes(&'a [CodePattern]),
    Loinc(&'a [String]),
}

/// Immutable, indexed patient-level event database.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CohortStore {
    records: BTreeMap<PatientId, PatientRecord>,
    manifest: IngestManifest,
}

impl CohortStore {
    pub(crate) fn from_parts(
        records: BTreeMap<PatientId, PatientRecord>,
        manifest: IngestManifest,
    ) -> Self {
        CohortStore { records, manifest }
    }

    pub fn manifest(&self) -> &IngestManifest {
        &self.manifest
    }

    pub fn patient_count(&self) -> usize {
        self.records.len()
    }

    pub fn patient_ids(&self) -> impl Iterator<Item = &PatientId> {
        self.records.keys()
    }

    pub fn record(&self, id: &PatientId) -> Result<&PatientRecord, StoreError> {
        self.records.get(id).ok_or_else(|| StoreError::UnknownPatient(id.clone()))
    }

    pub fn patient(&self, id: &PatientId) -> Result<&Patient, StoreError> {
        self.record(id).map(|r| &r.patient)
    }

    /// Diagnosis events of `system` matching any of `patterns`, date-ascending.
    pub fn diagnoses_matching(
        &self,
        id: &PatientId,
        system: DxSystem,
        patterns: &[CodePattern],
    ) -> Result<Vec<&DiagnosisEvent>, StoreError> {
        let rec = self.record(id)?;
        Ok(rec
            .diagnoses
            .iter()
            .filter(|e| e.code_system == system && patterns.iter().any(|p| p.matches(&e.code)))
            .collect())
    }

    pub fn procedures_matching(
        &self,
        id: &PatientId,
        system: PxSystem,
        patterns: &[CodePattern],
    ) -> Result<Vec<&ProcedureEvent>, StoreError> {
        let rec = self.record(id)?;
        Ok(rec
            .procedures
            .iter()
            .filter(|e| e.code_system == system && patterns.iter().any(|p| p.matches(&e.code)))
            .collect())
    }

    pub fn medications_matching(
        &self,
        id: &PatientId,
        patterns: &[CodePattern],
    ) -> Result<Vec<&MedicationEvent>, StoreError> {
        let rec = self.record(id)?;
        Ok(rec
            .medications
            .iter()
            .filter(|e| patterns.iter().any(|p| p.matches(&e.rxnorm)))
            .collect())
    }

    /// Lab results whose LOINC is in `loinc_set`, date-ascending.
    pub fn labs_for(
        &self,
        id: &PatientId,
        loinc_set: &[String],
    ) -> Result<Vec<&LabResult>, StoreError> {
        let rec = self.record(id)?;
        Ok(rec.labs.iter().filter(|e| loinc_set.iter().any(|l| l == &e.loinc)).collect())
    }

    /// Uniform event query: events of `kind` matching the selector, within the
    /// optional inclusive date range, ordered by date. An empty selector
    /// yields an empty list.
    pub fn query_events(
        &self,
        id: &PatientId,
        kind: EventKind,
        selector: EventSelector<'_>,
        range: Option<(NaiveDate, NaiveDate)>,
    ) -> Result<Vec<Event>, StoreError> {
        let rec = self.record(id)?;
        let in_range = |d: NaiveDate| range.map_or(true, |(lo, hi)| d >= lo && d <= hi);
        let mut out = Vec::new();
        match (kind, selector) {
            (EventKind::Diagnosis, EventSelector::Codes(pats)) => {
                for e in &rec.diagnoses {
                    if in_range(e.date) && pats.iter().any(|p| p.matches(&e.code)) {
                        out.push(Event::Diagnosis(e.clone()));
                    }
                }
            }
            (EventKind::Procedure, EventSelector::Codes(pats)) => {
                for e in &rec.procedures {
                    if in_range(e.date) && pats.iter().any(|p| p.matches(&e.code)) {
                        out.push(Event::Procedure(e.clone()));
                    }
                }
            }
            (EventKind::Medication, EventSelector::Codes(pats)) => {
                for e in &rec.medications {
                    if in_range(e.date) && pats.iter().any(|p| p.matches(&e.rxnorm)) {
                        out.push(Event::Medication(e.clone()));
                    }
                }
            }
            (EventKind::Lab, EventSelector::Loinc(set)) => {
                for e in &rec.labs {
                    if in_range(e.date) && set.iter().any(|l| l == &e.loinc) {
                        out.push(Event::Lab(e.clone()));
                    }
                }
            }
            // A selector of the wrong shape selects nothing.
            _ => {}
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cdm::ingest::tests::small_fixture_store;

    #[test]
    fn query_matches_prefix_patterns() {
        let store = small_fixture_store();
        let pid = PatientId::from("P1");
        let pats = vec![CodePattern::parse("C18.*").unwrap()];
        let hits = store
            .query_events(&pid, EventKind::Diagnosis, EventSelector::Codes(&pats), None)
            .unwrap();
        assert_eq!(hits.len(), 1);
        match &hits[0] {
            Event::Diagnosis(e) => assert_eq!(e.code, "C189"),
            other => panic!("unexpected event {other:?}"),
        }
    }

    #[test]
    fn empty_selector_and_excluding_range_yield_empty() {
        let store = small_fixture_store();
        let pid = PatientId::from("P1");
        let none: Vec<CodePattern> = Vec::new();
        let hits = store
            .query_events(&pid, EventKind::Diagnosis, EventSelector::Codes(&none), None)
            .unwrap();
        assert!(hits.is_empty());

        let pats = vec![CodePattern::parse("C18.*").unwrap()];
        let range = Some(("1990-01-01".parse().unwrap(), "1990-12-31".parse().unwrap()));
        let hits = store
            .query_events(&pid, EventKind::Diagnosis, EventSelector::Codes(&pats), range)
            .unwrap();
        assert!(hits.is_empty());
    }

    #[test]
    fn unknown_patient_is_an_error() {
        let store = small_fixture_store();
        let missing = PatientId::from("NOPE");
        assert!(store.record(&missing).is_err());
    }
}
