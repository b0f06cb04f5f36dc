//! Target-population selection, treatment-exposure summaries, and
//! serious-adverse-event extraction inside the treatment window.
//!
//! The target population holds patients with at least one qualifying
//! colorectal-cancer diagnosis and at least one treatment administration
//! strictly after the earliest such diagnosis. An SAE diagnosis counts
//! when it falls strictly after the first administration and at most
//! `window_days` after the last one (inclusive at exactly the window
//! edge). Same-day repeats of one SAE collapse to a single event per
//! (name, date).

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cdm::{normalize_code, CodePattern, CohortStore, DxSystem, PatientId, PxSystem, StoreError};
use crate::dates::{add_days, days_between};

pub const DEFAULT_WINDOW_DAYS: i64 = 180;

/// Bundled SAE code map (drug-label adverse events with their ICD-9/10 codes).
pub const BUNDLED_SAE_MAP: &str = include_str!("../assets/sae_codes.csv");

#[derive(Debug, Error)]
pub enum OutcomeError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("SAE map: {0}")]
    BadSaeMap(String),
    #[error("patient `{0}` has no qualifying treatment exposure")]
    NotExposed(PatientId),
    #[error("cannot write export: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaeCodeEntry {
    pub name: String,
    pub icd9: CodePattern,
    pub icd10: CodePattern,
}

/// Named SAE definitions. Codes of three or fewer characters are treated
/// as prefixes (category-level entries), longer ones as exact codes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaeCodeMap {
    pub entries: Vec<SaeCodeEntry>,
}

fn pattern_from_map_code(raw: &str) -> Result<CodePattern, String> {
    let trimmed = raw.trim();
    if trimmed.contains('*') {
        return CodePattern::parse(trimmed).map_err(|e| e.to_string());
    }
    let normalized = normalize_code(trimmed).map_err(|e| e.to_string())?;
    if normalized.len() <= 3 {
        Ok(CodePattern::Prefix(normalized))
    } else {
        Ok(CodePattern::Exact(normalized))
    }
}

impl SaeCodeMap {
    pub fn bundled() -> SaeCodeMap {
        Self::from_csv_str(BUNDLED_SAE_MAP).expect("bundled SAE map is well-formed")
    }

    pub fn from_path(path: &Path) -> Result<SaeCodeMap, OutcomeError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_csv_str(&text)
    }

    pub fn from_csv_str(text: &str) -> Result<SaeCodeMap, OutcomeError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(|e| OutcomeError::BadSaeMap(e.to_string()))?;
        let expected = ["SAE_NAME", "ICD9", "ICD10"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(OutcomeError::BadSaeMap(format!(
                "header mismatch: expected {expected:?}, found {headers:?}"
            )));
        }
        let mut entries = Vec::new();
        let mut names = BTreeSet::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| OutcomeError::BadSaeMap(e.to_string()))?;
            let name = rec.get(0).unwrap_or_default().trim().to_string();
            if name.is_empty() {
                return Err(OutcomeError::BadSaeMap("empty SAE name".into()));
            }
            if !names.insert(name.clone()) {
                return Err(OutcomeError::BadSaeMap(format!("duplicate SAE name `{name}`")));
            }
            let icd9 = pattern_from_map_code(rec.get(1).unwrap_or_default())
                .map_err(|e| OutcomeError::BadSaeMap(format!("{name}: ICD9: {e}")))?;
            let icd10 = pattern_from_map_code(rec.get(2).unwrap_or_default())
                .map_err(|e| OutcomeError::BadSaeMap(format!("{name}: ICD10: {e}")))?;
            entries.push(SaeCodeEntry { name, icd9, icd10 });
        }
        if entries.is_empty() {
            return Err(OutcomeError::BadSaeMap("no entries".into()));
        }
        Ok(SaeCodeMap { entries })
    }

    pub fn empty_for_tests() -> SaeCodeMap {
        SaeCodeMap { entries: Vec::new() }
    }

    /// Names of entries matching a diagnosis code in the given system.
    pub fn matching_names(&self, system: DxSystem, code: &str) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|e| match system {
                DxSystem::Icd9Cm => e.icd9.matches(code),
                DxSystem::Icd10Cm => e.icd10.matches(code),
            })
            .map(|e| e.name.as_str())
            .collect()
    }
}

/// Code lists defining the target population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortCodes {
    pub crc_icd9: Vec<CodePattern>,
    pub crc_icd10: Vec<CodePattern>,
    pub bev_hcpcs: Vec<CodePattern>,
    pub bev_rxnorm: Vec<CodePattern>,
}

impl Default for CohortCodes {
    fn default() -> Self {
        let p = |s: &str| CodePattern::parse(s).unwrap();
        CohortCodes {
            crc_icd9: vec![p("153.*"), p("154.*"), p("159.0")],
            crc_icd10: vec![p("C18.*"), p("C19.*"), p("C20.*"), p("C26.0")],
            bev_hcpcs: vec![p("C9257"), p("J9035")],
            bev_rxnorm: vec![p("337521")],
        }
    }
}

/// Earliest qualifying cancer diagnosis date, if any.
fn earliest_crc_dx(
    store: &CohortStore,
    pid: &PatientId,
    codes: &CohortCodes,
) -> Result<Option<NaiveDate>, StoreError> {
    let mut earliest: Option<NaiveDate> = None;
    for e in store.diagnoses_matching(pid, DxSystem::Icd9Cm, &codes.crc_icd9)? {
        earliest = Some(earliest.map_or(e.date, |d| d.min(e.date)));
    }
    for e in store.diagnoses_matching(pid, DxSystem::Icd10Cm, &codes.crc_icd10)? {
        earliest = Some(earliest.map_or(e.date, |d| d.min(e.date)));
    }
    Ok(earliest)
}

/// Treatment administration dates (procedure or medication records),
/// deduplicated to one per day.
fn administration_dates(
    store: &CohortStore,
    pid: &PatientId,
    codes: &CohortCodes,
) -> Result<BTreeSet<NaiveDate>, StoreError> {
    let mut dates = BTreeSet::new();
    for e in store.procedures_matching(pid, PxSystem::Hcpcs, &codes.bev_hcpcs)? {
        dates.insert(e.date);
    }
    for e in store.procedures_matching(pid, PxSystem::Rxnorm, &codes.bev_rxnorm)? {
        dates.insert(e.date);
    }
    for e in store.medications_matching(pid, &codes.bev_rxnorm)? {
        dates.insert(e.date);
    }
    Ok(dates)
}

/// Selects the target population: patients with a qualifying diagnosis and
/// at least one administration strictly after the earliest such diagnosis.
pub fn select_target_population(
    store: &CohortStore,
    codes: &CohortCodes,
) -> Result<BTreeSet<PatientId>, OutcomeError> {
    let mut selected = BTreeSet::new();
    for pid in store.patient_ids() {
        let Some(dx_date) = earliest_crc_dx(store, pid, codes)? else {
            continue;
        };
        let admins = administration_dates(store, pid, codes)?;
        if admins.iter().any(|d| *d > dx_date) {
            selected.insert(pid.clone());
        }
    }
    Ok(selected)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureSummary {
    pub patient_id: PatientId,
    pub first_px_date: NaiveDate,
    pub last_px_date: NaiveDate,
    pub n_px: usize,
    pub first_to_last_days: i64,
    /// Observed days after the last administration, capped at the SAE window.
    pub follow_up_days: i64,
}

/// Summarizes qualifying administrations (those strictly after the earliest
/// qualifying diagnosis). Follow-up runs from the last administration to
/// the patient's last recorded event, capped at `window_days`.
pub fn exposure_summary(
    store: &CohortStore,
    pid: &PatientId,
    codes: &CohortCodes,
    window_days: i64,
) -> Result<ExposureSummary, OutcomeError> {
    let dx_date =
        earliest_crc_dx(store, pid, codes)?.ok_or_else(|| OutcomeError::NotExposed(pid.clone()))?;
    let qualifying: Vec<NaiveDate> = administration_dates(store, pid, codes)?
        .into_iter()
        .filter(|d| *d > dx_date)
        .collect();
    let (Some(&first), Some(&last)) = (qualifying.first(), qualifying.last()) else {
        return Err(OutcomeError::NotExposed(pid.clone()));
    };
    let last_event = store.record(pid)?.last_event_date().unwrap_or(last);
    let follow_up_end = last_event.min(add_days(last, window_days));
    Ok(ExposureSummary {
        patient_id: pid.clone(),
        first_px_date: first,
        last_px_date: last,
        n_px: qualifying.len(),
        first_to_last_days: days_between(first, last),
        follow_up_days: days_between(last, follow_up_end).max(0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaeEvent {
    pub name: String,
    pub code: String,
    pub date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub patient_id: PatientId,
    pub sae_count: usize,
    pub sae_events: Vec<SaeEvent>,
}

/// Counts SAE diagnoses inside `(first_px, last_px + window_days]`,
/// collapsing duplicates per (SAE name, date).
pub fn count_saes(
    store: &CohortStore,
    pid: &PatientId,
    map: &SaeCodeMap,
    exposure: &ExposureSummary,
    window_days: i64,
) -> Result<OutcomeRecord, OutcomeError> {
    let window_end = add_days(exposure.last_px_date, window_days);
    let record = store.record(pid)?;
    let mut seen: BTreeSet<(String, NaiveDate)> = BTreeSet::new();
    let mut events = Vec::new();
    for dx in &record.diagnoses {
        if dx.date <= exposure.first_px_date || dx.date > window_end {
            continue;
        }
        for name in map.matching_names(dx.code_system, &dx.code) {
            if seen.insert((name.to_string(), dx.date)) {
                events.push(SaeEvent { name: name.to_string(), code: dx.code.clone(), date: dx.date });
            }
        }
    }
    events.sort_by(|a, b| (a.date, &a.name).cmp(&(b.date, &b.name)));
    Ok(OutcomeRecord { patient_id: pid.clone(), sae_count: events.len(), sae_events: events })
}

/// Writes one row per patient: PATID, SAE_COUNT, N_PX, FOLLOW_UP_DAYS,
/// FIRST_PX, LAST_PX.
pub fn write_outcomes_csv(
    rows: &[(ExposureSummary, OutcomeRecord)],
    path: &Path,
) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["PATID", "SAE_COUNT", "N_PX", "FOLLOW_UP_DAYS", "FIRST_PX", "LAST_PX"])?;
    for (exp, out) in rows {
        w.write_record([
            exp.patient_id.0.as_str(),
            &out.sae_count.to_string(),
            &exp.n_px.to_string(),
            &exp.follow_up_days.to_string(),
            &exp.first_px_date.to_string(),
            &exp.last_px_date.to_string(),
        ])?;
    }
    w.flush()
}

/// Reads back rows written by [`write_outcomes_csv`], keyed by patient.
pub fn read_outcomes_csv(
    path: &Path,
) -> Result<BTreeMap<PatientId, (usize, usize, i64, NaiveDate, NaiveDate)>, String> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| e.to_string())?;
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let pid = PatientId::from(rec.get(0).unwrap_or_default());
        let sae: usize = rec.get(1).unwrap_or_default().parse().map_err(|_| "bad SAE_COUNT")?;
        let n_px: usize = rec.get(2).unwrap_or_default().parse().map_err(|_| "bad N_PX")?;
        let fup: i64 = rec.get(3).unwrap_or_default().parse().map_err(|_| "bad FOLLOW_UP_DAYS")?;
        let first: NaiveDate = rec.get(4).unwrap_or_default().parse().map_err(|_| "bad FIRST_PX")?;
        let last: NaiveDate = rec.get(5).unwrap_or_default().parse().map_err(|_| "bad LAST_PX")?;
        out.insert(pid, (sae, n_px, fup, first, last));
    }
    Ok(out)
}
