//! Cohort ingest from the five delimited CDM table files. Invalid rows
//! never abort an ingest: they are logged in the manifest and skipped, so
//! data-quality problems stay visible without blocking analysis.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    normalize_code, CohortStore, DiagnosisEvent, DxSystem, LabResult, MedicationEvent, Patient,
    PatientId, PatientRecord, ProcedureEvent, PxSystem, RaceEthnicity, Sex,
};
use crate::units;

pub const DEMOGRAPHIC_FILE: &str = "demographic.csv";
pub const DIAGNOSIS_FILE: &str = "diagnosis.csv";
pub const PROCEDURE_FILE: &str = "procedure.csv";
pub const LAB_FILE: &str = "lab.csv";
pub const MEDICATION_FILE: &str = "medication.csv";

const DEMOGRAPHIC_HEADER: &[&str] = &["PATID", "BIRTH_DATE", "SEX", "RACE_ETH"];
const DIAGNOSIS_HEADER: &[&str] = &["PATID", "CODE_SYSTEM", "CODE", "DATE"];
const PROCEDURE_HEADER: &[&str] = &["PATID", "CODE_SYSTEM", "CODE", "DATE"];
const LAB_HEADER: &[&str] = &["PATID", "LOINC", "VALUE", "UNIT", "DATE"];
const MEDICATION_HEADER: &[&str] = &["PATID", "RXNORM", "DATE"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing table file `{0}`")]
    MissingFile(String),
    #[error("cannot read `{file}`: {source}")]
    Io {
        file: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: header mismatch: expected {expected:?}, found {found:?}")]
    HeaderMismatch {
        file: String,
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("{file}: {source}")]
    Csv {
        file: String,
        #[source]
        source: csv::Error,
    },
}

/// One rejected input row with its location and the reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedRow {
    pub file: String,
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileStat {
    pub file: String,
    pub rows_read: u64,
    pub rows_accepted: u64,
}

/// Record of an ingest: per-file row counts, rejected rows, and lab units
/// seen that are not in the registered unit vocabulary.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestManifest {
    pub files: Vec<FileStat>,
    pub rejects: Vec<RejectedRow>,
    pub unknown_units: BTreeMap<String, u64>,
}

impl IngestManifest {
    /// Writes the reject log as `ingest_rejects.csv` (FILE,LINE,REASON).
    pub fn write_reject_log(&self, path: &Path) -> std::io::Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["FILE", "LINE", "REASON"])?;
        for r in &self.rejects {
            w.write_record([r.file.as_str(), &r.line.to_string(), r.reason.as_str()])?;
        }
        w.flush()
    }
}

struct TableReader {
    file: String,
    rows: Vec<(u64, Vec<String>)>,
}

fn open_table(dir: &Path, file: &str, expected_header: &[&str]) -> Result<TableReader, IngestError> {
    let path = dir.join(file);
    if !path.exists() {
        return Err(IngestError::MissingFile(file.to_string()));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(&path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => IngestError::Io {
                file: file.to_string(),
                source: std::io::Error::other(e.to_string()),
            },
            _ => IngestError::Csv { file: file.to_string(), source: e },
        })?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| IngestError::Csv { file: file.to_string(), source: e })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers != expected_header {
        return Err(IngestError::HeaderMismatch {
            file: file.to_string(),
            expected: expected_header.iter().map(|s| s.to_string()).collect(),
            found: headers,
        });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| IngestError::Csv { file: file.to_string(), source: e })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        rows.push((line, rec.iter().map(|f| f.to_string()).collect()));
    }
    Ok(TableReader { file: file.to_string(), rows })
}

fn parse_date(s: &str) -> Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|_| format!("invalid date `{}`", s.trim()))
}

/// Loads and indexes the five CDM tables from `dir`. Re-ingesting the same
/// directory yields an identical store and manifest.
pub fn ingest_cohort(dir: &Path) -> Result<CohortStore, IngestError> {
    let mut manifest = IngestManifest::default();
    let mut records: BTreeMap<PatientId, PatientRecord> = BTreeMap::new();

    let reject = |manifest: &mut IngestManifest, file: &str, line: u64, reason: String| {
        manifest.rejects.push(RejectedRow { file: file.to_string(), line, reason });
    };

    // demographics first: events must resolve to a known patient
    let demo = open_table(dir, DEMOGRAPHIC_FILE, DEMOGRAPHIC_HEADER)?;
    let mut stat = FileStat { file: demo.file.clone(), ..Default::default() };
    for (line, fields) in &demo.rows {
        stat.rows_read += 1;
        if fields.len() != 4 {
            reject(&mut manifest, &demo.file, *line, format!("expected 4 fields, found {}", fields.len()));
            continue;
        }
        let pid = PatientId(fields[0].trim().to_string());
        if pid.0.is_empty() {
            reject(&mut manifest, &demo.file, *line, "empty PATID".into());
            continue;
        }
        if records.contains_key(&pid) {
            reject(&mut manifest, &demo.file, *line, format!("duplicate PATID `{pid}`"));
            continue;
        }
        let birth = match parse_date(&fields[1]) {
            Ok(d) => d,
            Err(e) => {
                reject(&mut manifest, &demo.file, *line, e);
                continue;
            }
        };
        let Some(sex) = Sex::parse(&fields[2]) else {
            reject(&mut manifest, &demo.file, *line, format!("unknown SEX `{}`", fields[2]));
            continue;
        };
        let Some(race) = RaceEthnicity::parse(&fields[3]) else {
            reject(&mut manifest, &demo.file, *line, format!("unknown RACE_ETH `{}`", fields[3]));
            continue;
        };
        stat.rows_accepted += 1;
        records.insert(
            pid.clone(),
            PatientRecord::new(Patient { id: pid, birth_date: birth, sex, race_ethnicity: race }),
        );
    }
    manifest.files.push(stat);

    // shared row-prefix checks for event tables
    macro_rules! resolve_patient {
        ($manifest:expr, $file:expr, $line:expr, $pid_field:expr, $date:expr) => {{
            let pid = PatientId($pid_field.trim().to_string());
            match records.get(&pid) {
                None => {
                    reject($manifest, $file, $line, format!("unknown PATID `{pid}`"));
                    None
                }
                Some(rec) if $date < rec.patient.birth_date => {
                    reject(
                        $manifest,
                        $file,
                        $line,
                        format!("event date {} precedes birth date {}", $date, rec.patient.birth_date),
                    );
                    None
                }
                Some(_) => Some(pid),
            }
        }};
    }

    let dx = open_table(dir, DIAGNOSIS_FILE, DIAGNOSIS_HEADER)?;
    let mut stat = FileStat { file: dx.file.clone(), ..Default::default() };
    for (line, fields) in &dx.rows {
        stat.rows_read += 1;
        if fields.len() != 4 {
            reject(&mut manifest, &dx.file, *line, format!("expected 4 fields, found {}", fields.len()));
            continue;
        }
        let Some(system) = DxSystem::parse(&fields[1]) else {
            reject(&mut manifest, &dx.file, *line, format!("unknown CODE_SYSTEM `{}`", fields[1]));
            continue;
        };
        let code = match normalize_code(&fields[2]) {
            Ok(c) => c,
            Err(e) => {
                reject(&mut manifest, &dx.file, *line, e.to_string());
                continue;
            }
        };
        let date = match parse_date(&fields[3]) {
            Ok(d) => d,
            Err(e) => {
                reject(&mut manifest, &dx.file, *line, e);
                continue;
            }
        };
        let Some(pid) = resolve_patient!(&mut manifest, &dx.file, *line, fields[0], date) else {
            continue;
        };
        stat.rows_accepted += 1;
        records
            .get_mut(&pid)
            .unwrap()
            .diagnoses
            .push(DiagnosisEvent { date, code_system: system, code });
    }
    manifest.files.push(stat);

    let px = open_table(dir, PROCEDURE_FILE, PROCEDURE_HEADER)?;
    let mut stat = FileStat { file: px.file.clone(), ..Default::default() };
    for (line, fields) in &px.rows {
        stat.rows_read += 1;
        if fields.len() != 4 {
            reject(&mut manifest, &px.file, *line, format!("expected 4 fields, found {}", fields.len()));
            continue;
        }
        let Some(system) = PxSystem::parse(&fields[1]) else {
            reject(&mut manifest, &px.file, *line, format!("unknown CODE_SYSTEM `{}`", fields[1]));
            continue;
        };
        let code = match normalize_code(&fields[2]) {
            Ok(c) => c,
            Err(e) => {
                reject(&mut manifest, &px.file, *line, e.to_string());
                continue;
            }
        };
        let date = match parse_date(&fields[3]) {
            Ok(d) => d,
            Err(e) => {
                reject(&mut manifest, &px.file, *line, e);
                continue;
            }
        };
        let Some(pid) = resolve_patient!(&mut manifest, &px.file, *line, fields[0], date) else {
            continue;
        };
        stat.rows_accepted += 1;
        records
            .get_mut(&pid)
            .unwrap()
            .procedures
            .push(ProcedureEvent { date, code_system: system, code });
    }
    manifest.files.push(stat);

    let lab = open_table(dir, LAB_FILE, LAB_HEADER)?;
    let mut stat = FileStat { file: lab.file.clone(), ..Default::default() };
    for (line, fields) in &lab.rows {
        stat.rows_read += 1;
        if fields.len() != 5 {
            reject(&mut manifest, &lab.file, *line, format!("expected 5 fields, found {}", fields.len()));
            continue;
        }
        let loinc = fields[1].trim().to_string();
        if loinc.is_empty() {
            reject(&mut manifest, &lab.file, *line, "empty LOINC".into());
            continue;
        }
        let value: f64 = match fields[2].trim().parse() {
            Ok(v) => v,
            Err(_) => {
                reject(&mut manifest, &lab.file, *line, format!("invalid VALUE `{}`", fields[2].trim()));
                continue;
            }
        };
        if !value.is_finite() {
            reject(&mut manifest, &lab.file, *line, format!("non-finite VALUE `{}`", fields[2].trim()));
            continue;
        }
        let unit = fields[3].trim().to_string();
        let date = match parse_date(&fields[4]) {
            Ok(d) => d,
            Err(e) => {
                reject(&mut manifest, &lab.file, *line, e);
                continue;
            }
        };
        let Some(pid) = resolve_patient!(&mut manifest, &lab.file, *line, fields[0], date) else {
            continue;
        };
        if !units::is_registered(&unit) {
            *manifest.unknown_units.entry(unit.clone()).or_insert(0) += 1;
        }
        stat.rows_accepted += 1;
        records.get_mut(&pid).unwrap().labs.push(LabResult { date, loinc, value, unit });
    }
    manifest.files.push(stat);

    let med = open_table(dir, MEDICATION_FILE, MEDICATION_HEADER)?;
    let mut stat = FileStat { file: med.file.clone(), ..Default::default() };
    for (line, fields) in &med.rows {
        stat.rows_read += 1;
        if fields.len() != 3 {
            reject(&mut manifest, &med.file, *line, format!("expected 3 fields, found {}", fields.len()));
            continue;
        }
        let rxnorm = match normalize_code(&fields[1]) {
            Ok(c) => c,
            Err(e) => {
                reject(&mut manifest, &med.file, *line, e.to_string());
                continue;
            }
        };
        let date = match parse_date(&fields[2]) {
            Ok(d) => d,
            Err(e) => {
                reject(&mut manifest, &med.file, *line, e);
                continue;
            }
        };
        let Some(pid) = resolve_patient!(&mut manifest, &med.file, *line, fields[0], date) else {
            continue;
        };
        stat.rows_accepted += 1;
        records.get_mut(&pid).unwrap().medications.push(MedicationEvent { date, rxnorm });
    }
    manifest.files.push(stat);

    // sort with full event content as tiebreaker so permuted inputs index
    // identically
    for rec in records.values_mut() {
        rec.diagnoses.sort();
        rec.procedures.sort();
        rec.medications.sort();
        rec.labs.sort_by(|a, b| {
            (a.date, &a.loinc, &a.unit)
                .cmp(&(b.date, &b.loinc, &b.unit))
                .then(a.value.total_cmp(&b.value))
        });
    }

    Ok(CohortStore::from_parts(records, manifest))
}
