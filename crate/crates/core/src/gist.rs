//! Trial generalizability scores and the composite patient-trial score.
//!
//! sGIST for a trait is the fraction of the target population meeting that
//! trait's computable criteria; mGIST is the fraction jointly satisfying
//! all computable criteria of the trial (equivalently, the trial's column
//! mean in the eligibility matrix). The per-patient composite score
//! averages eligibility-weighted mGIST over the trial set.
//!
//! Score denominators are always the full target population: skipped and
//! missing-data verdicts count as not met, so every score stays a
//! population proportion.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cdm::{CohortStore, PatientId, StoreError};
use crate::criteria::{Criterion, TrialId, TrialSpec};
use crate::eligibility::{eval_criterion, eval_trial, MissingDataPolicy, Verdict};

#[derive(Debug, Error)]
pub enum GistError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("criterion `{0}` is not computable")]
    NonComputable(String),
    #[error("empty target cohort")]
    EmptyCohort,
    #[error("dimension mismatch: matrix has {matrix_trials} trials, score vector has {scores}")]
    DimensionMismatch { matrix_trials: usize, scores: usize },
    #[error("cannot write export: {0}")]
    Io(#[from] std::io::Error),
}

/// Per-trait weights reserved for weighted score variants. The uniform
/// default reproduces the plain proportion semantics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TraitWeights(pub BTreeMap<String, f64>);

impl TraitWeights {
    pub fn uniform() -> Self {
        TraitWeights::default()
    }

    pub fn weight(&self, trait_label: &str) -> f64 {
        self.0.get(trait_label).copied().unwrap_or(1.0)
    }
}

/// Per-trial score report: single-trait scores, the multi-trait score, and
/// trait counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GistReport {
    pub trial_id: TrialId,
    /// sGIST per computable trait label.
    pub sgist: BTreeMap<String, f64>,
    pub mgist: f64,
    pub n_traits_total: usize,
    pub n_traits_computable: usize,
    pub target_population_size: usize,
    /// True when the trial has no computable criteria at all.
    pub vacuous: bool,
    /// Weights the report was computed under (uniform unless overridden).
    pub trait_weights: TraitWeights,
}

/// Single-criterion score: the fraction of the target population whose
/// verdict for this criterion is Met.
pub fn sgist(
    store: &CohortStore,
    cohort: &[PatientId],
    criterion: &Criterion,
    index_dates: &BTreeMap<PatientId, NaiveDate>,
    policy: MissingDataPolicy,
) -> Result<f64, GistError> {
    if !criterion.computable() {
        return Err(GistError::NonComputable(criterion.trait_label.clone()));
    }
    if cohort.is_empty() {
        return Err(GistError::EmptyCohort);
    }
    let mut met = 0usize;
    for pid in cohort {
        let idx = index_dates.get(pid).copied();
        let v = eval_criterion(store, pid, criterion, idx, policy)?;
        if v.verdict == Verdict::Met {
            met += 1;
        }
    }
    Ok(met as f64 / cohort.len() as f64)
}

/// Multi-trait score: the fraction of the target population eligible for
/// the trial under the joint conjunction of its computable criteria.
pub fn mgist(
    store: &CohortStore,
    cohort: &[PatientId],
    trial: &TrialSpec,
    index_dates: &BTreeMap<PatientId, NaiveDate>,
    policy: MissingDataPolicy,
) -> Result<f64, GistError> {
    if cohort.is_empty() {
        return Err(GistError::EmptyCohort);
    }
    let mut eligible = 0usize;
    for pid in cohort {
        let idx = index_dates.get(pid).copied();
        if eval_trial(store, pid, trial, idx, policy)?.eligible {
            eligible += 1;
        }
    }
    Ok(eligible as f64 / cohort.len() as f64)
}

/// Builds the full per-trial report. Trait-level sGIST is the fraction of
/// patients meeting every computable criterion carrying that trait label,
/// so `mgist <= min(sgist)` holds by construction.
pub fn gist_report(
    store: &CohortStore,
    cohort: &[PatientId],
    trial: &TrialSpec,
    index_dates: &BTreeMap<PatientId, NaiveDate>,
    policy: MissingDataPolicy,
    weights: &TraitWeights,
) -> Result<GistReport, GistError> {
    if cohort.is_empty() {
        return Err(GistError::EmptyCohort);
    }
    let labels = trial.trait_labels();
    let mut computable_by_trait: BTreeMap<&str, Vec<&Criterion>> = BTreeMap::new();
    for c in &trial.criteria {
        if c.computable() {
            computable_by_trait.entry(c.trait_label.as_str()).or_default().push(c);
        }
    }
    let mut sgist_map: BTreeMap<String, f64> = BTreeMap::new();
    for (label, crits) in &computable_by_trait {
        let mut met = 0usize;
        for pid in cohort {
            let idx = index_dates.get(pid).copied();
            let all_met = crits.iter().try_fold(true, |acc, c| {
                eval_criterion(store, pid, c, idx, policy).map(|v| acc && v.verdict == Verdict::Met)
            })?;
            if all_met {
                met += 1;
            }
        }
        sgist_map.insert(label.to_string(), met as f64 / cohort.len() as f64);
    }
    let mgist_score = mgist(store, cohort, trial, index_dates, policy)?;
    Ok(GistReport {
        trial_id: trial.id.clone(),
        mgist: mgist_score,
        n_traits_total: labels.len(),
        n_traits_computable: computable_by_trait.len(),
        target_population_size: cohort.len(),
        vacuous: computable_by_trait.is_empty(),
        sgist: sgist_map,
        trait_weights: weights.clone(),
    })
}

/// Per-patient composite patient-trial generalizability scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CptgVector {
    pub patients: Vec<PatientId>,
    pub trial_ids: Vec<TrialId>,
    pub values: Vec<f64>,
}

impl CptgVector {
    pub fn k(&self) -> usize {
        self.trial_ids.len()
    }

    pub fn value_for(&self, pid: &PatientId) -> Option<f64> {
        self.patients.iter().position(|p| p == pid).map(|i| self.values[i])
    }

    /// Writes PATID,CPTG rows in patient order.
    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["PATID", "CPTG"])?;
        for (pid, v) in self.patients.iter().zip(&self.values) {
            w.write_record([pid.0.as_str(), &format!("{v}")])?;
        }
        w.flush()
    }

    pub fn read_csv(path: &Path) -> Result<Self, String> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| e.to_string())?;
        let mut patients = Vec::new();
        let mut values = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| e.to_string())?;
            patients.push(PatientId::from(rec.get(0).unwrap_or_default()));
            values.push(rec.get(1).unwrap_or_default().parse::<f64>().map_err(|e| e.to_string())?);
        }
        Ok(CptgVector { patients, trial_ids: Vec::new(), values })
    }
}

/// Composite score per patient: the mean over trials of eligibility times
/// trial mGIST. `scores` must follow the matrix's trial ordering.
pub fn cptg(
    matrix: &crate::eligibility::EligibilityMatrix,
    scores: &[f64],
) -> Result<CptgVector, GistError> {
    let k = matrix.trials.len();
    if scores.len() != k || k == 0 {
        return Err(GistError::DimensionMismatch { matrix_trials: k, scores: scores.len() });
    }
    let mut values = Vec::with_capacity(matrix.patients.len());
    for i in 0..matrix.patients.len() {
        let row = matrix.row(i);
        let sum: f64 = row.iter().zip(scores).map(|(&e, &g)| e as f64 * g).sum();
        values.push(sum / k as f64);
    }
    Ok(CptgVector { patients: matrix.patients.clone(), trial_ids: matrix.trials.clone(), values })
}

/// Writes the per-trial summary table (trial id, trait counts, mGIST).
pub fn write_gist_summary(reports: &[GistReport], path: &Path) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["TRIAL_ID", "TOTAL_TRAITS", "COMPUTABLE_TRAITS", "MGIST"])?;
    for r in reports {
        w.write_record([
            r.trial_id.0.as_str(),
            &r.n_traits_total.to_string(),
            &r.n_traits_computable.to_string(),
            &format!("{}", r.mgist),
        ])?;
    }
    w.flush()
}
