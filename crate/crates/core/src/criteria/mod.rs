//! Computable eligibility-criteria language: domain types, a line-oriented
//! parser with positional diagnostics, a canonical serializer, and corpus
//! statistics.
//!
//! Criteria arrive pre-decomposed: one predicate per criterion line, with
//! an explicit curator-assigned trait label. A leading `NOT` flips the
//! predicate's truth value at evaluation time without changing predicate
//! structure.
//!
//! For `DEMOGRAPHIC sex` comparisons the value is numerically coded
//! (0 = male, 1 = female), matching the grammar's numeric comparison form.

mod corpus;
mod parse;

pub use corpus::{
    corpus_computability, corpus_negation_stats, corpus_pattern_frequency, ComputabilityStats,
    NegationStats, PatternFrequencyRow,
};
pub use parse::{parse_trial_file, ParseDiagnostic};

use serde::{Deserialize, Serialize};

use crate::cdm::CodePattern;

/// Registry-style trial identifier, unique within a corpus.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TrialId(pub String);

impl std::fmt::Display for TrialId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for TrialId {
    fn from(s: &str) -> Self {
        TrialId(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    P1,
    P1_2,
    P2,
    P3,
    Unknown,
}

impl Phase {
    pub fn token(&self) -> &'static str {
        match self {
            Phase::P1 => "1",
            Phase::P1_2 => "1/2",
            Phase::P2 => "2",
            Phase::P3 => "3",
            Phase::Unknown => "UNKNOWN",
        }
    }

    pub fn parse(tok: &str) -> Option<Phase> {
        match tok {
            "1" => Some(Phase::P1),
            "1/2" => Some(Phase::P1_2),
            "2" => Some(Phase::P2),
            "3" => Some(Phase::P3),
            "UNKNOWN" => Some(Phase::Unknown),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarity {
    Include,
    Exclude,
}

impl Polarity {
    pub fn token(&self) -> &'static str {
        match self {
            Polarity::Include => "INCLUDE",
            Polarity::Exclude => "EXCLUDE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
}

impl Comparator {
    pub fn token(&self) -> &'static str {
        match self {
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Gt => ">",
            Comparator::Ge => ">=",
            Comparator::Eq => "=",
        }
    }

    pub fn parse(tok: &str) -> Option<Comparator> {
        match tok {
            "<" => Some(Comparator::Lt),
            "<=" => Some(Comparator::Le),
            ">" => Some(Comparator::Gt),
            ">=" => Some(Comparator::Ge),
            "=" => Some(Comparator::Eq),
            _ => None,
        }
    }

    pub fn holds(&self, lhs: f64, rhs: f64) -> bool {
        match self {
            Comparator::Lt => lhs < rhs,
            Comparator::Le => lhs <= rhs,
            Comparator::Gt => lhs > rhs,
            Comparator::Ge => lhs >= rhs,
            Comparator::Eq => lhs == rhs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DemographicField {
    AgeAtIndex,
    Sex,
}

impl DemographicField {
    pub fn token(&self) -> &'static str {
        match self {
            DemographicField::AgeAtIndex => "age_at_index",
            DemographicField::Sex => "sex",
        }
    }
}

/// Domain a code-presence predicate queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CodeDomain {
    Diagnosis,
    Procedure,
    Medication,
}

impl CodeDomain {
    pub fn token(&self) -> &'static str {
        match self {
            CodeDomain::Diagnosis => "DIAGNOSIS",
            CodeDomain::Procedure => "PROCEDURE",
            CodeDomain::Medication => "MEDICATION",
        }
    }
}

/// Coding system named in a code-presence predicate. Which systems are
/// admissible depends on the domain (diagnoses: ICD-9/10-CM; procedures:
/// HCPCS or RxNorm; medications: RxNorm).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CriterionCodeSystem {
    Icd9Cm,
    Icd10Cm,
    Hcpcs,
    Rxnorm,
}

impl CriterionCodeSystem {
    pub fn token(&self) -> &'static str {
        match self {
            CriterionCodeSystem::Icd9Cm => "ICD9CM",
            CriterionCodeSystem::Icd10Cm => "ICD10CM",
            CriterionCodeSystem::Hcpcs => "HCPCS",
            CriterionCodeSystem::Rxnorm => "RXNORM",
        }
    }

    pub fn parse(tok: &str) -> Option<Self> {
        match tok {
            "ICD9CM" => Some(Self::Icd9Cm),
            "ICD10CM" => Some(Self::Icd10Cm),
            "HCPCS" => Some(Self::Hcpcs),
            "RXNORM" => Some(Self::Rxnorm),
            _ => None,
        }
    }

    pub fn admissible_for(&self, domain: CodeDomain) -> bool {
        matches!(
            (domain, self),
            (CodeDomain::Diagnosis, Self::Icd9Cm)
                | (CodeDomain::Diagnosis, Self::Icd10Cm)
                | (CodeDomain::Procedure, Self::Hcpcs)
                | (CodeDomain::Procedure, Self::Rxnorm)
                | (CodeDomain::Medication, Self::Rxnorm)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Presence {
    Present,
    Absent,
}

impl Presence {
    pub fn token(&self) -> &'static str {
        match self {
            Presence::Present => "PRESENT",
            Presence::Absent => "ABSENT",
        }
    }
}

/// Numeric test applied to lab observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LabTest {
    Cmp { cmp: Comparator, value: f64 },
    InRange { lo: f64, hi: f64 },
}

impl LabTest {
    pub fn holds(&self, observed: f64) -> bool {
        match self {
            LabTest::Cmp { cmp, value } => cmp.holds(observed, *value),
            LabTest::InRange { lo, hi } => observed >= *lo && observed <= *hi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Predicate {
    Demographic {
        field: DemographicField,
        cmp: Comparator,
        value: f64,
        unit: Option<String>,
    },
    LabCompare {
        loinc: Vec<String>,
        test: LabTest,
        unit: String,
    },
    CodePresence {
        domain: CodeDomain,
        system: CriterionCodeSystem,
        patterns: Vec<CodePattern>,
        presence: Presence,
    },
    NonComputable {
        reason: String,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Criterion {
    pub polarity: Polarity,
    pub trait_label: String,
    pub negated: bool,
    pub predicate: Predicate,
    /// Original criterion line as written in the source file.
    pub source_text: String,
}

impl Criterion {
    /// A criterion is computable iff its predicate is not `NonComputable`.
    pub fn computable(&self) -> bool {
        !matches!(self.predicate, Predicate::NonComputable { .. })
    }

    /// Structural equality, ignoring the retained source text.
    pub fn same_structure(&self, other: &Criterion) -> bool {
        self.polarity == other.polarity
            && self.trait_label == other.trait_label
            && self.negated == other.negated
            && self.predicate == other.predicate
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialSpec {
    pub id: TrialId,
    pub phase: Phase,
    pub criteria: Vec<Criterion>,
}

impl TrialSpec {
    pub fn same_structure(&self, other: &TrialSpec) -> bool {
        self.id == other.id
            && self.phase == other.phase
            && self.criteria.len() == other.criteria.len()
            && self.criteria.iter().zip(&other.criteria).all(|(a, b)| a.same_structure(b))
    }

    /// Distinct trait labels over all criteria.
    pub fn trait_labels(&self) -> Vec<&str> {
        let mut labels: Vec<&str> = self.criteria.iter().map(|c| c.trait_label.as_str()).collect();
        labels.sort_unstable();
        labels.dedup();
        labels
    }
}

fn render_number(v: f64) -> String {
    format!("{v}")
}

fn render_predicate(p: &Predicate) -> String {
    match p {
        Predicate::Demographic { field, cmp, value, unit } => {
            let mut s = format!("DEMOGRAPHIC {} {} {}", field.token(), cmp.token(), render_number(*value));
            if let Some(u) = unit {
                s.push(' ');
                s.push_str(u);
            }
            s
        }
        Predicate::LabCompare { loinc, test, unit } => {
            let codes = loinc.join(",");
            match test {
                LabTest::Cmp { cmp, value } => {
                    format!("LAB loinc={codes} {} {} {unit}", cmp.token(), render_number(*value))
                }
                LabTest::InRange { lo, hi } => {
                    format!("LAB loinc={codes} IN [{},{}] {unit}", render_number(*lo), render_number(*hi))
                }
            }
        }
        Predicate::CodePresence { domain, system, patterns, presence } => {
            let pats: Vec<String> = patterns.iter().map(|p| p.render()).collect();
            format!(
                "{} system={} codes={} {}",
                domain.token(),
                system.token(),
                pats.join(","),
                presence.token()
            )
        }
        Predicate::NonComputable { reason } => format!("NONCOMPUTABLE \"{reason}\""),
    }
}

fn render_criterion(c: &Criterion) -> String {
    let not = if c.negated { "NOT " } else { "" };
    format!("{} {}trait={} {}", c.polarity.token(), not, c.trait_label, render_predicate(&c.predicate))
}

/// Serializes a trial to canonical text. `parse(serialize(t))` is
/// structurally equal to `t`.
pub fn serialize_trial(trial: &TrialSpec) -> String {
    let mut out = format!("TRIAL {} PHASE {}\n", trial.id, trial.phase.token());
    for c in &trial.criteria {
        out.push_str(&render_criterion(c));
        out.push('\n');
    }
    out
}
