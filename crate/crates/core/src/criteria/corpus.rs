//! Corpus-level criterion statistics: pattern frequency ranking, negation
//! counts, and computability. A criterion "pattern" is the pair
//! (polarity, trait label).

use serde::Serialize;

use super::{Polarity, TrialSpec};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatternFrequencyRow {
    pub polarity: Polarity,
    pub trait_label: String,
    /// Number of distinct trials containing the pattern.
    pub study_count: usize,
    /// Percentage of the corpus (0..100).
    pub study_pct: f64,
}

/// Per-pattern study coverage, ranked by descending study count with ties
/// broken alphabetically by trait (then inclusion before exclusion).
pub fn corpus_pattern_frequency(corpus: &[TrialSpec]) -> Vec<PatternFrequencyRow> {
    let n = corpus.len();
    let mut counts: BTreeMap<(Polarity, &str), BTreeSet<&str>> = BTreeMap::new();
    for trial in corpus {
        for c in &trial.criteria {
            counts
                .entry((c.polarity, c.trait_label.as_str()))
                .or_default()
                .insert(trial.id.0.as_str());
        }
    }
    let mut rows: Vec<PatternFrequencyRow> = counts
        .into_iter()
        .map(|((polarity, trait_label), trials)| PatternFrequencyRow {
            polarity,
            trait_label: trait_label.to_string(),
            study_count: trials.len(),
            study_pct: if n == 0 { 0.0 } else { 100.0 * trials.len() as f64 / n as f64 },
        })
        .collect();
    rows.sort_by(|a, b| {
        b.study_count
            .cmp(&a.study_count)
            .then_with(|| a.trait_label.cmp(&b.trait_label))
            .then_with(|| a.polarity.cmp(&b.polarity))
    });
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NegationStats {
    pub inclusion_total: usize,
    pub inclusion_negated: usize,
    pub inclusion_pct: f64,
    pub exclusion_total: usize,
    pub exclusion_negated: usize,
    pub exclusion_pct: f64,
}

/// Counts of negated criteria by polarity, with percentages of that
/// polarity's total.
pub fn corpus_negation_stats(corpus: &[TrialSpec]) -> NegationStats {
    let mut inc_total = 0;
    let mut inc_neg = 0;
    let mut exc_total = 0;
    let mut exc_neg = 0;
    for trial in corpus {
        for c in &trial.criteria {
            match c.polarity {
                Polarity::Include => {
                    inc_total += 1;
                    if c.negated {
                        inc_neg += 1;
                    }
                }
                Polarity::Exclude => {
                    exc_total += 1;
                    if c.negated {
                        exc_neg += 1;
                    }
                }
            }
        }
    }
    let pct = |num: usize, den: usize| if den == 0 { 0.0 } else { 100.0 * num as f64 / den as f64 };
    NegationStats {
        inclusion_total: inc_total,
        inclusion_negated: inc_neg,
        inclusion_pct: pct(inc_neg, inc_total),
        exclusion_total: exc_total,
        exclusion_negated: exc_neg,
        exclusion_pct: pct(exc_neg, exc_total),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComputabilityStats {
    pub unique_patterns: usize,
    /// Patterns whose every criterion instance is non-computable.
    pub noncomputable_patterns: usize,
    pub noncomputable_pct: f64,
}

/// Computability of unique (polarity, trait) patterns. A pattern counts as
/// non-computable only when no trial holds a computable instance of it.
pub fn corpus_computability(corpus: &[TrialSpec]) -> ComputabilityStats {
    let mut any_computable: BTreeMap<(Polarity, &str), bool> = BTreeMap::new();
    for trial in corpus {
        for c in &trial.criteria {
            let e = any_computable.entry((c.polarity, c.trait_label.as_str())).or_insert(false);
            *e |= c.computable();
        }
    }
    let unique = any_computable.len();
    let noncomp = any_computable.values().filter(|v| !**v).count();
    ComputabilityStats {
        unique_patterns: unique,
        noncomputable_patterns: noncomp,
        noncomputable_pct: if unique == 0 { 0.0 } else { 100.0 * noncomp as f64 / unique as f64 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criteria::{parse_trial_file, Criterion, Predicate};

    fn toy_corpus() -> Vec<TrialSpec> {
        let t1 = "TRIAL A PHASE 3\n\
                  INCLUDE trait=AST LAB loinc=1920-8 <= 100 U/L\n\
                  INCLUDE trait=age DEMOGRAPHIC age_at_index >= 18\n\
                  INCLUDE NOT trait=prior-tx DIAGNOSIS system=ICD10CM codes=Z92.* PRESENT\n\
                  INCLUDE trait=consent NONCOMPUTABLE \"informed consent\"\n";
        let t2 = "TRIAL B PHASE 3\n\
                  INCLUDE trait=AST LAB loinc=1920-8 <= 120 U/L\n\
                  EXCLUDE trait=pregnant NONCOMPUTABLE \"pregnancy\"\n";
        let t3 = "TRIAL C PHASE 2\n\
                  INCLUDE trait=age DEMOGRAPHIC age_at_index >= 21\n\
                  EXCLUDE trait=pregnant NONCOMPUTABLE \"pregnancy\"\n";
        vec![
            parse_trial_file(t1).unwrap(),
            parse_trial_file(t2).unwrap(),
            parse_trial_file(t3).unwrap(),
        ]
    }

    #[test]
    fn frequency_counts_distinct_trials_and_ranks() {
        let corpus = toy_corpus();
        let rows = corpus_pattern_frequency(&corpus);
        // AST and age both appear in 2 of 3 trials; AST ranks first alphabetically
        assert_eq!(rows[0].trait_label, "AST");
        assert_eq!(rows[0].study_count, 2);
        assert!((rows[0].study_pct - 66.666_666).abs() < 1e-3);
        assert_eq!(rows[1].trait_label, "age");
        assert!(rows.iter().all(|r| r.study_count <= corpus.len()));
    }

    #[test]
    fn duplicate_trait_in_one_trial_counts_once() {
        let t = parse_trial_file(
            "TRIAL D PHASE 2\n\
             INCLUDE trait=AST LAB loinc=1920-8 <= 100 U/L\n\
             INCLUDE trait=AST LAB loinc=30239-8 <= 100 U/L\n",
        )
        .unwrap();
        let rows = corpus_pattern_frequency(&[t]);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].study_count, 1);
    }

    #[test]
    fn negation_stats_count_by_polarity() {
        let corpus = toy_corpus();
        let stats = corpus_negation_stats(&corpus);
        assert_eq!(stats.inclusion_total, 6);
        assert_eq!(stats.inclusion_negated, 1);
        assert!((stats.inclusion_pct - 100.0 / 6.0).abs() < 1e-9);
        assert_eq!(stats.exclusion_total, 2);
        assert_eq!(stats.exclusion_negated, 0);
        assert_eq!(stats.exclusion_pct, 0.0);
    }

    #[test]
    fn no_negations_yields_zero_percent() {
        let t = parse_trial_file("TRIAL E PHASE 1\nINCLUDE trait=age DEMOGRAPHIC age_at_index >= 18\n").unwrap();
        let stats = corpus_negation_stats(&[t]);
        assert_eq!((stats.inclusion_negated, stats.exclusion_negated), (0, 0));
        assert_eq!((stats.inclusion_pct, stats.exclusion_pct), (0.0, 0.0));
    }

    #[test]
    fn computability_requires_no_computable_instance() {
        let corpus = toy_corpus();
        let stats = corpus_computability(&corpus);
        // patterns: (Inc,AST) (Inc,age) (Inc,prior-tx) (Inc,consent) (Exc,pregnant)
        assert_eq!(stats.unique_patterns, 5);
        assert_eq!(stats.noncomputable_patterns, 2);
        assert!((stats.noncomputable_pct - 40.0).abs() < 1e-9);
    }

    #[test]
    fn computable_flag_matches_predicate_shape() {
        let corpus = toy_corpus();
        let all: Vec<&Criterion> = corpus.iter().flat_map(|t| &t.criteria).collect();
        for c in all {
            assert_eq!(c.computable(), !matches!(c.predicate, Predicate::NonComputable { .. }));
        }
    }
}
