use std::collections::BTreeMap;

use super::*;
use crate::cdm::ingest::tests::write_fixture;
use crate::cdm::{ingest_cohort, CohortStore};
use crate::criteria::{parse_trial_file, Polarity};
use tempfile::TempDir;

fn d(s: &str) -> NaiveDate {
    s.parse().unwrap()
}

/// One patient with platelet observations 1400 and 1600 /mm3, a CRC
/// diagnosis, and a prior-radiation dx; a second patient with no labs.
fn lab_fixture() -> (TempDir, CohortStore) {
    let tmp = TempDir::new().unwrap();
    write_fixture(
        tmp.path(),
        "PATID,BIRTH_DATE,SEX,RACE_ETH\n\
         P1,1960-05-05,F,NHW\n\
         P2,1950-02-02,M,NHB\n",
        "PATID,CODE_SYSTEM,CODE,DATE\n\
         P1,ICD10CM,C18.9,2014-01-10\n\
         P1,ICD10CM,Z92.3,2013-05-01\n",
        "PATID,CODE_SYSTEM,CODE,DATE\n\
         P1,HCPCS,J9035,2014-02-01\n",
        "PATID,LOINC,VALUE,UNIT,DATE\n\
         P1,26515-7,1400,/mm3,2014-01-02\n\
         P1,26515-7,1600,/mm3,2014-01-20\n\
         P2,718-7,11.5,g/dL,2013-03-03\n",
        "PATID,RXNORM,DATE\n",
    );
    let store = ingest_cohort(tmp.path()).unwrap();
    (tmp, store)
}

fn platelet_criterion() -> Criterion {
    parse_trial_file(
        "TRIAL T PHASE 3\nINCLUDE trait=platelets LAB loinc=26515-7,777-3,778-1 >= 1500 /mm3\n",
    )
    .unwrap()
    .criteria
    .remove(0)
}

#[test]
fn any_observation_satisfies_lab_criterion() {
    let (_tmp, store) = lab_fixture();
    let cv = eval_criterion(
        &store,
        &PatientId::from("P1"),
        &platelet_criterion(),
        None,
        MissingDataPolicy::MissingMeansUnmet,
    )
    .unwrap();
    assert_eq!(cv.verdict, Verdict::Met);
}

#[test]
fn missing_lab_is_notmet_under_default_policy() {
    let (_tmp, store) = lab_fixture();
    let cv = eval_criterion(
        &store,
        &PatientId::from("P2"),
        &platelet_criterion(),
        None,
        MissingDataPolicy::MissingMeansUnmet,
    )
    .unwrap();
    assert_eq!(cv.verdict, Verdict::NotMet);
    assert!(cv.reason.unwrap().contains("no observation"));
}

#[test]
fn missing_lab_is_skipped_under_alternate_policy() {
    let (_tmp, store) = lab_fixture();
    let cv = eval_criterion(
        &store,
        &PatientId::from("P2"),
        &platelet_criterion(),
        None,
        MissingDataPolicy::MissingMeansSkipped,
    )
    .unwrap();
    assert_eq!(cv.verdict, Verdict::Skipped);
}

#[test]
fn noncomputable_is_always_skipped() {
    let (_tmp, store) = lab_fixture();
    let c = parse_trial_file(
        "TRIAL T PHASE 3\nINCLUDE trait=contraception NONCOMPUTABLE \"Fertile patients must use effective contraception\"\n",
    )
    .unwrap()
    .criteria
    .remove(0);
    let cv = eval_criterion(&store, &PatientId::from("P1"), &c, None, MissingDataPolicy::MissingMeansUnmet).unwrap();
    assert_eq!(cv.verdict, Verdict::Skipped);
    assert!(cv.reason.unwrap().contains("non-computable"));
}

#[test]
fn unit_conversion_failure_skips_with_reason() {
    let tmp = TempDir::new().unwrap();
    write_fixture(
        tmp.path(),
        "PATID,BIRTH_DATE,SEX,RACE_ETH\nP1,1960-05-05,F,NHW\n",
        "PATID,CODE_SYSTEM,CODE,DATE\n",
        "PATID,CODE_SYSTEM,CODE,DATE\n",
        "PATID,LOINC,VALUE,UNIT,DATE\nP1,26515-7,9,furlongs,2014-01-02\n",
        "PATID,RXNORM,DATE\n",
    );
    let store = ingest_cohort(tmp.path()).unwrap();
    let cv = eval_criterion(
        &store,
        &PatientId::from("P1"),
        &platelet_criterion(),
        None,
        MissingDataPolicy::MissingMeansUnmet,
    )
    .unwrap();
    assert_eq!(cv.verdict, Verdict::Skipped);
    assert!(cv.reason.unwrap().contains("unit conversion failed"));
}

#[test]
fn code_presence_and_absence() {
    let (_tmp, store) = lab_fixture();
    let trial = parse_trial_file(
        "TRIAL T PHASE 3\n\
         INCLUDE trait=crc DIAGNOSIS system=ICD10CM codes=C18.*,C19.*,C20.*,C26.0 PRESENT\n\
         EXCLUDE trait=prior-radiation DIAGNOSIS system=ICD10CM codes=Z92.3 PRESENT\n\
         INCLUDE trait=no-metastasis DIAGNOSIS system=ICD10CM codes=C78.* ABSENT\n",
    )
    .unwrap();
    let p1 = PatientId::from("P1");
    let policy = MissingDataPolicy::MissingMeansUnmet;
    let v0 = eval_criterion(&store, &p1, &trial.criteria[0], None, policy).unwrap();
    let v1 = eval_criterion(&store, &p1, &trial.criteria[1], None, policy).unwrap();
    let v2 = eval_criterion(&store, &p1, &trial.criteria[2], None, policy).unwrap();
    assert_eq!(v0.verdict, Verdict::Met);
    assert_eq!(v1.verdict, Verdict::Met); // exclusion fires
    assert_eq!(v2.verdict, Verdict::Met); // absent metastasis
}

#[test]
fn age_uses_index_date() {
    let (_tmp, store) = lab_fixture();
    let c = parse_trial_file("TRIAL T PHASE 3\nINCLUDE trait=age DEMOGRAPHIC age_at_index >= 55\n")
        .unwrap()
        .criteria
        .remove(0);
    let p1 = PatientId::from("P1"); // born 1960-05-05
    let policy = MissingDataPolicy::MissingMeansUnmet;
    let young = eval_criterion(&store, &p1, &c, Some(d("2014-02-01")), policy).unwrap();
    assert_eq!(young.verdict, Verdict::NotMet); // age 53
    let at_threshold = eval_criterion(&store, &p1, &c, Some(d("2016-02-01")), policy).unwrap();
    assert_eq!(at_threshold.verdict, Verdict::Met); // age 55 (birthday not yet reached)
    let missing_index = eval_criterion(&store, &p1, &c, None, policy).unwrap();
    assert_eq!(missing_index.verdict, Verdict::NotMet);
    assert!(missing_index.reason.unwrap().contains("index date"));
}

#[test]
fn not_flag_inverts_met_and_notmet() {
    let (_tmp, store) = lab_fixture();
    let mut c = platelet_criterion();
    let p1 = PatientId::from("P1");
    let policy = MissingDataPolicy::MissingMeansUnmet;
    let plain = eval_criterion(&store, &p1, &c, None, policy).unwrap();
    assert_eq!(plain.verdict, Verdict::Met);
    c.negated = true;
    let negated = eval_criterion(&store, &p1, &c, None, policy).unwrap();
    assert_eq!(negated.verdict, Verdict::NotMet);
    c.negated = false;
    let doubled = eval_criterion(&store, &p1, &c, None, policy).unwrap();
    assert_eq!(doubled.verdict, plain.verdict);
}

#[test]
fn trial_eligibility_is_conjunction() {
    let (_tmp, store) = lab_fixture();
    let policy = MissingDataPolicy::MissingMeansUnmet;
    let ok = parse_trial_file(
        "TRIAL T PHASE 3\n\
         INCLUDE trait=platelets LAB loinc=26515-7 >= 1500 /mm3\n\
         EXCLUDE trait=metastasis DIAGNOSIS system=ICD10CM codes=C78.* PRESENT\n",
    )
    .unwrap();
    let res = eval_trial(&store, &PatientId::from("P1"), &ok, None, policy).unwrap();
    assert!(res.eligible);
    assert!(!res.vacuous);

    let excluded = parse_trial_file(
        "TRIAL T PHASE 3\n\
         INCLUDE trait=platelets LAB loinc=26515-7 >= 1500 /mm3\n\
         EXCLUDE trait=prior-radiation DIAGNOSIS system=ICD10CM codes=Z92.3 PRESENT\n",
    )
    .unwrap();
    let res = eval_trial(&store, &PatientId::from("P1"), &excluded, None, policy).unwrap();
    assert!(!res.eligible);
}

#[test]
fn all_skipped_is_vacuously_eligible_with_flag() {
    let (_tmp, store) = lab_fixture();
    let trial = parse_trial_file(
        "TRIAL T PHASE 3\n\
         INCLUDE trait=consent NONCOMPUTABLE \"informed consent\"\n\
         EXCLUDE trait=judgement NONCOMPUTABLE \"investigator judgement\"\n",
    )
    .unwrap();
    let res =
        eval_trial(&store, &PatientId::from("P1"), &trial, None, MissingDataPolicy::MissingMeansUnmet).unwrap();
    assert!(res.eligible);
    assert!(res.vacuous);
}

#[test]
fn matrix_matches_per_cell_recomputation() {
    let (_tmp, store) = lab_fixture();
    let trials = vec![
        parse_trial_file("TRIAL A PHASE 3\nINCLUDE trait=platelets LAB loinc=26515-7 >= 1500 /mm3\n").unwrap(),
        parse_trial_file("TRIAL B PHASE 3\nEXCLUDE trait=prior-radiation DIAGNOSIS system=ICD10CM codes=Z92.3 PRESENT\n").unwrap(),
    ];
    let patients = vec![PatientId::from("P1"), PatientId::from("P2")];
    let index_dates = BTreeMap::new();
    let policy = MissingDataPolicy::MissingMeansUnmet;
    let m = eligibility_matrix(&store, &patients, &trials, &index_dates, policy).unwrap();
    for (i, pid) in patients.iter().enumerate() {
        for (j, trial) in trials.iter().enumerate() {
            let res = eval_trial(&store, pid, trial, None, policy).unwrap();
            assert_eq!(m.entry(i, j), res.eligible as u8, "cell ({i},{j})");
        }
    }
}

#[test]
fn duplicate_patient_in_matrix_input_errors() {
    let (_tmp, store) = lab_fixture();
    let trials =
        vec![parse_trial_file("TRIAL A PHASE 3\nINCLUDE trait=platelets LAB loinc=26515-7 >= 1500 /mm3\n").unwrap()];
    let patients = vec![PatientId::from("P1"), PatientId::from("P1")];
    let err = eligibility_matrix(&store, &patients, &trials, &BTreeMap::new(), MissingDataPolicy::MissingMeansUnmet)
        .unwrap_err();
    assert!(matches!(err, EligibilityError::DuplicatePatient(_)));
}

#[test]
fn matrix_csv_round_trips() {
    let (_tmp, store) = lab_fixture();
    let trials =
        vec![parse_trial_file("TRIAL A PHASE 3\nINCLUDE trait=platelets LAB loinc=26515-7 >= 1500 /mm3\n").unwrap()];
    let patients = vec![PatientId::from("P1"), PatientId::from("P2")];
    let m = eligibility_matrix(&store, &patients, &trials, &BTreeMap::new(), MissingDataPolicy::MissingMeansUnmet)
        .unwrap();
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("matrix.csv");
    m.write_csv(&path).unwrap();
    let back = EligibilityMatrix::read_csv(&path).unwrap();
    assert_eq!(m, back);
}

#[test]
fn adding_inclusion_never_gains_eligibility() {
    // monotonicity on the lab fixture: trial with extra criterion is a subset
    let (_tmp, store) = lab_fixture();
    let base = parse_trial_file("TRIAL A PHASE 3\nINCLUDE trait=platelets LAB loinc=26515-7 >= 1500 /mm3\n").unwrap();
    let extended = parse_trial_file(
        "TRIAL A PHASE 3\n\
         INCLUDE trait=platelets LAB loinc=26515-7 >= 1500 /mm3\n\
         INCLUDE trait=hb LAB loinc=718-7 >= 10 g/dL\n",
    )
    .unwrap();
    let policy = MissingDataPolicy::MissingMeansUnmet;
    for pid in [PatientId::from("P1"), PatientId::from("P2")] {
        let e_base = eval_trial(&store, &pid, &base, None, policy).unwrap().eligible;
        let e_ext = eval_trial(&store, &pid, &extended, None, policy).unwrap().eligible;
        assert!(e_base || !e_ext, "extension flipped 0 to 1 for {pid}");
    }
}

#[test]
fn verdicts_unaffected_by_event_order() {
    // shuffled input files produce the same verdicts (store sorts events)
    let tmp = TempDir::new().unwrap();
    write_fixture(
        tmp.path(),
        "PATID,BIRTH_DATE,SEX,RACE_ETH\nP1,1960-05-05,F,NHW\n",
        "PATID,CODE_SYSTEM,CODE,DATE\n",
        "PATID,CODE_SYSTEM,CODE,DATE\n",
        "PATID,LOINC,VALUE,UNIT,DATE\n\
         P1,26515-7,1600,/mm3,2014-01-20\n\
         P1,26515-7,1400,/mm3,2014-01-02\n",
        "PATID,RXNORM,DATE\n",
    );
    let store = ingest_cohort(tmp.path()).unwrap();
    let cv = eval_criterion(
        &store,
        &PatientId::from("P1"),
        &platelet_criterion(),
        None,
        MissingDataPolicy::MissingMeansUnmet,
    )
    .unwrap();
    assert_eq!(cv.verdict, Verdict::Met);
}

#[test]
fn polarity_is_exercised_in_conjunction() {
    // an exclusion that fires wins over all-met inclusions
    let (_tmp, store) = lab_fixture();
    let trial = parse_trial_file(
        "TRIAL T PHASE 3\n\
         INCLUDE trait=platelets LAB loinc=26515-7 >= 1500 /mm3\n\
         INCLUDE trait=crc DIAGNOSIS system=ICD10CM codes=C18.* PRESENT\n\
         EXCLUDE trait=prior-radiation DIAGNOSIS system=ICD10CM codes=Z92.* PRESENT\n",
    )
    .unwrap();
    let res = eval_trial(&store, &PatientId::from("P1"), &trial, None, MissingDataPolicy::MissingMeansUnmet).unwrap();
    assert!(!res.eligible);
    assert_eq!(res.verdicts.iter().filter(|v| v.verdict == Verdict::Met).count(), 3);
    let _ = Polarity::Include;
}
