//! Cohort construction: case identification, eligibility screening, and
//! age/gender-matched control selection.
//!
//! A case is any patient with the case diagnosis code recorded during a visit
//! to the case department; its index date `t0` is the earliest such encounter.
//! Controls draw their own `t0` uniformly from their encounter dates rather
//! than inheriting the matched case's date, which would skew the
//! encounters-before-t0 distribution between the groups.

use crate::emr::{CodeEvent, Dataset, PatientId};
use crate::rng::substream;
use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};
use thiserror::Error;

/// Cohort construction parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortSpec {
    pub case_code: String,
    pub case_department: String,
    pub controls_per_case: usize,
    pub age_tolerance_years: i32,
    pub min_age: i32,
    pub seed: u64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        CohortSpec {
            case_code: "340".to_string(),
            case_department: "Neurology".to_string(),
            controls_per_case: 4,
            age_tolerance_years: 1,
            min_age: 18,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Case,
    Control,
}

/// Cohort membership of one patient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortAssignment {
    pub patient_id: PatientId,
    pub label: Label,
    pub t0: NaiveDate,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matched_case_id: Option<PatientId>,
}

/// `cohort.json` payload: assignments plus the spec and seed that made them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CohortFile {
    pub seed: u64,
    pub spec: CohortSpec,
    pub assignments: Vec<CohortAssignment>,
}

#[derive(Debug, Error, PartialEq)]
pub enum CohortError {
    #[error("case {case_id}: needed {needed} matching controls, only {available} available")]
    InsufficientPool { case_id: PatientId, needed: usize, available: usize },
    #[error("patient {0} has no encounters")]
    NoEncounters(PatientId),
}

/// Patients with the case code in the case department, with the earliest
/// qualifying encounter date as `t0`. Order follows the dataset.
pub fn identify_cases(dataset: &Dataset, spec: &CohortSpec) -> Vec<(PatientId, NaiveDate)> {
    let mut first_hit: HashMap<&PatientId, NaiveDate> = HashMap::new();
    for enc in dataset.encounters() {
        if enc.department != spec.case_department {
            continue;
        }
        let hit = enc.events.iter().any(|ev| {
            matches!(ev, CodeEvent::Diagnosis { code } if *code == spec.case_code)
        });
        if !hit {
            continue;
        }
        first_hit
            .entry(&enc.patient_id)
            .and_modify(|d| {
                if enc.date < *d {
                    *d = enc.date;
                }
            })
            .or_insert(enc.date);
    }
    dataset
        .patients()
        .iter()
        .filter_map(|p| first_hit.get(&p.id).map(|&t0| (p.id.clone(), t0)))
        .collect()
}

/// Keep cases with complete demographics, adult age at `t0`, and at least one
/// encounter strictly before `t0`.
pub fn filter_eligible(
    cases: &[(PatientId, NaiveDate)],
    dataset: &Dataset,
    spec: &CohortSpec,
) -> Vec<(PatientId, NaiveDate)> {
    cases
        .iter()
        .filter(|(id, t0)| {
            let Some(patient) = dataset.patient(id) else {
                return false;
            };
            if !patient.has_complete_demographics() {
                return false;
            }
            match patient.age_at(*t0) {
                Some(age) if age >= spec.min_age => {}
                _ => return false,
            }
            dataset.encounters_of(id).any(|e| e.date < *t0)
        })
        .cloned()
        .collect()
}

/// Non-case patients with at least one encounter and complete demographics,
/// in dataset order.
pub fn build_control_pool(dataset: &Dataset, cases: &[(PatientId, NaiveDate)]) -> Vec<PatientId> {
    let case_ids: HashSet<&PatientId> = cases.iter().map(|(id, _)| id).collect();
    dataset
        .patients()
        .iter()
        .filter(|p| {
            !case_ids.contains(&p.id)
                && p.has_complete_demographics()
                && dataset.encounters_of(&p.id).next().is_some()
        })
        .map(|p| p.id.clone())
        .collect()
}

/// Uniform draw from the patient's distinct encounter dates; deterministic in
/// (seed, patient id) and independent of everything else.
pub fn assign_control_t0(
    patient_id: &PatientId,
    dataset: &Dataset,
    seed: u64,
) -> Result<NaiveDate, CohortError> {
    let dates = dataset.encounter_dates(patient_id);
    if dates.is_empty() {
        return Err(CohortError::NoEncounters(patient_id.clone()));
    }
    let mut rng = substream(seed, &format!("control-t0/{patient_id}"));
    Ok(dates[rng.gen_range(0..dates.len())])
}

/// Draw `controls_per_case` distinct controls per case, matched on gender and
/// age, without replacement across cases.
///
/// Cases are visited in seeded-shuffled order and draw greedily from a
/// seeded-shuffled pool. Ages are compared at each side's own index date: the
/// case's at its `t0`, the candidate's at the t0 it would be assigned (a pure
/// function of seed and patient id, so it can be computed up front).
/// Exhaustion is a hard error, widening the tolerance is the caller's
/// decision.
pub fn match_controls(
    eligible_cases: &[(PatientId, NaiveDate)],
    pool: &[PatientId],
    dataset: &Dataset,
    spec: &CohortSpec,
) -> Result<Vec<CohortAssignment>, CohortError> {
    let mut case_order: Vec<usize> = (0..eligible_cases.len()).collect();
    case_order.shuffle(&mut substream(spec.seed, "match/case-order"));
    let mut pool_order: Vec<PatientId> = pool.to_vec();
    pool_order.shuffle(&mut substream(spec.seed, "match/pool-order"));

    // Reference age at the candidate's would-be t0.
    let mut candidate_t0: HashMap<&PatientId, NaiveDate> = HashMap::new();
    let mut candidate_age: HashMap<&PatientId, i32> = HashMap::new();
    let mut candidate_gender = HashMap::new();
    for id in &pool_order {
        let Some(p) = dataset.patient(id) else { continue };
        let Ok(t0) = assign_control_t0(id, dataset, spec.seed) else {
            continue;
        };
        let (Some(age), Some(gender)) = (p.age_at(t0), p.gender) else {
            continue;
        };
        candidate_t0.insert(id, t0);
        candidate_age.insert(id, age);
        candidate_gender.insert(id, gender);
    }

    let mut used: HashSet<PatientId> = HashSet::new();
    let mut controls_by_case: HashMap<usize, Vec<PatientId>> = HashMap::new();
    for &case_idx in &case_order {
        let (case_id, t0) = &eligible_cases[case_idx];
        let patient = dataset
            .patient(case_id)
            .unwrap_or_else(|| panic!("case {case_id} not in dataset"));
        let case_age = patient.age_at(*t0).expect("eligible case has birth date");
        let case_gender = patient.gender.expect("eligible case has gender");

        let mut drawn = Vec::with_capacity(spec.controls_per_case);
        for cand in &pool_order {
            if drawn.len() == spec.controls_per_case {
                break;
            }
            if used.contains(cand) {
                continue;
            }
            let (Some(&age), Some(&gender)) = (candidate_age.get(cand), candidate_gender.get(cand))
            else {
                continue;
            };
            if gender == case_gender && (age - case_age).abs() <= spec.age_tolerance_years {
                used.insert(cand.clone());
                drawn.push(cand.clone());
            }
        }
        if drawn.len() < spec.controls_per_case {
            return Err(CohortError::InsufficientPool {
                case_id: case_id.clone(),
                needed: spec.controls_per_case,
                available: drawn.len(),
            });
        }
        controls_by_case.insert(case_idx, drawn);
    }

    // Emit grouped by case in input order; control t0 depends only on
    // (seed, patient id), so regrouping cannot change it.
    let mut assignments = Vec::with_capacity(eligible_cases.len() * (1 + spec.controls_per_case));
    for (case_idx, (case_id, t0)) in eligible_cases.iter().enumerate() {
        assignments.push(CohortAssignment {
            patient_id: case_id.clone(),
            label: Label::Case,
            t0: *t0,
            matched_case_id: None,
        });
        for control_id in controls_by_case.remove(&case_idx).expect("matched above") {
            let control_t0 = candidate_t0[&control_id];
            assignments.push(CohortAssignment {
                patient_id: control_id,
                label: Label::Control,
                t0: control_t0,
                matched_case_id: Some(case_id.clone()),
            });
        }
    }
    Ok(assignments)
}

/// Run the full stage: identify, screen, match.
pub fn build_cohort(dataset: &Dataset, spec: &CohortSpec) -> Result<Vec<CohortAssignment>, CohortError> {
    let cases = identify_cases(dataset, spec);
    let eligible = filter_eligible(&cases, dataset, spec);
    let pool = build_control_pool(dataset, &cases);
    match_controls(&eligible, &pool, dataset, spec)
}

/// Frequencies of the number of distinct (date, department) encounters
/// strictly before `t0`, split by label: count -> (case, control).
pub fn encounter_histogram(
    assignments: &[CohortAssignment],
    dataset: &Dataset,
) -> BTreeMap<usize, (u64, u64)> {
    let mut hist: BTreeMap<usize, (u64, u64)> = BTreeMap::new();
    for a in assignments {
        let distinct: HashSet<(NaiveDate, &str)> = dataset
            .encounters_of(&a.patient_id)
            .filter(|e| e.date < a.t0)
            .map(|e| (e.date, e.department.as_str()))
            .collect();
        let entry = hist.entry(distinct.len()).or_insert((0, 0));
        match a.label {
            Label::Case => entry.0 += 1,
            Label::Control => entry.1 += 1,
        }
    }
    hist
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emr::{parse_encounter, parse_patient, Patient};

    fn date(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn patient(id: &str, birth: &str, gender: &str) -> Patient {
        parse_patient(&format!(
            r#"{{"id":"{id}","birth_date":"{birth}","gender":"{gender}","race":"White","ethnicity":"NonHispanic"}}"#
        ))
        .unwrap()
    }

    fn visit(id: &str, d: &str, dept: &str, codes: &[&str]) -> crate::emr::Encounter {
        let events: Vec<String> = codes
            .iter()
            .map(|c| format!(r#"{{"kind":"dx","code":"{c}"}}"#))
            .collect();
        parse_encounter(&format!(
            r#"{{"patient_id":"{id}","date":"{d}","department":"{dept}","events":[{}]}}"#,
            events.join(",")
        ))
        .unwrap()
    }

    #[test]
    fn earliest_qualifying_encounter_defines_t0() {
        let ds = Dataset::new(
            vec![patient("p1", "1970-01-01", "F")],
            vec![
                visit("p1", "2009-01-01", "Neurology", &["340"]),
                visit("p1", "2008-05-01", "Neurology", &["340"]),
            ],
        );
        let cases = identify_cases(&ds, &CohortSpec::default());
        assert_eq!(cases, vec![(PatientId::from("p1"), date("2008-05-01"))]);
    }

    #[test]
    fn wrong_department_is_not_a_case() {
        let ds = Dataset::new(
            vec![patient("p1", "1970-01-01", "F")],
            vec![visit("p1", "2008-05-01", "Internal Medicine", &["340"])],
        );
        assert!(identify_cases(&ds, &CohortSpec::default()).is_empty());
    }

    #[test]
    fn no_case_code_is_not_a_case() {
        let ds = Dataset::new(
            vec![patient("p1", "1970-01-01", "F")],
            vec![visit("p1", "2008-05-01", "Neurology", &["250"])],
        );
        assert!(identify_cases(&ds, &CohortSpec::default()).is_empty());
    }

    #[test]
    fn diagnosis_at_first_encounter_is_ineligible() {
        let ds = Dataset::new(
            vec![patient("p1", "1970-01-01", "F"), patient("p2", "1970-01-01", "F")],
            vec![
                visit("p1", "2008-05-01", "Neurology", &["340"]),
                visit("p2", "2008-01-01", "Primary Care", &[]),
                visit("p2", "2008-05-01", "Neurology", &["340"]),
            ],
        );
        let spec = CohortSpec::default();
        let cases = identify_cases(&ds, &spec);
        let eligible = filter_eligible(&cases, &ds, &spec);
        assert_eq!(eligible, vec![(PatientId::from("p2"), date("2008-05-01"))]);
    }

    #[test]
    fn minors_are_ineligible() {
        let ds = Dataset::new(
            vec![patient("p1", "1995-01-01", "F")],
            vec![
                visit("p1", "2008-01-01", "Primary Care", &[]),
                visit("p1", "2012-05-01", "Neurology", &["340"]),
            ],
        );
        let spec = CohortSpec::default();
        let eligible = filter_eligible(&identify_cases(&ds, &spec), &ds, &spec);
        assert!(eligible.is_empty()); // age 17 at t0
    }

    fn matching_fixture(pool_size: usize) -> Dataset {
        let mut patients = vec![patient("case1", "1968-06-01", "F")];
        let mut encounters = vec![
            visit("case1", "2007-03-01", "Primary Care", &[]),
            visit("case1", "2008-05-01", "Neurology", &["340"]),
        ];
        for i in 0..pool_size {
            let id = format!("ctl{i}");
            patients.push(patient(&id, "1968-03-01", "F"));
            encounters.push(visit(&id, "2007-06-01", "Primary Care", &[]));
            encounters.push(visit(&id, "2008-06-01", "Primary Care", &[]));
        }
        Dataset::new(patients, encounters)
    }

    #[test]
    fn draws_exactly_four_distinct_controls_deterministically() {
        let ds = matching_fixture(10);
        let spec = CohortSpec { seed: 11, ..CohortSpec::default() };
        let a = build_cohort(&ds, &spec).unwrap();
        let b = build_cohort(&ds, &spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 5);
        let controls: Vec<_> = a.iter().filter(|x| x.label == Label::Control).collect();
        assert_eq!(controls.len(), 4);
        let distinct: HashSet<_> = controls.iter().map(|c| &c.patient_id).collect();
        assert_eq!(distinct.len(), 4);
        for c in &controls {
            assert_eq!(c.matched_case_id, Some(PatientId::from("case1")));
            let dates = ds.encounter_dates(&c.patient_id);
            assert!(dates.contains(&c.t0));
        }
    }

    #[test]
    fn small_pool_is_a_hard_error() {
        let ds = matching_fixture(3);
        let spec = CohortSpec { seed: 11, ..CohortSpec::default() };
        match build_cohort(&ds, &spec) {
            Err(CohortError::InsufficientPool { needed, available, .. }) => {
                assert_eq!(needed, 4);
                assert_eq!(available, 3);
            }
            other => panic!("expected InsufficientPool, got {other:?}"),
        }
    }

    #[test]
    fn control_t0_is_deterministic_per_seed_and_patient() {
        let ds = matching_fixture(10);
        let id = PatientId::from("ctl0");
        let a = assign_control_t0(&id, &ds, 5).unwrap();
        let b = assign_control_t0(&id, &ds, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn control_t0_singleton() {
        let ds = Dataset::new(
            vec![patient("p1", "1970-01-01", "M")],
            vec![visit("p1", "2010-03-03", "Primary Care", &[])],
        );
        assert_eq!(assign_control_t0(&PatientId::from("p1"), &ds, 99).unwrap(), date("2010-03-03"));
    }

    #[test]
    fn control_t0_is_uniform_over_dates() {
        // Chi-square goodness of fit over 10,000 independent master seeds.
        let ds = Dataset::new(
            vec![patient("p1", "1970-01-01", "M")],
            vec![
                visit("p1", "2010-01-01", "A", &[]),
                visit("p1", "2010-02-01", "A", &[]),
                visit("p1", "2010-03-01", "A", &[]),
            ],
        );
        let id = PatientId::from("p1");
        let mut counts = [0u32; 3];
        let dates = ds.encounter_dates(&id);
        for seed in 0..10_000u64 {
            let t0 = assign_control_t0(&id, &ds, seed).unwrap();
            let idx = dates.iter().position(|&d| d == t0).unwrap();
            counts[idx] += 1;
        }
        let expected = 10_000.0 / 3.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (f64::from(c) - expected).powi(2) / expected)
            .sum();
        // 99.9% quantile of chi-square with 2 dof is 13.8.
        assert!(chi2 < 13.8, "chi2 = {chi2}, counts = {counts:?}");
    }

    #[test]
    fn histogram_counts_distinct_date_department_pairs_before_t0() {
        let ds = Dataset::new(
            vec![patient("p1", "1968-06-01", "F")],
            vec![
                visit("p1", "2008-04-30", "Primary Care", &[]),
                visit("p1", "2008-04-30", "Primary Care", &[]), // same date+dept deduplicates
                visit("p1", "2008-05-01", "Neurology", &["340"]),
            ],
        );
        let assignments = vec![CohortAssignment {
            patient_id: PatientId::from("p1"),
            label: Label::Case,
            t0: date("2008-05-01"),
            matched_case_id: None,
        }];
        let hist = encounter_histogram(&assignments, &ds);
        assert_eq!(hist.get(&1), Some(&(1, 0)));
        assert!(encounter_histogram(&[], &ds).is_empty());
    }
}
