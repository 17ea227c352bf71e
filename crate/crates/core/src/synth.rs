//! Synthetic population generator with a planted logistic ground truth.
//!
//! Each patient draws latent design-column values (binary features by
//! prevalence, labs by a three-level mix, demographics from the configured
//! mix), gets a case label with probability `logistic(intercept + beta . x)`,
//! and then materializes the active features as coded events on encounters
//! strictly before a per-patient reference date. Cases turn that reference
//! encounter into the case-department diagnosis visit, so the cohort stage
//! rediscovers the planted labels.
//!
//! Feature events anchor at the patient's first encounter and repeat later
//! with `repeat_event_rate`, so a control's randomized t0 only hides its
//! features when t0 falls on the very first encounter date. Family-history
//! codes are additionally emitted at the last encounter, exercising the
//! truncation exemption.

use crate::emr::{CodeEvent, Encounter, Ethnicity, Gender, Patient, PatientId, Race};
use crate::features::{
    column_names, default_dictionary, DemographicField, FeatureDictionary, FeatureRule,
};
use crate::glm::sigmoid;
use crate::rng::substream;
use chrono::{Datelike, Days, NaiveDate};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const LAB_RANGE_LOW: f64 = 200.0;
pub const LAB_RANGE_HIGH: f64 = 900.0;

const DEPARTMENTS: &[&str] =
    &["Primary Care", "Internal Medicine", "Radiology", "Laboratory", "Ophthalmology"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DemographicsMix {
    pub female: f64,
    pub hispanic: f64,
    pub race_black: f64,
    pub race_asian: f64,
    pub race_native_american: f64,
    pub race_other: f64,
    /// Age range (whole years) at the study window start.
    pub min_age: i32,
    pub max_age: i32,
}

impl Default for DemographicsMix {
    fn default() -> Self {
        DemographicsMix {
            female: 0.5,
            hispanic: 0.1,
            race_black: 0.12,
            race_asian: 0.05,
            race_native_american: 0.01,
            race_other: 0.02,
            min_age: 25,
            max_age: 55,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_patients: usize,
    pub study_window: StudyWindow,
    /// Mean encounters per patient-year (Poisson).
    pub encounter_rate: f64,
    /// Design-column coefficients of the planted model; `intercept` included.
    pub planted_beta: BTreeMap<String, f64>,
    /// Prevalence per event-backed design column. Lab dummies form a pair
    /// whose remainder is the observed-abnormal probability.
    pub feature_prevalence: BTreeMap<String, f64>,
    pub demographics_mix: DemographicsMix,
    pub seed: u64,
    pub case_code: String,
    pub case_department: String,
    /// Minimum encounters per patient; the diagnosis lands after at least
    /// `min_case_encounters - 1` prior encounters.
    pub min_case_encounters: usize,
    /// Fraction of patients whose reference date is their first encounter
    /// (those that become cases are then ineligible by construction).
    pub early_diagnosis_fraction: f64,
    /// Chance an active feature re-emits at each later pre-reference encounter.
    pub repeat_event_rate: f64,
    /// `None` uses the shipped default dictionary.
    pub dictionary: Option<FeatureDictionary>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_patients: 1000,
            study_window: StudyWindow {
                start: NaiveDate::from_ymd_opt(2006, 1, 1).expect("valid date"),
                end: NaiveDate::from_ymd_opt(2012, 7, 31).expect("valid date"),
            },
            encounter_rate: 2.0,
            planted_beta: BTreeMap::from([("intercept".to_string(), -2.0)]),
            feature_prevalence: BTreeMap::new(),
            demographics_mix: DemographicsMix::default(),
            seed: 0,
            case_code: "340".to_string(),
            case_department: "Neurology".to_string(),
            min_case_encounters: 3,
            early_diagnosis_fraction: 0.0,
            repeat_event_rate: 0.35,
            dictionary: None,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("n_patients must be at least 1")]
    NoPatients,
    #[error("study window is empty")]
    EmptyWindow,
    #[error("probability {value} for {name:?} is outside [0, 1]")]
    BadProbability { name: String, value: f64 },
    #[error("{name:?} is not a design column of the dictionary")]
    UnknownColumn { name: String },
    #[error("{name:?} is a demographic column; its distribution comes from demographics_mix")]
    DemographicPrevalence { name: String },
    #[error("lab levels of {name:?} have probabilities summing past 1")]
    LabMixOverflow { name: String },
    #[error("dictionary code {code:?} collides with the case code")]
    CaseCodeCollision { code: String },
    #[error("invalid dictionary: {0}")]
    Dictionary(#[from] crate::features::DictionaryError),
}

/// Ground truth written alongside the generated records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub beta: BTreeMap<String, f64>,
    pub labels: BTreeMap<String, u8>,
    pub reference_dates: BTreeMap<String, NaiveDate>,
    /// Nonzero latent column values per patient.
    pub latent: BTreeMap<String, BTreeMap<String, f64>>,
}

#[derive(Debug, Clone)]
pub struct GeneratedPopulation {
    pub patients: Vec<Patient>,
    pub encounters: Vec<Encounter>,
    pub truth: GroundTruth,
}

/// The exact coefficients used for generation, for recovery comparisons.
pub fn planted_truth(config: &GeneratorConfig) -> BTreeMap<String, f64> {
    config.planted_beta.clone()
}

enum Materialization {
    Event,
    Lab,
    Demographic(DemographicField),
}

struct ColumnPlan<'a> {
    name: String,
    def_name: &'a str,
    how: Materialization,
}

fn column_plans(dictionary: &FeatureDictionary) -> Vec<ColumnPlan<'_>> {
    let mut plans = Vec::new();
    for def in &dictionary.features {
        for name in column_names(def) {
            let how = match &def.rule {
                FeatureRule::Demographic { field } => Materialization::Demographic(*field),
                FeatureRule::LabThreeLevel { .. } => Materialization::Lab,
                _ => Materialization::Event,
            };
            plans.push(ColumnPlan { name, def_name: &def.name, how });
        }
    }
    plans
}

fn validate(config: &GeneratorConfig, dictionary: &FeatureDictionary) -> Result<(), ConfigError> {
    if config.n_patients == 0 {
        return Err(ConfigError::NoPatients);
    }
    if config.study_window.start >= config.study_window.end {
        return Err(ConfigError::EmptyWindow);
    }
    dictionary.validate()?;
    let plans = column_plans(dictionary);
    let known: BTreeSet<&str> = plans.iter().map(|p| p.name.as_str()).collect();
    let mix = &config.demographics_mix;
    for (name, value) in [
        ("female", mix.female),
        ("hispanic", mix.hispanic),
        ("race_black", mix.race_black),
        ("race_asian", mix.race_asian),
        ("race_native_american", mix.race_native_american),
        ("race_other", mix.race_other),
        ("early_diagnosis_fraction", config.early_diagnosis_fraction),
        ("repeat_event_rate", config.repeat_event_rate),
    ] {
        if !(0.0..=1.0).contains(&value) {
            return Err(ConfigError::BadProbability { name: name.to_string(), value });
        }
    }
    for (name, &p) in &config.feature_prevalence {
        if !(0.0..=1.0).contains(&p) {
            return Err(ConfigError::BadProbability { name: name.clone(), value: p });
        }
        let Some(plan) = plans.iter().find(|pl| pl.name == *name) else {
            return Err(ConfigError::UnknownColumn { name: name.clone() });
        };
        if matches!(plan.how, Materialization::Demographic(_)) {
            return Err(ConfigError::DemographicPrevalence { name: name.clone() });
        }
    }
    for name in config.planted_beta.keys() {
        if name != "intercept" && !known.contains(name.as_str()) {
            return Err(ConfigError::UnknownColumn { name: name.clone() });
        }
    }
    // Lab pairs must leave a nonnegative abnormal remainder.
    for def in &dictionary.features {
        if let FeatureRule::LabThreeLevel { .. } = def.rule {
            let unobs =
                config.feature_prevalence.get(&format!("{}:Unobserved", def.name)).copied();
            let normal =
                config.feature_prevalence.get(&format!("{}:ObservedNormal", def.name)).copied();
            if unobs.unwrap_or(0.0) + normal.unwrap_or(0.0) > 1.0 + 1e-12 {
                return Err(ConfigError::LabMixOverflow { name: def.name.clone() });
            }
        }
        let codes = match &def.rule {
            FeatureRule::Diagnosis { codes } => Some(codes),
            _ => None,
        };
        if let Some(codes) = codes {
            if codes.contains(&config.case_code) {
                return Err(ConfigError::CaseCodeCollision { code: config.case_code.clone() });
            }
        }
    }
    Ok(())
}

fn event_for_rule(rule: &FeatureRule) -> CodeEvent {
    // First code of the sorted set; one representative code is enough for
    // presence-based extraction.
    match rule {
        FeatureRule::Diagnosis { codes } => {
            CodeEvent::Diagnosis { code: codes.iter().next().expect("nonempty").clone() }
        }
        FeatureRule::FamilyHistory { codes } | FeatureRule::Supplemental { codes } => {
            CodeEvent::Supplemental { code: codes.iter().next().expect("nonempty").clone() }
        }
        FeatureRule::Procedure { codes } => {
            CodeEvent::Procedure { code: codes.iter().next().expect("nonempty").clone() }
        }
        FeatureRule::Demographic { .. } | FeatureRule::LabThreeLevel { .. } => {
            unreachable!("not event-backed")
        }
    }
}

fn lab_event(test: &str, normal: bool, rng: &mut ChaCha8Rng) -> CodeEvent {
    let value = if normal {
        rng.gen_range(LAB_RANGE_LOW..LAB_RANGE_HIGH)
    } else if rng.gen_bool(0.5) {
        rng.gen_range(1.0..LAB_RANGE_LOW - 1.0)
    } else {
        rng.gen_range(LAB_RANGE_HIGH + 1.0..LAB_RANGE_HIGH + 500.0)
    };
    CodeEvent::Lab {
        code: test.to_string(),
        value,
        low: Some(LAB_RANGE_LOW),
        high: Some(LAB_RANGE_HIGH),
    }
}

fn poisson(rng: &mut ChaCha8Rng, lambda: f64) -> usize {
    // Knuth's method; fine for the event rates this generator supports.
    let lambda = lambda.clamp(0.0, 600.0);
    let l = (-lambda).exp();
    let mut k = 0usize;
    let mut p = 1.0f64;
    loop {
        p *= rng.gen::<f64>();
        if p <= l {
            return k;
        }
        k += 1;
    }
}

struct PatientOutput {
    patient: Patient,
    encounters: Vec<Encounter>,
    label: u8,
    reference_date: NaiveDate,
    latent: BTreeMap<String, f64>,
}

fn generate_patient(
    index: usize,
    config: &GeneratorConfig,
    dictionary: &FeatureDictionary,
    plans: &[ColumnPlan<'_>],
) -> PatientOutput {
    let id = PatientId::new(format!("p{index:06}"));
    let mut rng = substream(config.seed, &format!("patient/{index}"));
    let window = &config.study_window;
    let window_days = (window.end - window.start).num_days() as usize + 1;
    let window_years = window_days as f64 / 365.25;

    // Demographics.
    let mix = &config.demographics_mix;
    let gender = if rng.gen_bool(mix.female) { Gender::F } else { Gender::M };
    let ethnicity =
        if rng.gen_bool(mix.hispanic) { Ethnicity::Hispanic } else { Ethnicity::NonHispanic };
    let race_draw: f64 = rng.gen();
    let race = if race_draw < mix.race_black {
        Race::Black
    } else if race_draw < mix.race_black + mix.race_asian {
        Race::Asian
    } else if race_draw < mix.race_black + mix.race_asian + mix.race_native_american {
        Race::NativeAmerican
    } else if race_draw < mix.race_black + mix.race_asian + mix.race_native_american + mix.race_other
    {
        Race::Other
    } else {
        Race::White
    };
    let age_at_start = rng.gen_range(mix.min_age..=mix.max_age);
    let offset_days = rng.gen_range(0u64..364);
    // Feb 29 window starts have no same-day counterpart in non-leap years;
    // fall back to the previous day.
    let anchor = window
        .start
        .with_year(window.start.year() - age_at_start)
        .or_else(|| {
            window
                .start
                .checked_sub_days(Days::new(1))
                .and_then(|d| d.with_year(window.start.year() - age_at_start))
        })
        .expect("valid birth year");
    let birth_date = anchor.checked_sub_days(Days::new(offset_days)).expect("valid birth date");

    // Encounter dates: distinct days in the window, ascending.
    let min_enc = config.min_case_encounters.max(1);
    let n_enc = poisson(&mut rng, config.encounter_rate * window_years)
        .max(min_enc)
        .min(window_days);
    let mut day_offsets = rand::seq::index::sample(&mut rng, window_days, n_enc).into_vec();
    day_offsets.sort_unstable();
    let dates: Vec<NaiveDate> = day_offsets
        .iter()
        .map(|&d| window.start.checked_add_days(Days::new(d as u64)).expect("inside window"))
        .collect();

    // Reference date: first encounter for the early-diagnosis slice,
    // otherwise after at least min_case_encounters - 1 prior encounters.
    let reference_idx = if config.early_diagnosis_fraction > 0.0
        && rng.gen_bool(config.early_diagnosis_fraction)
    {
        0
    } else {
        let lo = (min_enc - 1).min(n_enc - 1);
        rng.gen_range(lo..n_enc)
    };
    let reference_date = dates[reference_idx];

    // Latent design-column values.
    let patient = Patient {
        id: id.clone(),
        birth_date: Some(birth_date),
        gender: Some(gender),
        race: Some(race),
        ethnicity: Some(ethnicity),
    };
    let mut latent: BTreeMap<String, f64> = BTreeMap::new();
    let mut lab_levels: BTreeMap<&str, u8> = BTreeMap::new(); // 0 unobs, 1 normal, 2 abnormal
    for def in &dictionary.features {
        if let FeatureRule::LabThreeLevel { .. } = def.rule {
            let p_unobs = config
                .feature_prevalence
                .get(&format!("{}:Unobserved", def.name))
                .copied()
                .unwrap_or(1.0);
            let p_normal = config
                .feature_prevalence
                .get(&format!("{}:ObservedNormal", def.name))
                .copied()
                .unwrap_or(0.0);
            let draw: f64 = rng.gen();
            let level = if draw < p_unobs {
                0
            } else if draw < p_unobs + p_normal {
                1
            } else {
                2
            };
            lab_levels.insert(def.name.as_str(), level);
        }
    }
    for plan in plans {
        let value = match &plan.how {
            Materialization::Demographic(field) => match field {
                DemographicField::Age => {
                    let age = patient.age_at(reference_date).expect("birth date set");
                    if plan.name == "age" {
                        f64::from(age)
                    } else {
                        0.0
                    }
                }
                DemographicField::Gender => f64::from(gender == Gender::F),
                DemographicField::Ethnicity => f64::from(ethnicity == Ethnicity::Hispanic),
                DemographicField::Race => match plan.name.as_str() {
                    "race:Black" => f64::from(race == Race::Black),
                    "race:Asian" => f64::from(race == Race::Asian),
                    "race:NativeAmerican" => f64::from(race == Race::NativeAmerican),
                    _ => f64::from(race == Race::Other),
                },
            },
            Materialization::Lab => {
                let level = lab_levels.get(plan.def_name).copied().unwrap_or(0);
                if plan.name.ends_with(":Unobserved") {
                    f64::from(level == 0)
                } else {
                    f64::from(level == 1)
                }
            }
            Materialization::Event => {
                let p = config.feature_prevalence.get(&plan.name).copied().unwrap_or(0.0);
                f64::from(p > 0.0 && rng.gen_bool(p))
            }
        };
        if value != 0.0 {
            latent.insert(plan.name.clone(), value);
        }
    }

    // Label from the planted model.
    let mut eta = config.planted_beta.get("intercept").copied().unwrap_or(0.0);
    for (name, beta) in &config.planted_beta {
        if name == "intercept" {
            continue;
        }
        eta += beta * latent.get(name).copied().unwrap_or(0.0);
    }
    let label = u8::from(rng.gen_bool(sigmoid(eta)));

    // Encounters and materialized events.
    let mut per_encounter_events: Vec<Vec<CodeEvent>> = vec![Vec::new(); n_enc];
    let pre_ref = reference_idx; // encounters strictly before the reference
    for def in &dictionary.features {
        match &def.rule {
            FeatureRule::Demographic { .. } => {}
            FeatureRule::LabThreeLevel { test } => {
                let level = lab_levels.get(def.name.as_str()).copied().unwrap_or(0);
                if level == 0 || pre_ref == 0 {
                    continue;
                }
                per_encounter_events[0].push(lab_event(test, level == 1, &mut rng));
                for slot in per_encounter_events.iter_mut().take(pre_ref).skip(1) {
                    if rng.gen_bool(config.repeat_event_rate) {
                        slot.push(lab_event(test, level == 1, &mut rng));
                    }
                }
            }
            FeatureRule::FamilyHistory { .. } => {
                let col = column_names(def);
                if latent.get(&col[0]).copied().unwrap_or(0.0) == 0.0 {
                    continue;
                }
                // Before and after the reference date, exercising the
                // truncation exemption.
                per_encounter_events[0].push(event_for_rule(&def.rule));
                if n_enc > 1 {
                    per_encounter_events[n_enc - 1].push(event_for_rule(&def.rule));
                }
            }
            rule => {
                let col = column_names(def);
                if latent.get(&col[0]).copied().unwrap_or(0.0) == 0.0 || pre_ref == 0 {
                    continue;
                }
                per_encounter_events[0].push(event_for_rule(rule));
                for slot in per_encounter_events.iter_mut().take(pre_ref).skip(1) {
                    if rng.gen_bool(config.repeat_event_rate) {
                        slot.push(event_for_rule(rule));
                    }
                }
            }
        }
    }

    let mut encounters = Vec::with_capacity(n_enc);
    for (i, date) in dates.iter().enumerate() {
        let mut events = std::mem::take(&mut per_encounter_events[i]);
        let department = if label == 1 && i == reference_idx {
            events.push(CodeEvent::Diagnosis { code: config.case_code.clone() });
            config.case_department.clone()
        } else {
            (*DEPARTMENTS.choose(&mut rng).expect("nonempty")).to_string()
        };
        encounters.push(Encounter { patient_id: id.clone(), date: *date, department, events });
    }

    PatientOutput { patient, encounters, label, reference_date, latent }
}

/// Generate the full population. Per-patient work runs in parallel over
/// per-patient substreams; output order is by patient index either way.
pub fn generate_population(config: &GeneratorConfig) -> Result<GeneratedPopulation, ConfigError> {
    let dictionary = config.dictionary.clone().unwrap_or_else(default_dictionary);
    validate(config, &dictionary)?;
    let plans = column_plans(&dictionary);

    let outputs: Vec<PatientOutput> = (0..config.n_patients)
        .into_par_iter()
        .map(|i| generate_patient(i, config, &dictionary, &plans))
        .collect();

    let mut patients = Vec::with_capacity(outputs.len());
    let mut encounters = Vec::new();
    let mut truth = GroundTruth {
        beta: planted_truth(config),
        labels: BTreeMap::new(),
        reference_dates: BTreeMap::new(),
        latent: BTreeMap::new(),
    };
    for out in outputs {
        let pid = out.patient.id.to_string();
        truth.labels.insert(pid.clone(), out.label);
        truth.reference_dates.insert(pid.clone(), out.reference_date);
        truth.latent.insert(pid, out.latent);
        patients.push(out.patient);
        encounters.extend(out.encounters);
    }
    Ok(GeneratedPopulation { patients, encounters, truth })
}

/// File names written by [`write_population`].
#[derive(Debug, Clone)]
pub struct PopulationPaths {
    pub patients: PathBuf,
    pub encounters: PathBuf,
    pub truth: PathBuf,
}

/// Write `patients.jsonl`, `encounters.jsonl`, and `truth.json` under
/// `out_dir`.
pub fn write_population(
    population: &GeneratedPopulation,
    out_dir: &Path,
) -> std::io::Result<PopulationPaths> {
    std::fs::create_dir_all(out_dir)?;
    let paths = PopulationPaths {
        patients: out_dir.join("patients.jsonl"),
        encounters: out_dir.join("encounters.jsonl"),
        truth: out_dir.join("truth.json"),
    };
    let mut w = std::io::BufWriter::new(std::fs::File::create(&paths.patients)?);
    for p in &population.patients {
        writeln!(w, "{}", crate::emr::patient_to_json(p))?;
    }
    w.flush()?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(&paths.encounters)?);
    for e in &population.encounters {
        writeln!(w, "{}", crate::emr::encounter_to_json(e))?;
    }
    w.flush()?;
    let truth = serde_json::to_string_pretty(&population.truth).expect("truth serializes");
    std::fs::write(&paths.truth, truth + "\n")?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emr::{validate_dataset, Dataset};

    fn logit(p: f64) -> f64 {
        (p / (1.0 - p)).ln()
    }

    #[test]
    fn case_fraction_tracks_the_intercept() {
        let config = GeneratorConfig {
            n_patients: 5000,
            planted_beta: BTreeMap::from([("intercept".to_string(), logit(0.2))]),
            seed: 12,
            ..GeneratorConfig::default()
        };
        let pop = generate_population(&config).unwrap();
        let cases: usize = pop.truth.labels.values().filter(|&&l| l == 1).count();
        let fraction = cases as f64 / 5000.0;
        // Binomial 99% bound around 0.2 at n = 5000 is roughly +/- 0.015.
        assert!((0.17..=0.23).contains(&fraction), "fraction = {fraction}");
    }

    #[test]
    fn deterministic_output() {
        let config = GeneratorConfig { n_patients: 50, seed: 7, ..GeneratorConfig::default() };
        let a = generate_population(&config).unwrap();
        let b = generate_population(&config).unwrap();
        assert_eq!(a.patients, b.patients);
        assert_eq!(a.encounters, b.encounters);
        assert_eq!(a.truth, b.truth);
    }

    #[test]
    fn generated_files_parse_cleanly() {
        let config = GeneratorConfig {
            n_patients: 200,
            seed: 3,
            feature_prevalence: BTreeMap::from([
                ("Lupus".to_string(), 0.2),
                ("B12:Unobserved".to_string(), 0.5),
                ("B12:ObservedNormal".to_string(), 0.3),
                ("MS (FH)".to_string(), 0.1),
            ]),
            ..GeneratorConfig::default()
        };
        let pop = generate_population(&config).unwrap();
        let mut patients = Vec::new();
        for p in &pop.patients {
            patients.push(crate::emr::parse_patient(&crate::emr::patient_to_json(p)).unwrap());
        }
        let mut encounters = Vec::new();
        for e in &pop.encounters {
            encounters.push(crate::emr::parse_encounter(&crate::emr::encounter_to_json(e)).unwrap());
        }
        let ds = Dataset::new(patients, encounters);
        assert!(validate_dataset(&ds).is_empty());
    }

    #[test]
    fn prevalence_is_realized_within_three_sigma() {
        let p = 0.25;
        let n = 4000usize;
        let config = GeneratorConfig {
            n_patients: n,
            seed: 9,
            feature_prevalence: BTreeMap::from([("Lupus".to_string(), p)]),
            ..GeneratorConfig::default()
        };
        let pop = generate_population(&config).unwrap();
        let count = pop
            .truth
            .latent
            .values()
            .filter(|cols| cols.get("Lupus").copied().unwrap_or(0.0) == 1.0)
            .count() as f64;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((count - n as f64 * p).abs() <= 3.0 * sigma, "count = {count}");
    }

    #[test]
    fn planted_truth_round_trips_through_json() {
        let mut config = GeneratorConfig::default();
        config.planted_beta.insert("Lupus".to_string(), 1.5);
        let truth = planted_truth(&config);
        assert_eq!(truth.get("Lupus"), Some(&1.5));
        assert!(!truth.contains_key("Uveitis"));
        let json = serde_json::to_string(&truth).unwrap();
        let back: BTreeMap<String, f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(truth, back);
    }

    #[test]
    fn bad_configs_are_rejected() {
        let config = GeneratorConfig { n_patients: 0, ..GeneratorConfig::default() };
        assert_eq!(generate_population(&config).unwrap_err(), ConfigError::NoPatients);

        let config = GeneratorConfig {
            feature_prevalence: BTreeMap::from([("No Such Column".to_string(), 0.2)]),
            ..GeneratorConfig::default()
        };
        assert!(matches!(
            generate_population(&config).unwrap_err(),
            ConfigError::UnknownColumn { .. }
        ));

        let config = GeneratorConfig {
            feature_prevalence: BTreeMap::from([("age".to_string(), 0.2)]),
            ..GeneratorConfig::default()
        };
        assert!(matches!(
            generate_population(&config).unwrap_err(),
            ConfigError::DemographicPrevalence { .. }
        ));

        let config = GeneratorConfig {
            feature_prevalence: BTreeMap::from([
                ("B12:Unobserved".to_string(), 0.8),
                ("B12:ObservedNormal".to_string(), 0.5),
            ]),
            ..GeneratorConfig::default()
        };
        assert!(matches!(
            generate_population(&config).unwrap_err(),
            ConfigError::LabMixOverflow { .. }
        ));
    }
}
