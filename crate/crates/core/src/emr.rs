//! Longitudinal EMR data model: patients, encounters, coded events.
//!
//! Records are ingested from line-delimited JSON (`patients.jsonl`,
//! `encounters.jsonl`). Parsing is strict about structure (dates, ids, lab
//! values) but lenient about demographic completeness: a patient missing a
//! demographic field parses fine and is flagged incomplete, so eligibility
//! screening can reject it later.

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::BufRead;
use std::path::Path;
use thiserror::Error;

/// Opaque patient identifier.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PatientId(pub String);

impl PatientId {
    pub fn new(id: impl Into<String>) -> Self {
        PatientId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PatientId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for PatientId {
    fn from(s: &str) -> Self {
        PatientId(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gender {
    F,
    M,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Race {
    White,
    Black,
    Asian,
    NativeAmerican,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Ethnicity {
    Hispanic,
    NonHispanic,
}

/// A patient record. Demographic fields are optional at parse time;
/// completeness is an eligibility requirement, not a parse requirement.
#[derive(Debug, Clone, PartialEq)]
pub struct Patient {
    pub id: PatientId,
    pub birth_date: Option<NaiveDate>,
    pub gender: Option<Gender>,
    pub race: Option<Race>,
    pub ethnicity: Option<Ethnicity>,
}

impl Patient {
    /// All four demographic fields present.
    pub fn has_complete_demographics(&self) -> bool {
        self.birth_date.is_some()
            && self.gender.is_some()
            && self.race.is_some()
            && self.ethnicity.is_some()
    }

    /// Age in whole years at `date`. Age is always derived, never stored,
    /// because the reference date differs per patient.
    pub fn age_at(&self, date: NaiveDate) -> Option<i32> {
        let birth = self.birth_date?;
        let mut age = date.year() - birth.year();
        if (date.month(), date.day()) < (birth.month(), birth.day()) {
            age -= 1;
        }
        Some(age)
    }
}

/// One coded event inside an encounter.
#[derive(Debug, Clone, PartialEq)]
pub enum CodeEvent {
    Diagnosis { code: String },
    Supplemental { code: String },
    Procedure { code: String },
    Lab { code: String, value: f64, low: Option<f64>, high: Option<f64> },
}

impl CodeEvent {
    pub fn code(&self) -> &str {
        match self {
            CodeEvent::Diagnosis { code }
            | CodeEvent::Supplemental { code }
            | CodeEvent::Procedure { code } => code,
            CodeEvent::Lab { code, .. } => code,
        }
    }
}

/// One medical encounter with its coded events.
#[derive(Debug, Clone, PartialEq)]
pub struct Encounter {
    pub patient_id: PatientId,
    pub date: NaiveDate,
    pub department: String,
    pub events: Vec<CodeEvent>,
}

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("line {line}: invalid JSON: {message}")]
    InvalidJson { line: usize, message: String },
    #[error("line {line}: missing id")]
    MissingId { line: usize },
    #[error("line {line}: invalid date {value:?}")]
    InvalidDate { line: usize, value: String },
    #[error("line {line}: missing encounter date")]
    MissingDate { line: usize },
    #[error("line {line}: lab event {code:?} has no value")]
    MissingLabValue { line: usize, code: String },
    #[error("line {line}: unknown event kind {kind:?}")]
    UnknownKind { line: usize, kind: String },
    #[error("line {line}: empty event code")]
    MissingCode { line: usize },
    #[error("line {line}: {kind} event {code:?} carries a value")]
    UnexpectedValue { line: usize, kind: String, code: String },
}

// --- raw JSONL shapes ---

#[derive(Deserialize)]
struct PatientRecord {
    id: Option<String>,
    birth_date: Option<String>,
    gender: Option<String>,
    race: Option<String>,
    ethnicity: Option<String>,
}

#[derive(Serialize)]
struct PatientRecordOut<'a> {
    id: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    birth_date: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gender: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    race: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ethnicity: Option<&'static str>,
}

#[derive(Deserialize)]
struct EncounterRecord {
    patient_id: Option<String>,
    date: Option<String>,
    #[serde(default)]
    department: String,
    #[serde(default)]
    events: Vec<EventRecord>,
}

#[derive(Serialize, Deserialize)]
struct EventRecord {
    kind: String,
    #[serde(default)]
    code: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    low: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    high: Option<f64>,
}

#[derive(Serialize)]
struct EncounterRecordOut<'a> {
    patient_id: &'a str,
    date: String,
    department: &'a str,
    events: Vec<EventRecord>,
}

fn parse_date(value: &str, line: usize) -> Result<NaiveDate, ParseError> {
    NaiveDate::parse_from_str(value, "%Y-%m-%d").map_err(|_| ParseError::InvalidDate {
        line,
        value: value.to_string(),
    })
}

/// Parse one `patients.jsonl` line. Unknown race strings map to `Other`
/// rather than erroring, so third-party extracts load; unknown gender or
/// ethnicity strings are treated as absent (the record becomes incomplete).
pub fn parse_patient(text: &str) -> Result<Patient, ParseError> {
    parse_patient_at(text, 0)
}

fn parse_patient_at(text: &str, line: usize) -> Result<Patient, ParseError> {
    let raw: PatientRecord =
        serde_json::from_str(text).map_err(|e| ParseError::InvalidJson { line, message: e.to_string() })?;
    let id = raw.id.filter(|s| !s.is_empty()).ok_or(ParseError::MissingId { line })?;
    let birth_date = raw.birth_date.map(|s| parse_date(&s, line)).transpose()?;
    let gender = raw.gender.and_then(|s| match s.as_str() {
        "F" => Some(Gender::F),
        "M" => Some(Gender::M),
        _ => None,
    });
    let race = raw.race.map(|s| match s.as_str() {
        "White" => Race::White,
        "Black" => Race::Black,
        "Asian" => Race::Asian,
        "NativeAmerican" => Race::NativeAmerican,
        _ => Race::Other,
    });
    let ethnicity = raw.ethnicity.and_then(|s| match s.as_str() {
        "Hispanic" => Some(Ethnicity::Hispanic),
        "NonHispanic" => Some(Ethnicity::NonHispanic),
        _ => None,
    });
    Ok(Patient { id: PatientId(id), birth_date, gender, race, ethnicity })
}

/// Parse one `encounters.jsonl` line.
pub fn parse_encounter(text: &str) -> Result<Encounter, ParseError> {
    parse_encounter_at(text, 0)
}

fn parse_encounter_at(text: &str, line: usize) -> Result<Encounter, ParseError> {
    let raw: EncounterRecord =
        serde_json::from_str(text).map_err(|e| ParseError::InvalidJson { line, message: e.to_string() })?;
    let patient_id = raw
        .patient_id
        .filter(|s| !s.is_empty())
        .ok_or(ParseError::MissingId { line })?;
    let date = match raw.date {
        Some(s) => parse_date(&s, line)?,
        None => return Err(ParseError::MissingDate { line }),
    };
    let mut events = Vec::with_capacity(raw.events.len());
    for ev in raw.events {
        if ev.code.is_empty() {
            return Err(ParseError::MissingCode { line });
        }
        let event = match ev.kind.as_str() {
            "lab" => CodeEvent::Lab {
                value: ev.value.ok_or_else(|| ParseError::MissingLabValue {
                    line,
                    code: ev.code.clone(),
                })?,
                code: ev.code,
                low: ev.low,
                high: ev.high,
            },
            kind @ ("dx" | "vcode" | "proc") => {
                if ev.value.is_some() {
                    return Err(ParseError::UnexpectedValue {
                        line,
                        kind: kind.to_string(),
                        code: ev.code,
                    });
                }
                match kind {
                    "dx" => CodeEvent::Diagnosis { code: ev.code },
                    "vcode" => CodeEvent::Supplemental { code: ev.code },
                    _ => CodeEvent::Procedure { code: ev.code },
                }
            }
            other => {
                return Err(ParseError::UnknownKind { line, kind: other.to_string() })
            }
        };
        events.push(event);
    }
    Ok(Encounter { patient_id: PatientId(patient_id), date, department: raw.department, events })
}

fn gender_str(g: Gender) -> &'static str {
    match g {
        Gender::F => "F",
        Gender::M => "M",
    }
}

fn race_str(r: Race) -> &'static str {
    match r {
        Race::White => "White",
        Race::Black => "Black",
        Race::Asian => "Asian",
        Race::NativeAmerican => "NativeAmerican",
        Race::Other => "Other",
    }
}

fn ethnicity_str(e: Ethnicity) -> &'static str {
    match e {
        Ethnicity::Hispanic => "Hispanic",
        Ethnicity::NonHispanic => "NonHispanic",
    }
}

/// Serialize a patient back to its `patients.jsonl` line.
pub fn patient_to_json(patient: &Patient) -> String {
    let record = PatientRecordOut {
        id: patient.id.as_str(),
        birth_date: patient.birth_date.map(|d| d.format("%Y-%m-%d").to_string()),
        gender: patient.gender.map(gender_str),
        race: patient.race.map(race_str),
        ethnicity: patient.ethnicity.map(ethnicity_str),
    };
    serde_json::to_string(&record).expect("patient serializes")
}

/// Serialize an encounter back to its `encounters.jsonl` line.
pub fn encounter_to_json(encounter: &Encounter) -> String {
    let events = encounter
        .events
        .iter()
        .map(|ev| match ev {
            CodeEvent::Diagnosis { code } => EventRecord {
                kind: "dx".into(),
                code: code.clone(),
                value: None,
                low: None,
                high: None,
            },
            CodeEvent::Supplemental { code } => EventRecord {
                kind: "vcode".into(),
                code: code.clone(),
                value: None,
                low: None,
                high: None,
            },
            CodeEvent::Procedure { code } => EventRecord {
                kind: "proc".into(),
                code: code.clone(),
                value: None,
                low: None,
                high: None,
            },
            CodeEvent::Lab { code, value, low, high } => EventRecord {
                kind: "lab".into(),
                code: code.clone(),
                value: Some(*value),
                low: *low,
                high: *high,
            },
        })
        .collect();
    let record = EncounterRecordOut {
        patient_id: encounter.patient_id.as_str(),
        date: encounter.date.format("%Y-%m-%d").to_string(),
        department: &encounter.department,
        events,
    };
    serde_json::to_string(&record).expect("encounter serializes")
}

/// An in-memory dataset with patient and encounter indexes.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    patients: Vec<Patient>,
    encounters: Vec<Encounter>,
    by_id: HashMap<PatientId, usize>,
    enc_by_patient: HashMap<PatientId, Vec<usize>>,
}

impl Dataset {
    /// Build a dataset from parsed records. When an id occurs more than once
    /// the first record wins; the duplicate is still visible to
    /// [`validate_dataset`].
    pub fn new(patients: Vec<Patient>, encounters: Vec<Encounter>) -> Self {
        let mut by_id = HashMap::with_capacity(patients.len());
        for (i, p) in patients.iter().enumerate() {
            by_id.entry(p.id.clone()).or_insert(i);
        }
        let mut enc_by_patient: HashMap<PatientId, Vec<usize>> = HashMap::new();
        for (i, e) in encounters.iter().enumerate() {
            enc_by_patient.entry(e.patient_id.clone()).or_default().push(i);
        }
        Dataset { patients, encounters, by_id, enc_by_patient }
    }

    pub fn patients(&self) -> &[Patient] {
        &self.patients
    }

    pub fn encounters(&self) -> &[Encounter] {
        &self.encounters
    }

    pub fn patient(&self, id: &PatientId) -> Option<&Patient> {
        self.by_id.get(id).map(|&i| &self.patients[i])
    }

    /// Encounters of one patient, in input order.
    pub fn encounters_of(&self, id: &PatientId) -> impl Iterator<Item = &Encounter> {
        self.enc_by_patient
            .get(id)
            .into_iter()
            .flatten()
            .map(move |&i| &self.encounters[i])
    }

    /// Distinct encounter dates of one patient, ascending.
    pub fn encounter_dates(&self, id: &PatientId) -> Vec<NaiveDate> {
        let dates: BTreeSet<NaiveDate> = self.encounters_of(id).map(|e| e.date).collect();
        dates.into_iter().collect()
    }
}

/// Referential findings over a parsed dataset. Report-only: nothing here is
/// a hard error.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    /// Encounter patient ids with no patient record, sorted, deduplicated.
    pub dangling_refs: Vec<PatientId>,
    /// Patient ids appearing more than once, sorted, deduplicated.
    pub duplicate_ids: Vec<PatientId>,
    /// Patients with no encounters at all, sorted.
    pub zero_encounter_patients: Vec<PatientId>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.dangling_refs.is_empty()
            && self.duplicate_ids.is_empty()
            && self.zero_encounter_patients.is_empty()
    }
}

/// Scan a dataset for dangling references, duplicate ids, and encounter-less
/// patients. Pure and idempotent.
pub fn validate_dataset(dataset: &Dataset) -> ValidationReport {
    let mut seen: BTreeSet<&PatientId> = BTreeSet::new();
    let mut duplicates: BTreeSet<PatientId> = BTreeSet::new();
    for p in dataset.patients() {
        if !seen.insert(&p.id) {
            duplicates.insert(p.id.clone());
        }
    }
    let mut dangling: BTreeSet<PatientId> = BTreeSet::new();
    for e in dataset.encounters() {
        if dataset.patient(&e.patient_id).is_none() {
            dangling.insert(e.patient_id.clone());
        }
    }
    let mut zero: Vec<PatientId> = dataset
        .patients()
        .iter()
        .filter(|p| dataset.encounters_of(&p.id).next().is_none())
        .map(|p| p.id.clone())
        .collect();
    zero.sort();
    zero.dedup();
    ValidationReport {
        dangling_refs: dangling.into_iter().collect(),
        duplicate_ids: duplicates.into_iter().collect(),
        zero_encounter_patients: zero,
    }
}

fn parse_lines<T>(
    reader: impl BufRead,
    mut parse: impl FnMut(&str, usize) -> Result<T, ParseError>,
) -> Result<Vec<T>, ParseError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| ParseError::InvalidJson { line: i + 1, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse(&line, i + 1)?);
    }
    Ok(out)
}

pub fn read_patients(reader: impl BufRead) -> Result<Vec<Patient>, ParseError> {
    parse_lines(reader, parse_patient_at)
}

pub fn read_encounters(reader: impl BufRead) -> Result<Vec<Encounter>, ParseError> {
    parse_lines(reader, parse_encounter_at)
}

/// Load `patients.jsonl` + `encounters.jsonl` into a dataset.
pub fn load_dataset(
    patients_path: &Path,
    encounters_path: &Path,
) -> Result<Dataset, DatasetIoError> {
    let pf = std::fs::File::open(patients_path)
        .map_err(|e| DatasetIoError::Io { path: patients_path.display().to_string(), source: e })?;
    let patients = read_patients(std::io::BufReader::new(pf))
        .map_err(|e| DatasetIoError::Parse { path: patients_path.display().to_string(), source: e })?;
    let ef = std::fs::File::open(encounters_path)
        .map_err(|e| DatasetIoError::Io { path: encounters_path.display().to_string(), source: e })?;
    let encounters = read_encounters(std::io::BufReader::new(ef))
        .map_err(|e| DatasetIoError::Parse { path: encounters_path.display().to_string(), source: e })?;
    Ok(Dataset::new(patients, encounters))
}

#[derive(Debug, Error)]
pub enum DatasetIoError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: String, source: ParseError },
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    #[test]
    fn parses_complete_patient() {
        let p = parse_patient(
            r#"{"id":"p1","birth_date":"1980-02-01","gender":"F","race":"White","ethnicity":"NonHispanic"}"#,
        )
        .unwrap();
        assert_eq!(p.id, PatientId::from("p1"));
        assert_eq!(p.birth_date, Some(date("1980-02-01")));
        assert_eq!(p.gender, Some(Gender::F));
        assert!(p.has_complete_demographics());
    }

    #[test]
    fn missing_gender_flags_incomplete() {
        let p = parse_patient(
            r#"{"id":"p1","birth_date":"1980-02-01","race":"White","ethnicity":"NonHispanic"}"#,
        )
        .unwrap();
        assert!(!p.has_complete_demographics());
    }

    #[test]
    fn invalid_month_is_a_parse_error() {
        let err = parse_patient(r#"{"id":"p1","birth_date":"1980-13-01"}"#).unwrap_err();
        assert!(matches!(err, ParseError::InvalidDate { .. }));
    }

    #[test]
    fn missing_id_is_a_parse_error() {
        let err = parse_patient(r#"{"birth_date":"1980-01-01"}"#).unwrap_err();
        assert!(matches!(err, ParseError::MissingId { .. }));
    }

    #[test]
    fn unknown_race_maps_to_other() {
        let p = parse_patient(r#"{"id":"p1","race":"Martian"}"#).unwrap();
        assert_eq!(p.race, Some(Race::Other));
    }

    #[test]
    fn parses_event_kinds() {
        let e = parse_encounter(
            r#"{"patient_id":"p1","date":"2008-05-01","department":"Neurology","events":[
                {"kind":"dx","code":"340"},
                {"kind":"lab","code":"B12","value":500,"low":200,"high":900}]}"#,
        )
        .unwrap();
        assert_eq!(e.events[0], CodeEvent::Diagnosis { code: "340".into() });
        assert_eq!(
            e.events[1],
            CodeEvent::Lab { code: "B12".into(), value: 500.0, low: Some(200.0), high: Some(900.0) }
        );
    }

    #[test]
    fn lab_without_value_fails() {
        let err = parse_encounter(
            r#"{"patient_id":"p1","date":"2008-05-01","department":"Lab","events":[{"kind":"lab","code":"B12"}]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, ParseError::MissingLabValue { .. }));
    }

    #[test]
    fn unknown_kind_fails() {
        let err = parse_encounter(
            r#"{"patient_id":"p1","date":"2008-05-01","department":"X","events":[{"kind":"rx","code":"A"}]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, ParseError::UnknownKind { .. }));
    }

    #[test]
    fn age_is_whole_years() {
        let p = parse_patient(r#"{"id":"p1","birth_date":"1980-06-15"}"#).unwrap();
        assert_eq!(p.age_at(date("2010-06-14")), Some(29));
        assert_eq!(p.age_at(date("2010-06-15")), Some(30));
        assert_eq!(p.age_at(date("2010-06-16")), Some(30));
    }

    #[test]
    fn validation_reports_dangling_duplicate_and_empty() {
        let p1 = parse_patient(r#"{"id":"p1"}"#).unwrap();
        let p1b = parse_patient(r#"{"id":"p1"}"#).unwrap();
        let p2 = parse_patient(r#"{"id":"p2"}"#).unwrap();
        let e = parse_encounter(r#"{"patient_id":"p9","date":"2008-01-01","department":"X","events":[]}"#)
            .unwrap();
        let e1 = parse_encounter(r#"{"patient_id":"p1","date":"2008-01-01","department":"X","events":[]}"#)
            .unwrap();
        let ds = Dataset::new(vec![p1, p1b, p2], vec![e, e1]);
        let report = validate_dataset(&ds);
        assert_eq!(report.dangling_refs, vec![PatientId::from("p9")]);
        assert_eq!(report.duplicate_ids, vec![PatientId::from("p1")]);
        assert_eq!(report.zero_encounter_patients, vec![PatientId::from("p2")]);
        // Idempotent.
        assert_eq!(report, validate_dataset(&ds));
    }

    #[test]
    fn clean_dataset_reports_empty() {
        let p1 = parse_patient(r#"{"id":"p1"}"#).unwrap();
        let e1 = parse_encounter(r#"{"patient_id":"p1","date":"2008-01-01","department":"X","events":[]}"#)
            .unwrap();
        let ds = Dataset::new(vec![p1], vec![e1]);
        assert!(validate_dataset(&ds).is_empty());
    }

    #[test]
    fn round_trip_preserves_records() {
        let lines = [
            r#"{"id":"p1","birth_date":"1980-02-01","gender":"F","race":"Asian","ethnicity":"Hispanic"}"#,
            r#"{"id":"p2","gender":"M"}"#,
        ];
        for line in lines {
            let p = parse_patient(line).unwrap();
            let p2 = parse_patient(&patient_to_json(&p)).unwrap();
            assert_eq!(p, p2);
        }
        let enc = parse_encounter(
            r#"{"patient_id":"p1","date":"2008-05-01","department":"Neurology","events":[
                {"kind":"dx","code":"340"},{"kind":"vcode","code":"V17.2"},
                {"kind":"proc","code":"70551"},
                {"kind":"lab","code":"B12","value":123.5,"low":200,"high":900}]}"#,
        )
        .unwrap();
        let enc2 = parse_encounter(&encounter_to_json(&enc)).unwrap();
        assert_eq!(enc, enc2);
    }
}
