//! Feature extraction: declarative dictionary, history truncation, dummy
//! expansion, and design matrix assembly.
//!
//! Every event dated on or after a patient's `t0` is invisible to extraction,
//! with one exemption: family-history supplemental codes count regardless of
//! date, since patients often disclose family history only in later visits.

use crate::cohort::{CohortAssignment, Label};
use crate::emr::{CodeEvent, Dataset, Ethnicity, Gender, PatientId, Race};
use crate::scalar::Scalar;
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashSet};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DemographicField {
    Gender,
    Ethnicity,
    Race,
    Age,
}

/// Extraction rule of one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureRule {
    /// Copied from the patient record, dummy-expanded.
    Demographic { field: DemographicField },
    /// Supplemental code match, exempt from truncation.
    FamilyHistory { codes: BTreeSet<String> },
    /// Diagnosis code match.
    Diagnosis { codes: BTreeSet<String> },
    /// Supplemental (V-code) match.
    Supplemental { codes: BTreeSet<String> },
    /// Procedure code match.
    Procedure { codes: BTreeSet<String> },
    /// Three-level lab encoding of the most recent pre-t0 result.
    LabThreeLevel { test: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDef {
    pub name: String,
    pub category: u8,
    pub rule: FeatureRule,
}

/// Ordered feature definitions; categories form a contiguous range from 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDictionary {
    pub features: Vec<FeatureDef>,
}

#[derive(Debug, Error, PartialEq)]
pub enum DictionaryError {
    #[error("duplicate feature name {0:?}")]
    DuplicateName(String),
    #[error("feature {name:?} has an empty code set")]
    EmptyCodeSet { name: String },
    #[error("categories must cover 1..=max contiguously; {missing} is missing")]
    CategoryGap { missing: u8 },
    #[error("category 0 is not allowed")]
    ZeroCategory,
}

impl FeatureDictionary {
    pub fn new(features: Vec<FeatureDef>) -> Result<Self, DictionaryError> {
        let dict = FeatureDictionary { features };
        dict.validate()?;
        Ok(dict)
    }

    pub fn validate(&self) -> Result<(), DictionaryError> {
        let mut names = HashSet::new();
        let mut categories = BTreeSet::new();
        for def in &self.features {
            if !names.insert(def.name.as_str()) {
                return Err(DictionaryError::DuplicateName(def.name.clone()));
            }
            if def.category == 0 {
                return Err(DictionaryError::ZeroCategory);
            }
            categories.insert(def.category);
            let codes = match &def.rule {
                FeatureRule::FamilyHistory { codes }
                | FeatureRule::Diagnosis { codes }
                | FeatureRule::Supplemental { codes }
                | FeatureRule::Procedure { codes } => Some(codes),
                _ => None,
            };
            if let Some(codes) = codes {
                if codes.is_empty() {
                    return Err(DictionaryError::EmptyCodeSet { name: def.name.clone() });
                }
            }
        }
        if let Some(&max) = categories.iter().max() {
            for c in 1..=max {
                if !categories.contains(&c) {
                    return Err(DictionaryError::CategoryGap { missing: c });
                }
            }
        }
        Ok(())
    }

    pub fn max_category(&self) -> u8 {
        self.features.iter().map(|d| d.category).max().unwrap_or(0)
    }

    /// All family-history codes, for the truncation exemption.
    pub fn family_history_codes(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for def in &self.features {
            if let FeatureRule::FamilyHistory { codes } = &def.rule {
                out.extend(codes.iter().cloned());
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dictionary serializes")
    }

    pub fn read_json(reader: impl Read) -> Result<Self, DictionaryIoError> {
        let dict: FeatureDictionary = serde_json::from_reader(reader)?;
        dict.validate()?;
        Ok(dict)
    }

    pub fn load(path: &Path) -> Result<Self, DictionaryIoError> {
        let file = std::fs::File::open(path)?;
        Self::read_json(std::io::BufReader::new(file))
    }

    pub fn save(&self, path: &Path) -> Result<(), DictionaryIoError> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(self.to_json().as_bytes())?;
        file.write_all(b"\n")?;
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum DictionaryIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] DictionaryError),
}

/// Three-level encoding of a lab test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabLevel {
    Unobserved,
    ObservedNormal,
    ObservedAbnormal,
}

/// Patient events split at `t0`. `pre_t0` holds everything strictly before
/// `t0`; `family_history` holds family-history supplemental codes from the
/// whole record.
#[derive(Debug, Clone, Default)]
pub struct TruncatedHistory<'a> {
    pub pre_t0: Vec<(NaiveDate, &'a CodeEvent)>,
    pub family_history: Vec<(NaiveDate, &'a CodeEvent)>,
}

pub fn truncate_history<'a>(
    events: impl IntoIterator<Item = (NaiveDate, &'a CodeEvent)>,
    t0: NaiveDate,
    family_history_codes: &BTreeSet<String>,
) -> TruncatedHistory<'a> {
    let mut out = TruncatedHistory::default();
    for (date, event) in events {
        if let CodeEvent::Supplemental { code } = event {
            if family_history_codes.contains(code) {
                out.family_history.push((date, event));
            }
        }
        if date < t0 {
            out.pre_t0.push((date, event));
        }
    }
    out
}

/// 1 iff any event matches the rule's kind and its code is in the rule's set.
pub fn extract_binary(events: &[(NaiveDate, &CodeEvent)], rule: &FeatureRule) -> bool {
    let (codes, want_dx, want_vcode, want_proc) = match rule {
        FeatureRule::Diagnosis { codes } => (codes, true, false, false),
        FeatureRule::FamilyHistory { codes } | FeatureRule::Supplemental { codes } => {
            (codes, false, true, false)
        }
        FeatureRule::Procedure { codes } => (codes, false, false, true),
        _ => return false,
    };
    events.iter().any(|(_, ev)| match ev {
        CodeEvent::Diagnosis { code } => want_dx && codes.contains(code),
        CodeEvent::Supplemental { code } => want_vcode && codes.contains(code),
        CodeEvent::Procedure { code } => want_proc && codes.contains(code),
        CodeEvent::Lab { .. } => false,
    })
}

/// Classify the most recent pre-t0 result of `test`: normal iff the value is
/// inside the reference range (a missing bound is open-ended). Same-date
/// duplicates resolve by the largest (value, low, high), so the outcome does
/// not depend on input order.
pub fn extract_lab_level(events: &[(NaiveDate, &CodeEvent)], test: &str) -> LabLevel {
    let mut best: Option<(NaiveDate, f64, f64, f64)> = None;
    for (date, ev) in events {
        let CodeEvent::Lab { code, value, low, high } = ev else { continue };
        if code != test {
            continue;
        }
        let key = (*date, *value, low.unwrap_or(f64::NEG_INFINITY), high.unwrap_or(f64::INFINITY));
        let replace = match &best {
            None => true,
            Some(b) => key
                .0
                .cmp(&b.0)
                .then(key.1.total_cmp(&b.1))
                .then(key.2.total_cmp(&b.2))
                .then(key.3.total_cmp(&b.3))
                .is_gt(),
        };
        if replace {
            best = Some(key);
        }
    }
    match best {
        None => LabLevel::Unobserved,
        Some((_, value, low, high)) => {
            if value >= low && value <= high {
                LabLevel::ObservedNormal
            } else {
                LabLevel::ObservedAbnormal
            }
        }
    }
}

/// Raw (pre-dummy) value of one feature for one patient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RawValue {
    Binary(bool),
    Gender(Gender),
    Race(Race),
    Ethnicity(Ethnicity),
    AgeYears(i32),
    Lab(LabLevel),
}

/// Column names a feature expands to, in emission order. Reference levels
/// (male, White, non-Hispanic, observed-abnormal) get no column.
pub fn column_names(def: &FeatureDef) -> Vec<String> {
    match &def.rule {
        FeatureRule::Demographic { field } => match field {
            DemographicField::Gender => vec!["gender:F".to_string()],
            DemographicField::Ethnicity => vec!["ethnicity:Hispanic".to_string()],
            DemographicField::Race => vec![
                "race:Black".to_string(),
                "race:Asian".to_string(),
                "race:NativeAmerican".to_string(),
                "race:Other".to_string(),
            ],
            DemographicField::Age => vec!["age".to_string()],
        },
        FeatureRule::LabThreeLevel { .. } => vec![
            format!("{}:Unobserved", def.name),
            format!("{}:ObservedNormal", def.name),
        ],
        _ => vec![def.name.clone()],
    }
}

/// Dummy-expand one raw value into named columns.
pub fn expand_dummies<S: Scalar>(def: &FeatureDef, value: &RawValue) -> Vec<(String, S)> {
    column_names(def).into_iter().zip(expand_values::<S>(value)).collect()
}

fn expand_values<S: Scalar>(value: &RawValue) -> Vec<S> {
    let one = S::one;
    let zero = S::zero;
    let ind = |b: bool| if b { one() } else { zero() };
    match value {
        RawValue::Binary(b) => vec![ind(*b)],
        RawValue::Gender(g) => vec![ind(*g == Gender::F)],
        RawValue::Ethnicity(e) => vec![ind(*e == Ethnicity::Hispanic)],
        RawValue::Race(r) => vec![
            ind(*r == Race::Black),
            ind(*r == Race::Asian),
            ind(*r == Race::NativeAmerican),
            ind(*r == Race::Other),
        ],
        RawValue::AgeYears(a) => vec![S::from_i32(*a).expect("age converts")],
        RawValue::Lab(level) => vec![
            ind(*level == LabLevel::Unobserved),
            ind(*level == LabLevel::ObservedNormal),
        ],
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("empty cohort")]
    EmptyCohort,
    #[error("feature set {requested} out of range 1..={max}")]
    InvalidFeatureSet { requested: u8, max: u8 },
    #[error("patient {0} not present in the dataset")]
    UnknownPatient(PatientId),
    #[error("patient {0} is missing demographic fields required by the dictionary")]
    IncompleteDemographics(PatientId),
}

/// Dense labeled design matrix. Rows follow cohort order; all columns are
/// 0/1 indicators except `age`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix<S> {
    row_ids: Vec<PatientId>,
    column_names: Vec<String>,
    values: Vec<S>,
    labels: Vec<u8>,
}

impl<S: Scalar> DesignMatrix<S> {
    pub fn from_parts(
        row_ids: Vec<PatientId>,
        column_names: Vec<String>,
        values: Vec<S>,
        labels: Vec<u8>,
    ) -> Self {
        assert_eq!(row_ids.len(), labels.len(), "rows and labels align");
        assert_eq!(values.len(), row_ids.len() * column_names.len(), "dense shape");
        DesignMatrix { row_ids, column_names, values, labels }
    }

    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.column_names.len()
    }

    pub fn row_ids(&self) -> &[PatientId] {
        &self.row_ids
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[S] {
        let w = self.n_cols();
        &self.values[i * w..(i + 1) * w]
    }

    pub fn value(&self, row: usize, col: usize) -> S {
        self.values[row * self.n_cols() + col]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    /// New matrix restricted to `rows` (by index), preserving order.
    pub fn select_rows(&self, rows: &[usize]) -> DesignMatrix<S> {
        let mut values = Vec::with_capacity(rows.len() * self.n_cols());
        let mut row_ids = Vec::with_capacity(rows.len());
        let mut labels = Vec::with_capacity(rows.len());
        for &r in rows {
            values.extend_from_slice(self.row(r));
            row_ids.push(self.row_ids[r].clone());
            labels.push(self.labels[r]);
        }
        DesignMatrix { row_ids, column_names: self.column_names.clone(), values, labels }
    }

    /// New matrix restricted to `cols` (by index), preserving order.
    pub fn select_columns(&self, cols: &[usize]) -> DesignMatrix<S> {
        let mut values = Vec::with_capacity(self.n_rows() * cols.len());
        for r in 0..self.n_rows() {
            let row = self.row(r);
            for &c in cols {
                values.push(row[c]);
            }
        }
        DesignMatrix {
            row_ids: self.row_ids.clone(),
            column_names: cols.iter().map(|&c| self.column_names[c].clone()).collect(),
            values,
            labels: self.labels.clone(),
        }
    }

    /// Fraction of rows labeled 1.
    pub fn label_mean(&self) -> S {
        if self.labels.is_empty() {
            return S::zero();
        }
        let ones = self.labels.iter().filter(|&&l| l == 1).count();
        S::from_count(ones) / S::from_count(self.labels.len())
    }

    /// Per-column (case, control) counts of rows with a nonzero value.
    pub fn column_counts(&self) -> Vec<(u64, u64)> {
        let mut counts = vec![(0u64, 0u64); self.n_cols()];
        for r in 0..self.n_rows() {
            let row = self.row(r);
            for (c, &v) in row.iter().enumerate() {
                if v != S::zero() {
                    if self.labels[r] == 1 {
                        counts[c].0 += 1;
                    } else {
                        counts[c].1 += 1;
                    }
                }
            }
        }
        counts
    }

    /// Write `design.csv`: header `patient_id,label,<col>...`, one row per
    /// patient, indicator values rendered as integers.
    pub fn write_csv(&self, writer: impl Write) -> Result<(), DesignIoError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["patient_id".to_string(), "label".to_string()];
        header.extend(self.column_names.iter().cloned());
        w.write_record(&header)?;
        for r in 0..self.n_rows() {
            let mut record = vec![self.row_ids[r].to_string(), self.labels[r].to_string()];
            record.extend(self.row(r).iter().map(|v| v.to_string()));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(reader: impl Read) -> Result<DesignMatrix<S>, DesignIoError> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        if header.len() < 2 || &header[0] != "patient_id" || &header[1] != "label" {
            return Err(DesignIoError::BadHeader);
        }
        let column_names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
        let mut row_ids = Vec::new();
        let mut labels = Vec::new();
        let mut values = Vec::new();
        for record in r.records() {
            let record = record?;
            if record.len() != header.len() {
                return Err(DesignIoError::RaggedRow { row: row_ids.len() + 1 });
            }
            row_ids.push(PatientId::new(&record[0]));
            let label: u8 = record[1].parse().map_err(|_| DesignIoError::BadLabel {
                row: row_ids.len(),
                value: record[1].to_string(),
            })?;
            if label > 1 {
                return Err(DesignIoError::BadLabel { row: row_ids.len(), value: record[1].into() });
            }
            labels.push(label);
            for field in record.iter().skip(2) {
                let v: f64 = field.parse().map_err(|_| DesignIoError::BadValue {
                    row: row_ids.len(),
                    value: field.to_string(),
                })?;
                values.push(S::from_f64_lossy(v));
            }
        }
        Ok(DesignMatrix { row_ids, column_names, values, labels })
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), DesignIoError> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn load_csv(path: &Path) -> Result<DesignMatrix<S>, DesignIoError> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

#[derive(Debug, Error)]
pub enum DesignIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("design csv must start with patient_id,label")]
    BadHeader,
    #[error("row {row}: wrong number of fields")]
    RaggedRow { row: usize },
    #[error("row {row}: bad label {value:?}")]
    BadLabel { row: usize, value: String },
    #[error("row {row}: bad value {value:?}")]
    BadValue { row: usize, value: String },
}

/// Build the design matrix for all dictionary features with
/// `category <= feature_set`, over the cohort rows in assignment order.
pub fn build_design_matrix<S: Scalar>(
    assignments: &[CohortAssignment],
    dataset: &Dataset,
    dictionary: &FeatureDictionary,
    feature_set: u8,
) -> Result<DesignMatrix<S>, FeatureError> {
    if assignments.is_empty() {
        return Err(FeatureError::EmptyCohort);
    }
    let max = dictionary.max_category();
    if feature_set == 0 || feature_set > max {
        return Err(FeatureError::InvalidFeatureSet { requested: feature_set, max });
    }
    let defs: Vec<&FeatureDef> =
        dictionary.features.iter().filter(|d| d.category <= feature_set).collect();
    let column_names: Vec<String> = defs.iter().flat_map(|d| column_names(d)).collect();
    let fh_codes = dictionary.family_history_codes();

    let mut values = Vec::with_capacity(assignments.len() * column_names.len());
    let mut row_ids = Vec::with_capacity(assignments.len());
    let mut labels = Vec::with_capacity(assignments.len());
    for a in assignments {
        let patient = dataset
            .patient(&a.patient_id)
            .ok_or_else(|| FeatureError::UnknownPatient(a.patient_id.clone()))?;
        let events: Vec<(NaiveDate, &CodeEvent)> = dataset
            .encounters_of(&a.patient_id)
            .flat_map(|e| e.events.iter().map(move |ev| (e.date, ev)))
            .collect();
        let history = truncate_history(events, a.t0, &fh_codes);
        for def in &defs {
            let raw = match &def.rule {
                FeatureRule::Demographic { field } => match field {
                    DemographicField::Gender => RawValue::Gender(
                        patient.gender.ok_or_else(|| {
                            FeatureError::IncompleteDemographics(a.patient_id.clone())
                        })?,
                    ),
                    DemographicField::Ethnicity => RawValue::Ethnicity(
                        patient.ethnicity.ok_or_else(|| {
                            FeatureError::IncompleteDemographics(a.patient_id.clone())
                        })?,
                    ),
                    DemographicField::Race => RawValue::Race(patient.race.ok_or_else(|| {
                        FeatureError::IncompleteDemographics(a.patient_id.clone())
                    })?),
                    DemographicField::Age => RawValue::AgeYears(
                        patient.age_at(a.t0).ok_or_else(|| {
                            FeatureError::IncompleteDemographics(a.patient_id.clone())
                        })?,
                    ),
                },
                FeatureRule::FamilyHistory { .. } => {
                    RawValue::Binary(extract_binary(&history.family_history, &def.rule))
                }
                FeatureRule::Diagnosis { .. }
                | FeatureRule::Supplemental { .. }
                | FeatureRule::Procedure { .. } => {
                    RawValue::Binary(extract_binary(&history.pre_t0, &def.rule))
                }
                FeatureRule::LabThreeLevel { test } => {
                    RawValue::Lab(extract_lab_level(&history.pre_t0, test))
                }
            };
            values.extend(expand_values::<S>(&raw));
        }
        row_ids.push(a.patient_id.clone());
        labels.push(if a.label == Label::Case { 1 } else { 0 });
    }
    Ok(DesignMatrix { row_ids, column_names, values, labels })
}

fn codes(list: &[&str]) -> BTreeSet<String> {
    list.iter().map(|s| s.to_string()).collect()
}

/// The shipped dictionary: nine ordered categories of indicators plus the
/// three-level blood tests. Code sets are placeholders; real deployments
/// supply their own mapping via `features.json`.
pub fn default_dictionary() -> FeatureDictionary {
    use DemographicField as DF;
    use FeatureRule as FR;
    let mut features = Vec::new();
    let mut push = |name: &str, category: u8, rule: FeatureRule| {
        features.push(FeatureDef { name: name.to_string(), category, rule });
    };

    // Demographics (1)
    push("Gender", 1, FR::Demographic { field: DF::Gender });
    push("Ethnicity", 1, FR::Demographic { field: DF::Ethnicity });
    push("Race", 1, FR::Demographic { field: DF::Race });
    push("Age", 1, FR::Demographic { field: DF::Age });
    // Family History (1)
    push("MS (FH)", 1, FR::FamilyHistory { codes: codes(&["V17.20"]) });
    push("Mental Illness (FH)", 1, FR::FamilyHistory { codes: codes(&["V17.00"]) });
    push("Colon Cancer (FH)", 1, FR::FamilyHistory { codes: codes(&["V16.00"]) });
    push("Breast Cancer (FH)", 1, FR::FamilyHistory { codes: codes(&["V16.30"]) });
    push("Lupus (FH)", 1, FR::FamilyHistory { codes: codes(&["V17.70"]) });
    push("Thyroiditis (FH)", 1, FR::FamilyHistory { codes: codes(&["V18.10"]) });
    push("Diabetes (FH)", 1, FR::FamilyHistory { codes: codes(&["V18.00"]) });
    push("Inflammatory Bowel (FH)", 1, FR::FamilyHistory { codes: codes(&["V18.50"]) });
    // Autoimmune (2)
    push("Inflammatory Bowel", 2, FR::Diagnosis { codes: codes(&["555", "556"]) });
    push("Celiac", 2, FR::Diagnosis { codes: codes(&["579.0"]) });
    push("Uveitis", 2, FR::Diagnosis { codes: codes(&["364.3"]) });
    push("Thyroiditis", 2, FR::Diagnosis { codes: codes(&["245.2"]) });
    push("Lupus", 2, FR::Diagnosis { codes: codes(&["710.0"]) });
    push("Rheumatoid Arthritis", 2, FR::Diagnosis { codes: codes(&["714.0"]) });
    push("Sjogren's Syndrome", 2, FR::Diagnosis { codes: codes(&["710.2"]) });
    push("Bell's Palsy", 2, FR::Diagnosis { codes: codes(&["351.0"]) });
    push("Guillain-Barre", 2, FR::Diagnosis { codes: codes(&["357.0"]) });
    push("Diabetes", 2, FR::Diagnosis { codes: codes(&["250"]) });
    push("Vitamin D Deficiency", 2, FR::Diagnosis { codes: codes(&["268.9"]) });
    // Microbial (3)
    push("Measles, mumps, rubella", 3, FR::Diagnosis { codes: codes(&["055", "072", "056"]) });
    push("Epstein Barr Virus", 3, FR::Diagnosis { codes: codes(&["075"]) });
    // Mental Illness (4)
    push("Bipolar", 4, FR::Diagnosis { codes: codes(&["296.4"]) });
    push("Schizophrenia", 4, FR::Diagnosis { codes: codes(&["295"]) });
    // Cancer (5)
    push("Lymphoma", 5, FR::Diagnosis { codes: codes(&["202.8"]) });
    push("Oral Cancer", 5, FR::Diagnosis { codes: codes(&["145"]) });
    push("Breast Cancer", 5, FR::Diagnosis { codes: codes(&["174"]) });
    push("Colon Cancer", 5, FR::Diagnosis { codes: codes(&["153"]) });
    // Vaccine (6)
    push("Hepatitis vaccine", 6, FR::Supplemental { codes: codes(&["V05.3"]) });
    push("DTP vaccine", 6, FR::Supplemental { codes: codes(&["V06.1"]) });
    push("Polio vaccine", 6, FR::Supplemental { codes: codes(&["V04.0"]) });
    push("Influenza vaccine", 6, FR::Supplemental { codes: codes(&["V04.81"]) });
    push("MMR vaccine", 6, FR::Supplemental { codes: codes(&["V06.4"]) });
    push("Varicella vaccine", 6, FR::Supplemental { codes: codes(&["V05.4"]) });
    push("Meningococcal vaccine", 6, FR::Supplemental { codes: codes(&["V03.89"]) });
    push("Pneumococcal vaccine", 6, FR::Supplemental { codes: codes(&["V03.82"]) });
    push("HIB vaccine", 6, FR::Supplemental { codes: codes(&["V03.81"]) });
    push("HPV vaccine", 6, FR::Supplemental { codes: codes(&["V04.89"]) });
    // Reproductive (7)
    push("Hysterectomy", 7, FR::Supplemental { codes: codes(&["V88.01"]) });
    push("Oral contraceptive", 7, FR::Supplemental { codes: codes(&["V25.01"]) });
    push("Estrogen replacement", 7, FR::Supplemental { codes: codes(&["V07.4"]) });
    // MRI Scans + Obesity (8)
    push("Obesity", 8, FR::Diagnosis { codes: codes(&["278.00"]) });
    push("Abnormal brain MRI", 8, FR::Diagnosis { codes: codes(&["794.09"]) });
    push("Brain MRI", 8, FR::Procedure { codes: codes(&["70551"]) });
    push("Cervical spine MRI", 8, FR::Procedure { codes: codes(&["72141"]) });
    push("Thoracic spine MRI", 8, FR::Procedure { codes: codes(&["72146"]) });
    // Blood Tests (9)
    push("ESR", 9, FR::LabThreeLevel { test: "ESR".into() });
    push("Lyme", 9, FR::LabThreeLevel { test: "LYME".into() });
    push("B12", 9, FR::LabThreeLevel { test: "B12".into() });
    push("ANA panel", 9, FR::LabThreeLevel { test: "ANA".into() });
    push("Anti-cardiolipin antibody", 9, FR::LabThreeLevel { test: "ACL".into() });
    push("Zinc", 9, FR::LabThreeLevel { test: "ZINC".into() });
    push("CSF exam", 9, FR::LabThreeLevel { test: "CSF".into() });

    FeatureDictionary::new(features).expect("default dictionary is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emr::parse_encounter;

    fn date(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn dx(code: &str) -> CodeEvent {
        CodeEvent::Diagnosis { code: code.into() }
    }

    #[test]
    fn default_dictionary_is_valid_and_has_nine_categories() {
        let dict = default_dictionary();
        assert_eq!(dict.max_category(), 9);
        let cols: usize =
            dict.features.iter().map(|d| column_names(d).len()).sum();
        assert_eq!(cols, 66);
    }

    #[test]
    fn dictionary_json_round_trips() {
        let dict = default_dictionary();
        let json = dict.to_json();
        let parsed = FeatureDictionary::read_json(json.as_bytes()).unwrap();
        assert_eq!(dict, parsed);
    }

    #[test]
    fn truncation_is_strict_and_exempts_family_history() {
        let fh = codes(&["V17.20"]);
        let d1 = dx("250");
        let d2 = dx("710.0");
        let d3 = dx("153");
        let v = CodeEvent::Supplemental { code: "V17.20".into() };
        let t0 = date("2010-06-01");
        let events = vec![
            (date("2010-05-31"), &d1),
            (t0, &d2),                 // exactly on t0: excluded
            (date("2011-04-01"), &d3), // after: excluded
            (date("2011-04-02"), &v),  // family history after t0: kept
        ];
        let h = truncate_history(events, t0, &fh);
        assert_eq!(h.pre_t0.len(), 1);
        assert_eq!(h.pre_t0[0].1, &d1);
        assert_eq!(h.family_history.len(), 1);
    }

    #[test]
    fn binary_extraction_matches_kind_and_code() {
        let rule = FeatureRule::Diagnosis { codes: codes(&["340"]) };
        let hit = dx("340");
        let proc = CodeEvent::Procedure { code: "340".into() };
        let events = vec![(date("2010-01-01"), &hit)];
        assert!(extract_binary(&events, &rule));
        let events = vec![(date("2010-01-01"), &proc)];
        assert!(!extract_binary(&events, &rule)); // kind mismatch
        assert!(!extract_binary(&[], &rule));
    }

    fn lab(code: &str, value: f64) -> CodeEvent {
        CodeEvent::Lab { code: code.into(), value, low: Some(200.0), high: Some(900.0) }
    }

    #[test]
    fn lab_levels_follow_most_recent_result() {
        assert_eq!(extract_lab_level(&[], "B12"), LabLevel::Unobserved);
        let normal = lab("B12", 500.0);
        let abnormal = lab("B12", 100.0);
        let events = vec![(date("2010-01-01"), &normal)];
        assert_eq!(extract_lab_level(&events, "B12"), LabLevel::ObservedNormal);
        let events = vec![(date("2010-01-01"), &abnormal)];
        assert_eq!(extract_lab_level(&events, "B12"), LabLevel::ObservedAbnormal);
        // Most recent wins regardless of input order.
        let events = vec![(date("2010-02-01"), &abnormal), (date("2010-01-01"), &normal)];
        assert_eq!(extract_lab_level(&events, "B12"), LabLevel::ObservedAbnormal);
        let events = vec![(date("2010-01-01"), &normal), (date("2010-02-01"), &abnormal)];
        assert_eq!(extract_lab_level(&events, "B12"), LabLevel::ObservedAbnormal);
    }

    #[test]
    fn dummy_expansion_uses_reference_levels() {
        let race = FeatureDef {
            name: "Race".into(),
            category: 1,
            rule: FeatureRule::Demographic { field: DemographicField::Race },
        };
        let cols = expand_dummies::<f64>(&race, &RawValue::Race(Race::Asian));
        assert_eq!(
            cols,
            vec![
                ("race:Black".to_string(), 0.0),
                ("race:Asian".to_string(), 1.0),
                ("race:NativeAmerican".to_string(), 0.0),
                ("race:Other".to_string(), 0.0),
            ]
        );
        let gender = FeatureDef {
            name: "Gender".into(),
            category: 1,
            rule: FeatureRule::Demographic { field: DemographicField::Gender },
        };
        assert_eq!(
            expand_dummies::<f64>(&gender, &RawValue::Gender(Gender::F)),
            vec![("gender:F".to_string(), 1.0)]
        );
        let b12 = FeatureDef {
            name: "B12".into(),
            category: 9,
            rule: FeatureRule::LabThreeLevel { test: "B12".into() },
        };
        // Reference level: both dummies zero.
        assert_eq!(
            expand_dummies::<f64>(&b12, &RawValue::Lab(LabLevel::ObservedAbnormal)),
            vec![("B12:Unobserved".to_string(), 0.0), ("B12:ObservedNormal".to_string(), 0.0)]
        );
    }

    fn tiny_cohort() -> (Vec<CohortAssignment>, Dataset) {
        let p1 = crate::emr::parse_patient(
            r#"{"id":"p1","birth_date":"1970-01-01","gender":"F","race":"White","ethnicity":"NonHispanic"}"#,
        )
        .unwrap();
        let p2 = crate::emr::parse_patient(
            r#"{"id":"p2","birth_date":"1972-01-01","gender":"M","race":"Asian","ethnicity":"Hispanic"}"#,
        )
        .unwrap();
        let e1 = parse_encounter(
            r#"{"patient_id":"p1","date":"2009-01-01","department":"Primary Care","events":[{"kind":"dx","code":"710.0"}]}"#,
        )
        .unwrap();
        let e2 = parse_encounter(
            r#"{"patient_id":"p2","date":"2009-02-01","department":"Primary Care","events":[]}"#,
        )
        .unwrap();
        let ds = Dataset::new(vec![p1, p2], vec![e1, e2]);
        let assignments = vec![
            CohortAssignment {
                patient_id: PatientId::from("p1"),
                label: Label::Case,
                t0: date("2010-01-01"),
                matched_case_id: None,
            },
            CohortAssignment {
                patient_id: PatientId::from("p2"),
                label: Label::Control,
                t0: date("2010-01-01"),
                matched_case_id: Some(PatientId::from("p1")),
            },
        ];
        (assignments, ds)
    }

    #[test]
    fn feature_sets_are_cumulative() {
        let (assignments, ds) = tiny_cohort();
        let dict = default_dictionary();
        let m1 = build_design_matrix::<f64>(&assignments, &ds, &dict, 1).unwrap();
        for k in 2..=9u8 {
            let mk = build_design_matrix::<f64>(&assignments, &ds, &dict, k).unwrap();
            let prev = build_design_matrix::<f64>(&assignments, &ds, &dict, k - 1).unwrap();
            assert!(mk.n_cols() >= prev.n_cols());
            assert_eq!(&mk.column_names()[..prev.n_cols()], prev.column_names());
        }
        // Set 1: demographics + family history only.
        assert_eq!(m1.n_cols(), 7 + 8);
        assert_eq!(m1.labels(), &[1, 0]);
        // Lupus dx shows up from set 2 on.
        let m2 = build_design_matrix::<f64>(&assignments, &ds, &dict, 2).unwrap();
        let lupus = m2.column_index("Lupus").unwrap();
        assert_eq!(m2.value(0, lupus), 1.0);
        assert_eq!(m2.value(1, lupus), 0.0);
    }

    #[test]
    fn invalid_feature_set_is_rejected() {
        let (assignments, ds) = tiny_cohort();
        let dict = default_dictionary();
        assert_eq!(
            build_design_matrix::<f64>(&assignments, &ds, &dict, 0).unwrap_err(),
            FeatureError::InvalidFeatureSet { requested: 0, max: 9 }
        );
        assert!(build_design_matrix::<f64>(&assignments, &ds, &dict, 10).is_err());
        assert_eq!(
            build_design_matrix::<f64>(&[], &ds, &dict, 1).unwrap_err(),
            FeatureError::EmptyCohort
        );
    }

    #[test]
    fn design_csv_round_trips() {
        let (assignments, ds) = tiny_cohort();
        let dict = default_dictionary();
        let m = build_design_matrix::<f64>(&assignments, &ds, &dict, 9).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let parsed = DesignMatrix::<f64>::read_csv(buf.as_slice()).unwrap();
        assert_eq!(m, parsed);
    }
}
