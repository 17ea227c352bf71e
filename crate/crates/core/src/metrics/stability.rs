//! Coefficient stability over cross-validation folds.
//!
//! Mirrors the classic reporting table: features picked in enough folds with
//! a large enough mean coefficient, with carrier counts, case/control ratio,
//! and a Yates chi-square p-value.

use super::contingency::{case_control_ratio, chi_square_yates, ContingencyTable};
use super::cv::FoldResult;
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow<S> {
    pub feature: String,
    pub beta_mean: S,
    pub beta_std: S,
    pub case_count: u64,
    pub control_count: u64,
    /// `None` when no patient carries the feature (0/0).
    pub ratio: Option<S>,
    pub p_value: S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientStability<S> {
    pub rows: Vec<StabilityRow<S>>,
    pub min_folds: usize,
    pub beta_magnitude: S,
}

/// Build the stability table from per-fold models.
///
/// A feature qualifies when it was selected in at least `min_folds` folds and
/// the mean of its coefficient over those folds exceeds `beta_magnitude` in
/// absolute value. Rows sort by mean coefficient, descending.
pub fn coefficient_stability<S: Scalar>(
    per_fold: &[FoldResult<S>],
    feature_counts: &BTreeMap<String, (u64, u64)>,
    case_total: u64,
    control_total: u64,
    min_folds: usize,
    beta_magnitude: S,
) -> CoefficientStability<S> {
    let mut betas: BTreeMap<&str, Vec<S>> = BTreeMap::new();
    for fold in per_fold {
        for name in &fold.selected_columns {
            if let Some(beta) = fold.model.coefficient(name) {
                betas.entry(name).or_default().push(beta);
            }
        }
    }

    let mut rows = Vec::new();
    for (name, values) in betas {
        if values.len() < min_folds {
            continue;
        }
        let n = S::from_count(values.len());
        let mean = values.iter().copied().sum::<S>() / n;
        if mean.abs() <= beta_magnitude {
            continue;
        }
        let std = if values.len() < 2 {
            S::zero()
        } else {
            let ss = values.iter().map(|&b| (b - mean) * (b - mean)).sum::<S>();
            (ss / (n - S::one())).sqrt()
        };
        let &(case_count, control_count) = feature_counts.get(name).unwrap_or(&(0, 0));
        let table =
            ContingencyTable::from_counts(case_count, case_total, control_count, control_total);
        // A margin of zero means the association is not measurable; report
        // p = 1 rather than dropping the row.
        let p_value = chi_square_yates(&table).map(|(_, p)| p).unwrap_or_else(|_| S::one());
        rows.push(StabilityRow {
            feature: name.to_string(),
            beta_mean: mean,
            beta_std: std,
            case_count,
            control_count,
            ratio: case_control_ratio(&table),
            p_value,
        });
    }
    rows.sort_by(|a, b| {
        b.beta_mean
            .partial_cmp(&a.beta_mean)
            .expect("finite coefficients")
            .then_with(|| a.feature.cmp(&b.feature))
    });
    CoefficientStability { rows, min_folds, beta_magnitude }
}

impl<S: Scalar> CoefficientStability<S> {
    /// Write `stability_table.csv`. With `alpha` set, append the significance
    /// filter flag column (`p < alpha`).
    pub fn write_csv(&self, writer: impl Write, alpha: Option<S>) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header =
            vec!["feature", "beta_mean", "beta_std", "case", "control", "ratio", "p_value"];
        if alpha.is_some() {
            header.push("significant");
        }
        w.write_record(&header)?;
        for row in &self.rows {
            let ratio = match row.ratio {
                None => "undefined".to_string(),
                Some(r) if r == S::infinity() => "inf".to_string(),
                Some(r) => r.to_string(),
            };
            let mut record = vec![
                row.feature.clone(),
                row.beta_mean.to_string(),
                row.beta_std.to_string(),
                row.case_count.to_string(),
                row.control_count.to_string(),
                ratio,
                row.p_value.to_string(),
            ];
            if let Some(alpha) = alpha {
                record.push((row.p_value < alpha).to_string());
            }
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }
}
