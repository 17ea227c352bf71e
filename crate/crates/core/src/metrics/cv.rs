//! Stratified k-fold cross validation with optional per-fold stepwise
//! selection.
//!
//! Selection runs inside each training fold, never on the full matrix, so the
//! per-fold selected column sets are honest out-of-sample choices.

use super::roc::{roc_auc, RocError};
use crate::emr::PatientId;
use crate::features::DesignMatrix;
use crate::glm::{fit_logistic, predict_design, FitOptions, GlmError, LogisticModel};
use crate::rng::substream;
use crate::scalar::Scalar;
use crate::stepwise::{backward_select, forward_select};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selector {
    None,
    Forward,
    Backward,
}

#[derive(Debug, Error, PartialEq)]
pub enum CvError {
    #[error("cannot split {n} samples into {k} folds")]
    TooFewSamples { n: usize, k: usize },
    #[error(transparent)]
    Glm(#[from] GlmError),
    #[error(transparent)]
    Roc(#[from] RocError),
}

/// One fold's fitted model and held-out performance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct FoldResult<S: Scalar> {
    pub model: LogisticModel<S>,
    pub auc: S,
    pub selected_columns: Vec<String>,
}

/// Held-out score of one cohort member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledScore<S> {
    pub patient_id: PatientId,
    pub score: S,
    pub label: u8,
}

/// `cv_report.json` payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct CvReport<S: Scalar> {
    pub folds: usize,
    pub seed: u64,
    pub selector: Selector,
    pub per_fold: Vec<FoldResult<S>>,
    pub auc_mean: S,
    pub auc_std: S,
    /// Every row scored exactly once, by the fold that held it out.
    pub pooled_scores: Vec<PooledScore<S>>,
    /// (case, control) carrier counts per column over the full design.
    pub feature_counts: BTreeMap<String, (u64, u64)>,
}

impl<S: Scalar> CvReport<S> {
    pub fn case_total(&self) -> u64 {
        self.pooled_scores.iter().filter(|p| p.label == 1).count() as u64
    }

    pub fn control_total(&self) -> u64 {
        self.pooled_scores.iter().filter(|p| p.label == 0).count() as u64
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Stratified split of `0..n` into `k` disjoint index sets.
///
/// Each class is shuffled under its own substream and the concatenated order
/// is dealt round-robin, so fold sizes differ by at most one both overall and
/// within each class.
pub fn kfold_split(
    n: usize,
    k: usize,
    labels: &[u8],
    seed: u64,
) -> Result<Vec<Vec<usize>>, CvError> {
    if k == 0 || k > n || labels.len() != n {
        return Err(CvError::TooFewSamples { n, k });
    }
    let mut class0: Vec<usize> = (0..n).filter(|&i| labels[i] != 1).collect();
    let mut class1: Vec<usize> = (0..n).filter(|&i| labels[i] == 1).collect();
    class0.shuffle(&mut substream(seed, "kfold/class0"));
    class1.shuffle(&mut substream(seed, "kfold/class1"));
    let mut folds = vec![Vec::with_capacity(n / k + 1); k];
    for (pos, idx) in class0.into_iter().chain(class1).enumerate() {
        folds[pos % k].push(idx);
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(folds)
}

fn sample_std<S: Scalar>(values: &[S]) -> S {
    if values.len() < 2 {
        return S::zero();
    }
    let n = S::from_count(values.len());
    let mean = values.iter().copied().sum::<S>() / n;
    let ss = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>();
    (ss / (n - S::one())).sqrt()
}

/// Per fold: select on the training rows, fit, score the held-out rows.
pub fn cross_validate<S: Scalar>(
    design: &DesignMatrix<S>,
    selector: Selector,
    k: usize,
    seed: u64,
    options: &FitOptions<S>,
) -> Result<CvReport<S>, CvError> {
    let n = design.n_rows();
    if k < 2 {
        return Err(CvError::TooFewSamples { n, k });
    }
    let folds = kfold_split(n, k, design.labels(), seed)?;

    let fold_outputs: Vec<Result<(FoldResult<S>, Vec<PooledScore<S>>), CvError>> = folds
        .par_iter()
        .map(|test_rows| {
            let in_test: Vec<bool> = {
                let mut mask = vec![false; n];
                for &r in test_rows {
                    mask[r] = true;
                }
                mask
            };
            let train_rows: Vec<usize> = (0..n).filter(|&r| !in_test[r]).collect();
            let train = design.select_rows(&train_rows);
            let (model, selected) = match selector {
                Selector::None => {
                    let model = fit_logistic(&train, options)?;
                    (model, design.column_names().to_vec())
                }
                Selector::Forward => {
                    let trace = forward_select(&train, options)?;
                    let cols: Vec<String> = trace.selected_columns.iter().cloned().collect();
                    (trace.final_model, cols)
                }
                Selector::Backward => {
                    let trace = backward_select(&train, options)?;
                    let cols: Vec<String> = trace.selected_columns.iter().cloned().collect();
                    (trace.final_model, cols)
                }
            };
            let test = design.select_rows(test_rows);
            let scores = predict_design(&model, &test)?;
            let roc = roc_auc(&scores, test.labels())?;
            let pooled = test_rows
                .iter()
                .zip(&scores)
                .map(|(&r, &score)| PooledScore {
                    patient_id: design.row_ids()[r].clone(),
                    score,
                    label: design.labels()[r],
                })
                .collect();
            Ok((
                FoldResult { model, auc: roc.auc, selected_columns: selected },
                pooled,
            ))
        })
        .collect();

    let mut per_fold = Vec::with_capacity(k);
    let mut pooled_scores = Vec::with_capacity(n);
    for out in fold_outputs {
        let (fold, pooled) = out?;
        per_fold.push(fold);
        pooled_scores.extend(pooled);
    }
    let aucs: Vec<S> = per_fold.iter().map(|f| f.auc).collect();
    let auc_mean = aucs.iter().copied().sum::<S>() / S::from_count(aucs.len());
    let auc_std = sample_std(&aucs);

    let feature_counts = design
        .column_names()
        .iter()
        .cloned()
        .zip(design.column_counts())
        .collect();

    Ok(CvReport {
        folds: k,
        seed,
        selector,
        per_fold,
        auc_mean,
        auc_std,
        pooled_scores,
        feature_counts,
    })
}
