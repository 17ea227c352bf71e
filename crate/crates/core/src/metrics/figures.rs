//! Figure-data tables derived from per-feature-set CV reports.
//!
//! Consumers plot the emitted CSVs; nothing here renders.

use super::cv::CvReport;
use super::kde::kde_2d;
use super::roc::roc_auc;
use super::sweep::{default_grid, sens_spec_intersection, threshold_sweep, SweepError};
use crate::scalar::Scalar;
use crate::stepwise::Direction;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use thiserror::Error;

/// Forward and backward CV results for one cumulative feature set.
#[derive(Debug, Clone)]
pub struct FeatureSetReports<S: Scalar> {
    pub feature_set: u8,
    pub forward: CvReport<S>,
    pub backward: CvReport<S>,
}

#[derive(Debug, Error, PartialEq)]
pub enum FigureError {
    #[error("no feature-set reports supplied")]
    Empty,
    #[error("feature set {feature_set} was evaluated on a different cohort")]
    MisalignedCohorts { feature_set: u8 },
    #[error(transparent)]
    Roc(#[from] super::roc::RocError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AucRow<S> {
    pub feature_set: u8,
    pub direction: Direction,
    pub auc_mean: S,
    pub auc_std: S,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionCountRow {
    pub feature_set: u8,
    pub direction: Direction,
    pub fold: usize,
    pub selected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CasePairRow<S> {
    pub from_set: u8,
    pub to_set: u8,
    pub patient_id: String,
    pub prev_prob: S,
    pub next_prob: S,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KdeRow<S> {
    pub from_set: u8,
    pub to_set: u8,
    pub x: S,
    pub y: S,
    pub density: S,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxRow<S> {
    pub label: &'static str,
    pub whisker_low: S,
    pub q1: S,
    pub median: S,
    pub q3: S,
    pub whisker_high: S,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocPointRow<S> {
    pub feature_set: u8,
    pub fpr: S,
    pub tpr: S,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow<S> {
    pub feature_set: u8,
    pub threshold: S,
    pub sensitivity: S,
    pub specificity: S,
    pub ppv: Option<S>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntersectionRow<S> {
    pub feature_set: u8,
    pub cutoff: S,
    pub value: S,
    pub ppv: Option<S>,
}

/// Everything the report stage writes, one vector per CSV.
#[derive(Debug, Clone)]
pub struct FigureData<S: Scalar> {
    pub auc_summary: Vec<AucRow<S>>,
    pub selection_counts: Vec<SelectionCountRow>,
    pub case_pairs: Vec<CasePairRow<S>>,
    pub control_kde: Vec<KdeRow<S>>,
    pub box_stats: Vec<BoxRow<S>>,
    pub roc_points: Vec<RocPointRow<S>>,
    pub sweeps: Vec<SweepRow<S>>,
    pub intersections: Vec<IntersectionRow<S>>,
}

pub const KDE_GRID_SIZE: usize = 100;
pub const KDE_MIN_BANDWIDTH: f64 = 0.01;

fn pooled_ids<S: Scalar>(report: &CvReport<S>) -> BTreeSet<&str> {
    report.pooled_scores.iter().map(|p| p.patient_id.as_str()).collect()
}

fn scores_by_id<S: Scalar>(report: &CvReport<S>) -> BTreeMap<&str, (S, u8)> {
    report
        .pooled_scores
        .iter()
        .map(|p| (p.patient_id.as_str(), (p.score, p.label)))
        .collect()
}

/// Type-7 quantile (linear interpolation) of sorted values.
fn quantile_sorted<S: Scalar>(sorted: &[S], q: f64) -> S {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = S::from_f64_lossy(q) * S::from_count(n - 1);
    let lo = pos.floor().to_usize().expect("index");
    let hi = (lo + 1).min(n - 1);
    let frac = pos - pos.floor();
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Tukey box statistics: quartiles plus whiskers at the most extreme points
/// within 1.5 IQR of the box.
pub fn box_stats<S: Scalar>(label: &'static str, values: &[S]) -> BoxRow<S> {
    assert!(!values.is_empty(), "box stats need data");
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let q1 = quantile_sorted(&sorted, 0.25);
    let median = quantile_sorted(&sorted, 0.5);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let lo_fence = q1 - S::from_f64_lossy(1.5) * iqr;
    let hi_fence = q3 + S::from_f64_lossy(1.5) * iqr;
    let whisker_low = sorted.iter().copied().find(|&v| v >= lo_fence).unwrap_or(sorted[0]);
    let whisker_high = sorted
        .iter()
        .rev()
        .copied()
        .find(|&v| v <= hi_fence)
        .unwrap_or(sorted[sorted.len() - 1]);
    BoxRow { label, whisker_low, q1, median, q3, whisker_high }
}

/// Assemble all figure tables from consecutive feature-set reports (ascending
/// feature set, aligned patient ids). Scatter, KDE, box, ROC, and sweep
/// tables read the forward direction, matching the headline models.
pub fn emit_figure_data<S: Scalar>(
    reports: &[FeatureSetReports<S>],
) -> Result<FigureData<S>, FigureError> {
    let first = reports.first().ok_or(FigureError::Empty)?;
    let ids = pooled_ids(&first.forward);
    for r in reports {
        if pooled_ids(&r.forward) != ids || pooled_ids(&r.backward) != ids {
            return Err(FigureError::MisalignedCohorts { feature_set: r.feature_set });
        }
    }

    let mut auc_summary = Vec::with_capacity(reports.len() * 2);
    let mut selection_counts = Vec::new();
    for r in reports {
        for (direction, report) in
            [(Direction::Forward, &r.forward), (Direction::Backward, &r.backward)]
        {
            auc_summary.push(AucRow {
                feature_set: r.feature_set,
                direction,
                auc_mean: report.auc_mean,
                auc_std: report.auc_std,
            });
            for (fold, fr) in report.per_fold.iter().enumerate() {
                selection_counts.push(SelectionCountRow {
                    feature_set: r.feature_set,
                    direction,
                    fold,
                    selected: fr.selected_columns.len(),
                });
            }
        }
    }

    let mut case_pairs = Vec::new();
    let mut control_kde = Vec::new();
    for pair in reports.windows(2) {
        let (prev, next) = (&pair[0], &pair[1]);
        let prev_scores = scores_by_id(&prev.forward);
        let next_scores = scores_by_id(&next.forward);
        let mut control_points = Vec::new();
        for (id, &(p_prev, label)) in &prev_scores {
            let &(p_next, _) = next_scores.get(id).expect("aligned ids");
            if label == 1 {
                case_pairs.push(CasePairRow {
                    from_set: prev.feature_set,
                    to_set: next.feature_set,
                    patient_id: (*id).to_string(),
                    prev_prob: p_prev,
                    next_prob: p_next,
                });
            } else {
                control_points.push((p_prev, p_next));
            }
        }
        let grid = kde_2d(&control_points, KDE_GRID_SIZE, S::from_f64_lossy(KDE_MIN_BANDWIDTH));
        for iy in 0..grid.grid_size() {
            for ix in 0..grid.grid_size() {
                control_kde.push(KdeRow {
                    from_set: prev.feature_set,
                    to_set: next.feature_set,
                    x: grid.coords[ix],
                    y: grid.coords[iy],
                    density: grid.at(ix, iy),
                });
            }
        }
    }

    let last = reports.last().expect("nonempty");
    let case_probs: Vec<S> = last
        .forward
        .pooled_scores
        .iter()
        .filter(|p| p.label == 1)
        .map(|p| p.score)
        .collect();
    let control_probs: Vec<S> = last
        .forward
        .pooled_scores
        .iter()
        .filter(|p| p.label == 0)
        .map(|p| p.score)
        .collect();
    let box_stats = vec![box_stats("case", &case_probs), box_stats("control", &control_probs)];

    let mut roc_points = Vec::new();
    let mut sweeps = Vec::new();
    let mut intersections = Vec::new();
    let mut endpoint_sets: Vec<&FeatureSetReports<S>> = vec![first];
    if last.feature_set != first.feature_set {
        endpoint_sets.push(last);
    }
    for r in endpoint_sets {
        let scores: Vec<S> = r.forward.pooled_scores.iter().map(|p| p.score).collect();
        let labels: Vec<u8> = r.forward.pooled_scores.iter().map(|p| p.label).collect();
        let roc = roc_auc(&scores, &labels)?;
        roc_points.extend(roc.points.iter().map(|&(fpr, tpr)| RocPointRow {
            feature_set: r.feature_set,
            fpr,
            tpr,
        }));
        let sweep = threshold_sweep(&scores, &labels, &default_grid(&scores))?;
        for i in 0..sweep.thresholds.len() {
            sweeps.push(SweepRow {
                feature_set: r.feature_set,
                threshold: sweep.thresholds[i],
                sensitivity: sweep.sensitivity[i],
                specificity: sweep.specificity[i],
                ppv: sweep.ppv[i],
            });
        }
        match sens_spec_intersection(&sweep) {
            Ok((cutoff, value, ppv)) => {
                intersections.push(IntersectionRow { feature_set: r.feature_set, cutoff, value, ppv });
            }
            Err(SweepError::NoCrossing) => {}
            Err(e) => return Err(e.into()),
        }
    }

    Ok(FigureData {
        auc_summary,
        selection_counts,
        case_pairs,
        control_kde,
        box_stats,
        roc_points,
        sweeps,
        intersections,
    })
}

/// Serialize any row collection to CSV.
pub fn write_rows<R: Serialize>(rows: &[R], writer: impl Write) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
