//! Threshold sweeps: sensitivity, specificity, PPV, and the
//! sensitivity/specificity crossing point.

use super::roc::RocError;
use crate::scalar::Scalar;
use thiserror::Error;

/// Classification rates over a descending threshold grid; a row is positive
/// when its score is `>=` the threshold. PPV is absent where no positives
/// are predicted.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSweep<S> {
    pub thresholds: Vec<S>,
    pub sensitivity: Vec<S>,
    pub specificity: Vec<S>,
    pub ppv: Vec<Option<S>>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SweepError {
    #[error(transparent)]
    Roc(#[from] RocError),
    #[error("sensitivity and specificity curves never cross")]
    NoCrossing,
    #[error("sweep is empty")]
    Empty,
}

/// All distinct scores plus the endpoints 0 and 1, so the sweep is exact and
/// interpolation happens only at the crossing.
pub fn default_grid<S: Scalar>(scores: &[S]) -> Vec<S> {
    let mut grid: Vec<S> = scores.to_vec();
    grid.push(S::zero());
    grid.push(S::one());
    grid.sort_by(|a, b| b.partial_cmp(a).expect("finite scores"));
    grid.dedup();
    grid
}

pub fn threshold_sweep<S: Scalar>(
    scores: &[S],
    labels: &[u8],
    grid: &[S],
) -> Result<ThresholdSweep<S>, SweepError> {
    if scores.len() != labels.len() {
        return Err(RocError::LengthMismatch.into());
    }
    if scores.iter().chain(grid).any(|s| !s.is_finite()) {
        return Err(RocError::NonFiniteScore.into());
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(RocError::OneClassOnly.into());
    }

    let mut thresholds = grid.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).expect("finite grid"));
    thresholds.dedup();

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));

    let count = |n: u64| S::from_u64(n).expect("count");
    let mut sensitivity = Vec::with_capacity(thresholds.len());
    let mut specificity = Vec::with_capacity(thresholds.len());
    let mut ppv = Vec::with_capacity(thresholds.len());
    let mut tp: u64 = 0;
    let mut fp: u64 = 0;
    let mut next = 0;
    for &t in &thresholds {
        while next < order.len() && scores[order[next]] >= t {
            if labels[order[next]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            next += 1;
        }
        let tn = n_neg - fp;
        sensitivity.push(count(tp) / count(n_pos));
        specificity.push(count(tn) / count(n_neg));
        ppv.push(if tp + fp == 0 { None } else { Some(count(tp) / count(tp + fp)) });
    }
    Ok(ThresholdSweep { thresholds, sensitivity, specificity, ppv })
}

/// Crossing of the sensitivity and specificity curves: scan thresholds
/// ascending, find where `sens - spec` changes sign, and interpolate
/// linearly. Returns (cutoff, common value, ppv at the cutoff).
pub fn sens_spec_intersection<S: Scalar>(
    sweep: &ThresholdSweep<S>,
) -> Result<(S, S, Option<S>), SweepError> {
    let m = sweep.thresholds.len();
    if m == 0 {
        return Err(SweepError::Empty);
    }
    // Thresholds are stored descending; walk them ascending. Sensitivity
    // starts above specificity at low thresholds, so the first index where
    // the difference reaches zero or below pins the crossing.
    let idx = |i: usize| m - 1 - i;
    for i in 0..m {
        let k = idx(i);
        let d = sweep.sensitivity[k] - sweep.specificity[k];
        if d == S::zero() {
            return Ok((sweep.thresholds[k], sweep.sensitivity[k], sweep.ppv[k]));
        }
        if d > S::zero() {
            continue;
        }
        if i == 0 {
            return Err(SweepError::NoCrossing);
        }
        let lo = idx(i - 1);
        let d_lo = sweep.sensitivity[lo] - sweep.specificity[lo];
        let frac = d_lo / (d_lo - d);
        let t = sweep.thresholds[lo] + frac * (sweep.thresholds[k] - sweep.thresholds[lo]);
        let value =
            sweep.sensitivity[lo] + frac * (sweep.sensitivity[k] - sweep.sensitivity[lo]);
        let ppv = match (sweep.ppv[lo], sweep.ppv[k]) {
            (Some(p0), Some(p1)) => Some(p0 + frac * (p1 - p0)),
            _ => None,
        };
        return Ok((t, value, ppv));
    }
    Err(SweepError::NoCrossing)
}
