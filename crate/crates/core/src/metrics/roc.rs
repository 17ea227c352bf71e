//! ROC curves and AUC with Mann-Whitney tie handling.

use crate::scalar::Scalar;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RocError {
    #[error("scores and labels have different lengths")]
    LengthMismatch,
    #[error("both classes must be present")]
    OneClassOnly,
    #[error("scores contain a non-finite value")]
    NonFiniteScore,
}

/// ROC curve over all distinct score thresholds.
///
/// `auc` is the exact pairwise concordance (ties count one half), computed in
/// integer arithmetic; the trapezoidal integral of `points` equals it up to
/// rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve<S> {
    /// (fpr, tpr) from (0,0) to (1,1), both coordinates nondecreasing.
    pub points: Vec<(S, S)>,
    pub auc: S,
}

pub fn roc_auc<S: Scalar>(scores: &[S], labels: &[u8]) -> Result<RocCurve<S>, RocError> {
    if scores.len() != labels.len() {
        return Err(RocError::LengthMismatch);
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(RocError::NonFiniteScore);
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(RocError::OneClassOnly);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));

    // Walk distinct scores descending; each tie group contributes one curve
    // point and its concordant / tied pair counts.
    let mut points = Vec::new();
    points.push((S::zero(), S::zero()));
    let mut cum_pos: u64 = 0;
    let mut cum_neg: u64 = 0;
    // 2*concordant + tied, so everything stays integral.
    let mut double_concordance: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let mut group_pos: u64 = 0;
        let mut group_neg: u64 = 0;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] == 1 {
                group_pos += 1;
            } else {
                group_neg += 1;
            }
            j += 1;
        }
        // Positives in this group beat all negatives with lower scores and
        // tie the negatives inside the group.
        let lower_neg = n_neg - cum_neg - group_neg;
        double_concordance += 2 * u128::from(group_pos) * u128::from(lower_neg);
        double_concordance += u128::from(group_pos) * u128::from(group_neg);
        cum_pos += group_pos;
        cum_neg += group_neg;
        points.push((
            S::from_u64(cum_neg).expect("count") / S::from_u64(n_neg).expect("count"),
            S::from_u64(cum_pos).expect("count") / S::from_u64(n_pos).expect("count"),
        ));
        i = j;
    }

    let auc = S::from_u128(double_concordance).expect("count")
        / S::from_u128(2 * u128::from(n_pos) * u128::from(n_neg)).expect("count");
    Ok(RocCurve { points, auc })
}

impl<S: Scalar> RocCurve<S> {
    /// Trapezoidal integral of the stored points.
    pub fn trapezoid_area(&self) -> S {
        let mut area = S::zero();
        for w in self.points.windows(2) {
            let (x0, y0) = w[0];
            let (x1, y1) = w[1];
            area = area + (x1 - x0) * (y0 + y1) * S::half();
        }
        area
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn separated_scores_give_auc_one() {
        let scores = [0.9, 0.8, 0.2, 0.1];
        let labels = [1, 1, 0, 0];
        let roc = roc_auc(&scores, &labels).unwrap();
        assert_eq!(roc.auc, 1.0);
        assert_eq!(roc.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(roc.points.last(), Some(&(1.0, 1.0)));
    }

    #[test]
    fn constant_scores_give_half() {
        let scores = [0.4, 0.4, 0.4, 0.4];
        let labels = [1, 0, 1, 0];
        assert_eq!(roc_auc(&scores, &labels).unwrap().auc, 0.5);
    }

    #[test]
    fn pairwise_concordance_example() {
        // pos {0.9, 0.4}, neg {0.5, 0.1}: 3 of 4 pairs concordant.
        let scores = [0.9, 0.4, 0.5, 0.1];
        let labels = [1, 1, 0, 0];
        assert_eq!(roc_auc(&scores, &labels).unwrap().auc, 0.75);
    }

    #[test]
    fn one_class_is_an_error() {
        assert_eq!(roc_auc(&[0.5, 0.6], &[1, 1]).unwrap_err(), RocError::OneClassOnly);
    }

    #[test]
    fn trapezoid_matches_counting_auc() {
        let mut rng = crate::rng::substream(17, "roc-test");
        use rand::Rng;
        for _ in 0..50 {
            let n = rng.gen_range(2..60);
            let scores: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(0..6)) / 5.0).collect();
            let labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2) as u8).collect();
            if !labels.contains(&0) || !labels.contains(&1) {
                continue;
            }
            let roc = roc_auc(&scores, &labels).unwrap();
            assert_relative_eq!(roc.auc, roc.trapezoid_area(), epsilon = 1e-12);
        }
    }
}
