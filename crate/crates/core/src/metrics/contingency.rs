//! 2x2 contingency statistics: case/control ratio and the Yates-corrected
//! chi-square test.

use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Case/control counts of one binary feature.
///
/// `a` = cases with the feature, `b` = cases without, `c` = controls with,
/// `d` = controls without.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
}

impl ContingencyTable {
    pub fn new(a: u64, b: u64, c: u64, d: u64) -> Self {
        ContingencyTable { a, b, c, d }
    }

    /// From carrier counts and group totals.
    pub fn from_counts(case_with: u64, case_total: u64, control_with: u64, control_total: u64) -> Self {
        ContingencyTable {
            a: case_with,
            b: case_total.saturating_sub(case_with),
            c: control_with,
            d: control_total.saturating_sub(control_with),
        }
    }

    pub fn n(&self) -> u64 {
        self.a + self.b + self.c + self.d
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ContingencyError {
    #[error("chi-square is undefined when a margin is zero")]
    ZeroMargin,
}

/// Ratio of case carriers to control carriers, `a / c`.
///
/// Infinite when only cases carry the feature, zero when no case does, and
/// `None` (undefined) for 0/0.
pub fn case_control_ratio<S: Scalar>(table: &ContingencyTable) -> Option<S> {
    match (table.a, table.c) {
        (0, 0) => None,
        (_, 0) => Some(S::infinity()),
        (a, c) => Some(S::from_u64(a).expect("count") / S::from_u64(c).expect("count")),
    }
}

/// Yates continuity-corrected chi-square statistic and p-value (1 degree of
/// freedom). The statistic clamps to zero (p = 1) when the correction `N/2`
/// is at least the deviation `|ad - bc|`.
pub fn chi_square_yates<S: Scalar>(
    table: &ContingencyTable,
) -> Result<(S, S), ContingencyError> {
    let (a, b, c, d) = (table.a, table.b, table.c, table.d);
    let margins = [a + b, c + d, a + c, b + d];
    if table.n() == 0 || margins.contains(&0) {
        return Err(ContingencyError::ZeroMargin);
    }
    let n = S::from_u64(table.n()).expect("count");
    let ad = u128::from(a) * u128::from(d);
    let bc = u128::from(b) * u128::from(c);
    let deviation = S::from_u128(ad.abs_diff(bc)).expect("count");
    if deviation <= n * S::half() {
        return Ok((S::zero(), S::one()));
    }
    let corrected = deviation - n * S::half();
    let denom = margins
        .iter()
        .map(|&m| S::from_u64(m).expect("count"))
        .fold(S::one(), |acc, m| acc * m);
    let statistic = n * corrected * corrected / denom;
    Ok((statistic, chi_square_sf_1df(statistic)))
}

/// Survival function of the chi-square distribution with one degree of
/// freedom: `Q(1/2, x/2)`, the regularized upper incomplete gamma function.
pub fn chi_square_sf_1df<S: Scalar>(x: S) -> S {
    if x <= S::zero() {
        return S::one();
    }
    gamma_q_half(x * S::half())
}

/// ln Gamma(1/2) = ln sqrt(pi).
fn ln_gamma_half<S: Scalar>() -> S {
    S::from_f64_lossy(std::f64::consts::PI).ln() * S::half()
}

/// Regularized upper incomplete gamma Q(1/2, x): series for small x,
/// Lentz continued fraction otherwise.
fn gamma_q_half<S: Scalar>(x: S) -> S {
    let a = S::half();
    let eps = S::epsilon();
    let max_iter = 300;
    if x < a + S::one() {
        // Q = 1 - P, with P by series expansion.
        let mut term = S::one() / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..max_iter {
            ap = ap + S::one();
            term = term * x / ap;
            sum = sum + term;
            if term.abs() < sum.abs() * eps {
                break;
            }
        }
        let p = sum * (-x + a * x.ln() - ln_gamma_half::<S>()).exp();
        (S::one() - p).max(S::zero())
    } else {
        // Continued fraction for Q (modified Lentz).
        let tiny = S::from_f64_lossy(1e-30);
        let mut b = x + S::one() - a;
        let mut c = S::one() / tiny;
        let mut d = S::one() / b;
        let mut h = d;
        for i in 1..=max_iter {
            let an = -S::from_count(i) * (S::from_count(i) - a);
            b = b + S::two();
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = S::one() / d;
            let delta = d * c;
            h = h * delta;
            if (delta - S::one()).abs() < eps {
                break;
            }
        }
        ((-x + a * x.ln() - ln_gamma_half::<S>()).exp() * h).min(S::one())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ratio_edges() {
        assert_eq!(case_control_ratio::<f64>(&ContingencyTable::new(27, 710, 0, 2948)), Some(f64::INFINITY));
        assert_eq!(case_control_ratio::<f64>(&ContingencyTable::new(0, 737, 13, 2935)), Some(0.0));
        assert_eq!(case_control_ratio::<f64>(&ContingencyTable::new(0, 737, 0, 2948)), None);
        let r = case_control_ratio::<f64>(&ContingencyTable::new(19, 718, 224, 2724)).unwrap();
        assert!((r - 0.085).abs() < 0.001);
    }

    #[test]
    fn yates_clamps_small_deviations() {
        // |ad - bc| = 1474 <= N/2 = 1842.5
        let t = ContingencyTable::new(0, 737, 2, 2946);
        let (stat, p) = chi_square_yates::<f64>(&t).unwrap();
        assert_eq!(stat, 0.0);
        assert_eq!(p, 1.0);
    }

    #[test]
    fn yates_known_values() {
        // Counts with externally computed Yates p-values.
        let t = ContingencyTable::new(0, 737, 13, 2935);
        let (stat, p) = chi_square_yates::<f64>(&t).unwrap();
        assert_relative_eq!(stat, 2.127698435143288, epsilon = 1e-9);
        assert_relative_eq!(p, 0.144657819617385, epsilon = 1e-9);

        let t = ContingencyTable::new(3, 734, 1, 2947);
        let (_, p) = chi_square_yates::<f64>(&t).unwrap();
        assert_relative_eq!(p, 0.033490416873173, epsilon = 1e-9);
    }

    #[test]
    fn zero_margin_is_an_error() {
        let t = ContingencyTable::new(0, 0, 5, 5);
        assert_eq!(chi_square_yates::<f64>(&t).unwrap_err(), ContingencyError::ZeroMargin);
        let t = ContingencyTable::new(0, 5, 0, 5);
        assert_eq!(chi_square_yates::<f64>(&t).unwrap_err(), ContingencyError::ZeroMargin);
    }

    #[test]
    fn sf_matches_reference_points() {
        // chi2.sf(x, 1) reference values.
        assert_relative_eq!(chi_square_sf_1df(1.0f64), 0.31731050786291415, epsilon = 1e-10);
        assert_relative_eq!(chi_square_sf_1df(2.0f64), 0.15729920705028513, epsilon = 1e-10);
        assert_relative_eq!(chi_square_sf_1df(3.841458820694124f64), 0.05, epsilon = 1e-9);
        assert_relative_eq!(chi_square_sf_1df(10.0f64), 0.001565402258002549, epsilon = 1e-9);
        assert_eq!(chi_square_sf_1df(0.0f64), 1.0);
    }
}
