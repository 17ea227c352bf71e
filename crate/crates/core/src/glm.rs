//! Binary logistic regression fit by iteratively reweighted least squares.
//!
//! The fit maximizes the Bernoulli log-likelihood with a logit link. Newton
//! steps are safeguarded by step halving, so an accepted iterate never
//! decreases the log-likelihood. Quasi-separated features are not an error:
//! the fit runs to the iteration cap and comes back with `converged = false`
//! and large capped coefficients, which is the behavior the coefficient
//! stability reports expect.

use crate::features::DesignMatrix;
use crate::linalg::{solve_spd_with_jitter, LinalgError};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

/// Probability clamp used in likelihood evaluation and prediction; keeps the
/// log-likelihood finite under separation.
pub const PROB_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions<S> {
    pub max_iterations: usize,
    pub rel_tolerance: S,
    pub ridge_jitter: S,
}

impl<S: Scalar> Default for FitOptions<S> {
    fn default() -> Self {
        FitOptions {
            max_iterations: 25,
            rel_tolerance: S::from_f64_lossy(1e-8),
            ridge_jitter: S::from_f64_lossy(1e-10),
        }
    }
}

/// A fitted logistic model with named coefficients. Serializes to the
/// `model.json` shape: coefficients keyed by name, sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    into = "ModelJson<S>",
    from = "ModelJson<S>",
    bound(serialize = "S: Scalar", deserialize = "S: Scalar")
)]
pub struct LogisticModel<S: Scalar> {
    /// `intercept` first, then design columns in fit order.
    pub coefficients: Vec<(String, S)>,
    pub converged: bool,
    pub log_likelihood: S,
    pub aic: S,
    pub iterations: usize,
}

#[derive(Clone, Serialize, Deserialize)]
struct ModelJson<S> {
    coefficients: BTreeMap<String, S>,
    converged: bool,
    log_likelihood: S,
    aic: S,
    iterations: usize,
}

impl<S: Scalar> From<LogisticModel<S>> for ModelJson<S> {
    fn from(m: LogisticModel<S>) -> Self {
        ModelJson {
            coefficients: m.coefficients.into_iter().collect(),
            converged: m.converged,
            log_likelihood: m.log_likelihood,
            aic: m.aic,
            iterations: m.iterations,
        }
    }
}

impl<S: Scalar> From<ModelJson<S>> for LogisticModel<S> {
    fn from(j: ModelJson<S>) -> Self {
        LogisticModel {
            coefficients: j.coefficients.into_iter().collect(),
            converged: j.converged,
            log_likelihood: j.log_likelihood,
            aic: j.aic,
            iterations: j.iterations,
        }
    }
}

impl<S: Scalar> LogisticModel<S> {
    pub fn coefficient(&self, name: &str) -> Option<S> {
        self.coefficients.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }

    pub fn intercept(&self) -> S {
        self.coefficient("intercept").unwrap_or_else(S::zero)
    }

    /// Coefficient count, intercept included.
    pub fn k(&self) -> usize {
        self.coefficients.len()
    }

    /// Names of the non-intercept columns the model was fit on.
    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.coefficients.iter().map(|(n, _)| n.as_str()).filter(|n| *n != "intercept")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn save(&self, path: &Path) -> Result<(), std::io::Error> {
        std::fs::write(path, self.to_json() + "\n")
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GlmError {
    #[error("degenerate design: {rows} rows, {cols} columns")]
    DegenerateDesign { rows: usize, cols: usize },
    #[error("design column {0:?} required by the model is missing")]
    MissingColumn(String),
    #[error("column mismatch: model expects {0:?}")]
    ColumnMismatch(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Numerically stable logistic function.
pub fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

fn clamp_prob<S: Scalar>(p: S) -> S {
    let eps = S::from_f64_lossy(PROB_EPS);
    p.max(eps).min(S::one() - eps)
}

fn bernoulli_ll<S: Scalar>(p: S, y: u8) -> S {
    let p = clamp_prob(p);
    if y == 1 {
        p.ln()
    } else {
        (S::one() - p).ln()
    }
}

/// Fit over every column of `design`.
pub fn fit_logistic<S: Scalar>(
    design: &DesignMatrix<S>,
    options: &FitOptions<S>,
) -> Result<LogisticModel<S>, GlmError> {
    let all: Vec<usize> = (0..design.n_cols()).collect();
    fit_logistic_subset(design, &all, options)
}

/// Fit over the selected columns; an empty selection is an intercept-only
/// fit. Columns that are identically zero on these rows are excluded from the
/// normal equations (their coefficient is exactly zero either way) and
/// reported with coefficient 0; they still count toward AIC's k.
pub fn fit_logistic_subset<S: Scalar>(
    design: &DesignMatrix<S>,
    columns: &[usize],
    options: &FitOptions<S>,
) -> Result<LogisticModel<S>, GlmError> {
    let n = design.n_rows();
    if n == 0 {
        return Err(GlmError::DegenerateDesign { rows: n, cols: columns.len() });
    }

    let active: Vec<usize> = columns
        .iter()
        .copied()
        .filter(|&c| (0..n).any(|r| design.value(r, c) != S::zero()))
        .collect();
    let p = active.len() + 1; // intercept

    // Compact row-major working matrix [1, x_active...].
    let mut xm = Vec::with_capacity(n * p);
    for r in 0..n {
        let row = design.row(r);
        xm.push(S::one());
        for &c in &active {
            xm.push(row[c]);
        }
    }
    let labels = design.labels();

    let ll_of = |beta: &[S]| -> S {
        let mut ll = S::zero();
        for r in 0..n {
            let x = &xm[r * p..(r + 1) * p];
            let mut eta = S::zero();
            for j in 0..p {
                eta = eta + beta[j] * x[j];
            }
            ll = ll + bernoulli_ll(sigmoid(eta), labels[r]);
        }
        ll
    };

    let mut beta = vec![S::zero(); p];
    let mut ll = ll_of(&beta);
    let mut converged = false;
    let mut iterations = 0;

    let mut grad = vec![S::zero(); p];
    let mut hess = vec![S::zero(); p * p];
    for it in 1..=options.max_iterations {
        for g in grad.iter_mut() {
            *g = S::zero();
        }
        for h in hess.iter_mut() {
            *h = S::zero();
        }
        for r in 0..n {
            let x = &xm[r * p..(r + 1) * p];
            let mut eta = S::zero();
            for j in 0..p {
                eta = eta + beta[j] * x[j];
            }
            let prob = sigmoid(eta);
            let resid = if labels[r] == 1 { S::one() - prob } else { -prob };
            let w = prob * (S::one() - prob);
            for a in 0..p {
                grad[a] = grad[a] + resid * x[a];
                let wa = w * x[a];
                let row = &mut hess[a * p..(a + 1) * p];
                for b in a..p {
                    row[b] = row[b] + wa * x[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                hess[a * p + b] = hess[b * p + a];
            }
        }

        let delta = solve_spd_with_jitter(&hess, &grad, options.ridge_jitter)?;

        // Step halving: accept only non-decreasing log-likelihood.
        let mut scale = S::one();
        let mut accepted = false;
        let mut trial = vec![S::zero(); p];
        let mut ll_trial = ll;
        for _ in 0..30 {
            for j in 0..p {
                trial[j] = beta[j] + scale * delta[j];
            }
            ll_trial = ll_of(&trial);
            if ll_trial >= ll {
                accepted = true;
                break;
            }
            scale = scale * S::half();
        }
        // Convergence needs both a flat log-likelihood and a small step:
        // under separation the likelihood plateaus near zero while the
        // coefficients still run away, and that must stay flagged.
        let tol = options.rel_tolerance * (ll.abs() + S::one());
        let beta_norm = beta.iter().fold(S::zero(), |m, b| m.max(b.abs()));
        let step_tol = options.rel_tolerance.sqrt() * (S::one() + beta_norm);
        let step_norm =
            delta.iter().fold(S::zero(), |m, d| m.max(d.abs())) * scale;
        if !accepted {
            // Cannot improve at any scale: at the optimum within
            // floating-point resolution.
            converged = (ll_trial - ll).abs() <= tol && step_norm <= step_tol;
            iterations = it;
            break;
        }
        let change = ll_trial - ll;
        beta.copy_from_slice(&trial);
        ll = ll_trial;
        iterations = it;
        if change.abs() <= tol && step_norm <= step_tol {
            converged = true;
            break;
        }
    }

    // Reassemble over all requested columns, zeros for inactive ones.
    let names = design.column_names();
    let mut coefficients = Vec::with_capacity(columns.len() + 1);
    coefficients.push(("intercept".to_string(), beta[0]));
    let mut active_iter = active.iter().zip(beta.iter().skip(1));
    let mut next_active = active_iter.next();
    for &c in columns {
        match next_active {
            Some((&ac, &b)) if ac == c => {
                coefficients.push((names[c].clone(), b));
                next_active = active_iter.next();
            }
            _ => coefficients.push((names[c].clone(), S::zero())),
        }
    }

    let k = S::from_count(coefficients.len());
    Ok(LogisticModel {
        converged,
        log_likelihood: ll,
        aic: S::two() * k - S::two() * ll,
        iterations,
        coefficients,
    })
}

/// AIC of a fitted model: `2k - 2 log_likelihood`, k counting all
/// coefficients including the intercept.
pub fn aic<S: Scalar>(model: &LogisticModel<S>) -> S {
    S::two() * S::from_count(model.k()) - S::two() * model.log_likelihood
}

/// Column indices of the model's non-intercept coefficients in `design`.
fn model_columns<S: Scalar>(
    model: &LogisticModel<S>,
    design: &DesignMatrix<S>,
) -> Result<Vec<(usize, S)>, GlmError> {
    model
        .coefficients
        .iter()
        .filter(|(name, _)| name != "intercept")
        .map(|(name, b)| {
            design
                .column_index(name)
                .map(|i| (i, *b))
                .ok_or_else(|| GlmError::ColumnMismatch(name.clone()))
        })
        .collect()
}

/// Bernoulli log-likelihood of `model` on `design`, probabilities clamped to
/// `[PROB_EPS, 1 - PROB_EPS]`.
pub fn log_likelihood<S: Scalar>(
    model: &LogisticModel<S>,
    design: &DesignMatrix<S>,
) -> Result<S, GlmError> {
    let cols = model_columns(model, design)?;
    let intercept = model.intercept();
    let mut ll = S::zero();
    for r in 0..design.n_rows() {
        let row = design.row(r);
        let mut eta = intercept;
        for &(c, b) in &cols {
            eta = eta + b * row[c];
        }
        ll = ll + bernoulli_ll(sigmoid(eta), design.labels()[r]);
    }
    Ok(ll)
}

/// Predicted case probability for one named row.
pub fn predict_prob<S: Scalar>(
    model: &LogisticModel<S>,
    row: &BTreeMap<String, S>,
) -> Result<S, GlmError> {
    let mut eta = model.intercept();
    for (name, b) in &model.coefficients {
        if name == "intercept" {
            continue;
        }
        let x = row.get(name).ok_or_else(|| GlmError::MissingColumn(name.clone()))?;
        eta = eta + *b * *x;
    }
    Ok(clamp_prob(sigmoid(eta)))
}

/// Predicted probabilities for every design row; columns matched by name.
pub fn predict_design<S: Scalar>(
    model: &LogisticModel<S>,
    design: &DesignMatrix<S>,
) -> Result<Vec<S>, GlmError> {
    let cols = model
        .coefficients
        .iter()
        .filter(|(name, _)| name != "intercept")
        .map(|(name, b)| {
            design
                .column_index(name)
                .map(|i| (i, *b))
                .ok_or_else(|| GlmError::MissingColumn(name.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let intercept = model.intercept();
    let mut out = Vec::with_capacity(design.n_rows());
    for r in 0..design.n_rows() {
        let row = design.row(r);
        let mut eta = intercept;
        for &(c, b) in &cols {
            eta = eta + b * row[c];
        }
        out.push(clamp_prob(sigmoid(eta)));
    }
    Ok(out)
}

/// Analytic score X'(y - p) at the model's coefficients, intercept first.
/// Near zero at a converged optimum.
pub fn score<S: Scalar>(
    model: &LogisticModel<S>,
    design: &DesignMatrix<S>,
) -> Result<Vec<S>, GlmError> {
    let cols = model_columns(model, design)?;
    let intercept = model.intercept();
    let mut g = vec![S::zero(); cols.len() + 1];
    for r in 0..design.n_rows() {
        let row = design.row(r);
        let mut eta = intercept;
        for &(c, b) in &cols {
            eta = eta + b * row[c];
        }
        let prob = sigmoid(eta);
        let resid =
            if design.labels()[r] == 1 { S::one() - prob } else { -prob };
        g[0] = g[0] + resid;
        for (j, &(c, _)) in cols.iter().enumerate() {
            g[j + 1] = g[j + 1] + resid * row[c];
        }
    }
    Ok(g)
}
