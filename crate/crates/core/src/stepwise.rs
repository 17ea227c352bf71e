//! Forward and backward stepwise model selection by AIC.
//!
//! Both directions re-fit every candidate move from scratch each step, take
//! the move with the lowest AIC (ties broken by ascending column index), and
//! stop at the first step with no strict improvement. Candidate fits within a
//! step are independent and evaluated in parallel; the winner is chosen
//! sequentially so the trace never depends on thread count.

use crate::features::DesignMatrix;
use crate::glm::{fit_logistic_subset, FitOptions, GlmError, LogisticModel};
use crate::scalar::Scalar;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepAction {
    Add,
    Drop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step<S> {
    pub action: StepAction,
    pub column: String,
    pub aic_after: S,
}

/// Record of one greedy selection run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct SelectionTrace<S: Scalar> {
    pub direction: Direction,
    pub steps: Vec<Step<S>>,
    pub final_model: LogisticModel<S>,
    pub selected_columns: BTreeSet<String>,
}

impl<S: Scalar> SelectionTrace<S> {
    /// Column indices of the selected columns in `design` order.
    pub fn selected_indices(&self, design: &DesignMatrix<S>) -> Vec<usize> {
        (0..design.n_cols())
            .filter(|&c| self.selected_columns.contains(&design.column_names()[c]))
            .collect()
    }

    /// `trace.json` payload: direction, ordered steps, final columns, final AIC.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct TraceJson<'a, S> {
            direction: Direction,
            steps: &'a [Step<S>],
            selected_columns: Vec<&'a str>,
            final_aic: S,
        }
        let json = TraceJson {
            direction: self.direction,
            steps: &self.steps,
            selected_columns: self.selected_columns.iter().map(String::as_str).collect(),
            final_aic: self.final_model.aic,
        };
        serde_json::to_string_pretty(&json).expect("trace serializes")
    }
}

/// AICs of all candidate column sets, in candidate order.
fn candidate_aics<S: Scalar>(
    design: &DesignMatrix<S>,
    candidates: &[Vec<usize>],
    options: &FitOptions<S>,
) -> Result<Vec<LogisticModel<S>>, GlmError> {
    candidates
        .par_iter()
        .map(|cols| fit_logistic_subset(design, cols, options))
        .collect()
}

/// Strictly-better argmin; `None` when no candidate beats `current`.
fn best_candidate<S: Scalar>(fits: &[LogisticModel<S>], current_aic: S) -> Option<usize> {
    let mut best: Option<(usize, S)> = None;
    for (i, fit) in fits.iter().enumerate() {
        let better_than_best = match best {
            None => fit.aic < current_aic,
            Some((_, b)) => fit.aic < b,
        };
        if better_than_best {
            best = Some((i, fit.aic));
        }
    }
    best.map(|(i, _)| i)
}

fn run_selection<S: Scalar>(
    design: &DesignMatrix<S>,
    direction: Direction,
    options: &FitOptions<S>,
) -> Result<SelectionTrace<S>, GlmError> {
    let all: Vec<usize> = (0..design.n_cols()).collect();
    let mut current: Vec<usize> = match direction {
        Direction::Forward => Vec::new(),
        Direction::Backward => all.clone(),
    };
    let mut current_fit = fit_logistic_subset(design, &current, options)?;
    let mut steps = Vec::new();

    loop {
        // Candidate moves, in ascending column index for deterministic ties.
        let moves: Vec<usize> = match direction {
            Direction::Forward => all.iter().copied().filter(|c| !current.contains(c)).collect(),
            Direction::Backward => current.clone(),
        };
        if moves.is_empty() {
            break;
        }
        let candidate_sets: Vec<Vec<usize>> = moves
            .iter()
            .map(|&m| match direction {
                Direction::Forward => {
                    let mut set = current.clone();
                    set.push(m);
                    set.sort_unstable();
                    set
                }
                Direction::Backward => current.iter().copied().filter(|&c| c != m).collect(),
            })
            .collect();
        let fits = candidate_aics(design, &candidate_sets, options)?;
        let Some(winner) = best_candidate(&fits, current_fit.aic) else {
            break;
        };
        let column = design.column_names()[moves[winner]].clone();
        current = candidate_sets[winner].clone();
        current_fit = fits.into_iter().nth(winner).expect("winner index in range");
        steps.push(Step {
            action: match direction {
                Direction::Forward => StepAction::Add,
                Direction::Backward => StepAction::Drop,
            },
            column,
            aic_after: current_fit.aic,
        });
    }

    let selected_columns =
        current.iter().map(|&c| design.column_names()[c].clone()).collect();
    Ok(SelectionTrace { direction, steps, final_model: current_fit, selected_columns })
}

/// Greedy forward selection from the intercept-only model.
pub fn forward_select<S: Scalar>(
    design: &DesignMatrix<S>,
    options: &FitOptions<S>,
) -> Result<SelectionTrace<S>, GlmError> {
    run_selection(design, Direction::Forward, options)
}

/// Greedy backward elimination from the all-columns model.
pub fn backward_select<S: Scalar>(
    design: &DesignMatrix<S>,
    options: &FitOptions<S>,
) -> Result<SelectionTrace<S>, GlmError> {
    run_selection(design, Direction::Backward, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emr::PatientId;
    use crate::glm::sigmoid;
    use rand::Rng;

    fn seeded_design(seed: u64, n: usize, betas: &[f64], intercept: f64) -> DesignMatrix<f64> {
        let mut rng = crate::rng::substream(seed, "stepwise-test");
        let p = betas.len();
        let mut values = Vec::with_capacity(n * p);
        let mut labels = Vec::with_capacity(n);
        let mut ids = Vec::with_capacity(n);
        for i in 0..n {
            let xs: Vec<f64> = (0..p).map(|_| f64::from(rng.gen_range(0..2))).collect();
            let eta: f64 =
                intercept + xs.iter().zip(betas).map(|(x, b)| x * b).sum::<f64>();
            labels.push(u8::from(rng.gen_bool(sigmoid(eta))));
            values.extend_from_slice(&xs);
            ids.push(PatientId::new(format!("r{i}")));
        }
        let cols = (0..p).map(|j| format!("x{j}")).collect();
        DesignMatrix::from_parts(ids, cols, values, labels)
    }

    #[test]
    fn aic_strictly_decreases_and_replays() {
        let d = seeded_design(5, 400, &[1.5, 0.0, 0.0, -1.2, 0.0], -0.4);
        for trace in [
            forward_select(&d, &FitOptions::default()).unwrap(),
            backward_select(&d, &FitOptions::default()).unwrap(),
        ] {
            let mut last = f64::INFINITY;
            for step in &trace.steps {
                assert!(step.aic_after < last);
                last = step.aic_after;
            }
            // Refit on the selected set reproduces the final AIC.
            let idx = trace.selected_indices(&d);
            let refit = fit_logistic_subset(&d, &idx, &FitOptions::default()).unwrap();
            assert!((refit.aic - trace.final_model.aic).abs() <= 1e-9);
        }
    }

    #[test]
    fn strong_column_is_found_by_both_directions() {
        let d = seeded_design(8, 600, &[2.2, 0.0, 0.0, 0.0], -0.5);
        let fwd = forward_select(&d, &FitOptions::default()).unwrap();
        assert!(fwd.selected_columns.contains("x0"));
        let bwd = backward_select(&d, &FitOptions::default()).unwrap();
        assert!(bwd.selected_columns.contains("x0"));
    }

    #[test]
    fn backward_on_empty_design_ends_at_intercept() {
        let d = seeded_design(3, 50, &[], -0.3);
        let trace = backward_select(&d, &FitOptions::default()).unwrap();
        assert!(trace.steps.is_empty());
        assert!(trace.selected_columns.is_empty());
        assert_eq!(trace.final_model.k(), 1);
    }

    #[test]
    fn trace_json_has_direction_and_final_aic() {
        let d = seeded_design(9, 200, &[1.8, 0.0], -0.4);
        let trace = forward_select(&d, &FitOptions::default()).unwrap();
        let json: serde_json::Value = serde_json::from_str(&trace.to_json()).unwrap();
        assert_eq!(json["direction"], "forward");
        assert!(json["final_aic"].is_number());
        assert!(json["steps"].is_array());
    }
}
