//! 2D Gaussian kernel density estimation on a fixed grid over [0,1]^2.

use crate::scalar::Scalar;
use rayon::prelude::*;

/// Density evaluated on a `grid_size` x `grid_size` lattice over [0,1]^2.
#[derive(Debug, Clone, PartialEq)]
pub struct KdeGrid<S> {
    /// Grid coordinates, shared by both axes.
    pub coords: Vec<S>,
    /// Row-major density values: `density[iy * grid_size + ix]`.
    pub density: Vec<S>,
    pub bandwidth_x: S,
    pub bandwidth_y: S,
}

impl<S: Scalar> KdeGrid<S> {
    pub fn grid_size(&self) -> usize {
        self.coords.len()
    }

    pub fn at(&self, ix: usize, iy: usize) -> S {
        self.density[iy * self.coords.len() + ix]
    }

    /// Total mass by the midpoint rule: cell sum times cell area.
    pub fn mass(&self) -> S {
        let g = self.coords.len();
        let step = S::one() / S::from_count(g - 1);
        self.density.iter().copied().sum::<S>() * step * step
    }

    /// Grid point with the largest density.
    pub fn argmax(&self) -> (S, S) {
        let g = self.coords.len();
        let mut best = (0usize, 0usize);
        let mut best_v = S::neg_infinity();
        for iy in 0..g {
            for ix in 0..g {
                let v = self.at(ix, iy);
                if v > best_v {
                    best_v = v;
                    best = (ix, iy);
                }
            }
        }
        (self.coords[best.0], self.coords[best.1])
    }
}

fn axis_std<S: Scalar>(values: impl Iterator<Item = S> + Clone, n: usize) -> S {
    if n < 2 {
        return S::zero();
    }
    let nn = S::from_count(n);
    let mean = values.clone().sum::<S>() / nn;
    let ss = values.map(|v| (v - mean) * (v - mean)).sum::<S>();
    (ss / (nn - S::one())).sqrt()
}

/// Product-Gaussian KDE with per-axis Scott bandwidths
/// `h = sigma * n^(-1/6)`, floored at `min_bandwidth` so degenerate inputs
/// (single or constant points) still produce a peaked surface.
pub fn kde_2d<S: Scalar>(points: &[(S, S)], grid_size: usize, min_bandwidth: S) -> KdeGrid<S> {
    assert!(grid_size >= 2, "grid needs at least two nodes per axis");
    let n = points.len();
    let coords: Vec<S> = (0..grid_size)
        .map(|i| S::from_count(i) / S::from_count(grid_size - 1))
        .collect();
    if n == 0 {
        return KdeGrid {
            density: vec![S::zero(); grid_size * grid_size],
            coords,
            bandwidth_x: min_bandwidth,
            bandwidth_y: min_bandwidth,
        };
    }
    let scott = S::from_count(n).powf(-S::one() / S::from_f64_lossy(6.0));
    let hx = (axis_std(points.iter().map(|p| p.0), n) * scott).max(min_bandwidth);
    let hy = (axis_std(points.iter().map(|p| p.1), n) * scott).max(min_bandwidth);

    let norm = S::one()
        / (S::from_count(n)
            * S::two()
            * S::from_f64_lossy(std::f64::consts::PI)
            * hx
            * hy);
    let density: Vec<S> = (0..grid_size * grid_size)
        .into_par_iter()
        .map(|cell| {
            let gx = coords[cell % grid_size];
            let gy = coords[cell / grid_size];
            let mut sum = S::zero();
            for &(px, py) in points {
                let zx = (gx - px) / hx;
                let zy = (gy - py) / hy;
                sum = sum + (-(zx * zx + zy * zy) * S::half()).exp();
            }
            sum * norm
        })
        .collect();

    KdeGrid { coords, density, bandwidth_x: hx, bandwidth_y: hy }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_peaks_at_nearest_node() {
        let grid = kde_2d(&[(0.5f64, 0.5)], 100, 0.01);
        let (x, y) = grid.argmax();
        let half_cell = 0.5 / 99.0;
        assert!((x - 0.5).abs() <= half_cell + 1e-12);
        assert!((y - 0.5).abs() <= half_cell + 1e-12);
    }

    #[test]
    fn interior_mass_integrates_to_one() {
        let mut rng = crate::rng::substream(31, "kde-test");
        use rand::Rng;
        let points: Vec<(f64, f64)> =
            (0..400).map(|_| (rng.gen_range(0.25..0.75), rng.gen_range(0.25..0.75))).collect();
        let grid = kde_2d(&points, 100, 0.01);
        let mass = grid.mass();
        assert!((0.98..=1.02).contains(&mass), "mass = {mass}");
    }

    #[test]
    fn empty_input_yields_zero_surface() {
        let grid = kde_2d::<f64>(&[], 10, 0.01);
        assert!(grid.density.iter().all(|&v| v == 0.0));
    }
}
