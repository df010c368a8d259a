//! Gaussian-process path sampling on a fixed grid.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use super::{matern_kernel, SimGenError};
use crate::linalg;

/// A zero-mean Gaussian-process draw evaluated on a grid. Between grid
/// points the path is linearly interpolated; outside the grid it is clamped
/// to the edge values.
#[derive(Debug, Clone)]
pub struct GpPath {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl GpPath {
    pub fn eval(&self, x: f64) -> f64 {
        let grid = &self.grid;
        if x <= grid[0] {
            return self.values[0];
        }
        if x >= grid[grid.len() - 1] {
            return self.values[grid.len() - 1];
        }
        let hi = grid.partition_point(|g| *g <= x);
        let lo = hi - 1;
        let w = (x - grid[lo]) / (grid[hi] - grid[lo]);
        self.values[lo] * (1.0 - w) + self.values[hi] * w
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Draws one Matern GP path over the grid via a Cholesky factorization of
/// the Gram matrix. The diagonal jitter starts at 1e-10 and escalates by
/// factors of 10 up to 1e-6 before failing; fine grids of smooth kernels are
/// near-singular.
pub fn sample_gp_path(grid: &[f64], l: f64, nu: f64, seed: u64) -> Result<GpPath, SimGenError> {
    if grid.len() < 2 {
        return Err(SimGenError::BadParameters(
            "gp grid needs at least 2 points".into(),
        ));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SimGenError::BadParameters(
            "gp grid must be strictly increasing".into(),
        ));
    }
    let n = grid.len();
    let mut base = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = matern_kernel((grid[j] - grid[i]).abs(), l, nu)?;
            base[i * n + j] = v;
            base[j * n + i] = v;
        }
    }
    let mut jitter = 1e-10;
    let factor = loop {
        let mut gram = base.clone();
        for i in 0..n {
            gram[i * n + i] += jitter;
        }
        match linalg::cholesky_in_place(&mut gram, n, 0.0) {
            Ok(()) => break gram,
            Err(_) if jitter < 1e-6 => jitter *= 10.0,
            Err(_) => return Err(SimGenError::FactorizationFailed { jitter }),
        }
    };
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let z: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let mut values = vec![0.0; n];
    for i in 0..n {
        let mut acc = 0.0;
        for k in 0..=i {
            acc += factor[i * n + k] * z[k];
        }
        values[i] = acc;
    }
    Ok(GpPath { grid: grid.to_vec(), values })
}

/// Evenly spaced grid of `points` values covering [lo, hi].
pub fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_path_distinct_seeds_differ() {
        let grid = linspace(-2.0, 2.0, 41);
        let a = sample_gp_path(&grid, 1.0, 2.0, 5).unwrap();
        let b = sample_gp_path(&grid, 1.0, 2.0, 5).unwrap();
        let c = sample_gp_path(&grid, 1.0, 2.0, 6).unwrap();
        assert_eq!(a.values(), b.values());
        let max_diff = a
            .values()
            .iter()
            .zip(c.values())
            .map(|(p, q)| (p - q).abs())
            .fold(0.0f64, f64::max);
        assert!(max_diff > 0.0);
    }

    #[test]
    fn marginal_variance_is_near_one() {
        let grid = linspace(-5.0, 5.0, 51);
        let probe = 25; // a middle grid point
        let draws = 2000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for seed in 0..draws {
            let path = sample_gp_path(&grid, 1.0, 2.0, seed).unwrap();
            let v = path.values()[probe];
            sum += v;
            sum_sq += v * v;
        }
        let mean = sum / draws as f64;
        let var = sum_sq / draws as f64 - mean * mean;
        assert!((var - 1.0).abs() < 0.1, "marginal variance {var}");
    }

    #[test]
    fn interpolation_and_clamping() {
        let grid = vec![0.0, 1.0, 2.0];
        let path = GpPath { grid, values: vec![1.0, 3.0, 2.0] };
        assert_eq!(path.eval(0.5), 2.0);
        assert_eq!(path.eval(-10.0), 1.0);
        assert_eq!(path.eval(10.0), 2.0);
        assert_eq!(path.eval(1.0), 3.0);
    }

    #[test]
    fn rejects_unsorted_grid() {
        assert!(sample_gp_path(&[0.0, 0.0, 1.0], 1.0, 2.0, 1).is_err());
        assert!(sample_gp_path(&[0.0], 1.0, 2.0, 1).is_err());
    }
}
