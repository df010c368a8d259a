//! Synthetic and semi-synthetic data-generating processes with ground truth.
//!
//! All generators are deterministic per seed and emit a [`GenOutput`]: the
//! observable panel plus row-aligned truth with per-row tau and both
//! potential outcomes. The long-term outcome is evaluated for both arms but
//! dropped from the emitted panel on experimental rows.

mod gp;
mod semisynth;
mod special;

pub use gp::{linspace, sample_gp_path, GpPath};
pub use semisynth::{
    load_covariates_csv, sample_semisynth, semisynth_probabilities, synthetic_covariates,
    SemiSynthParams, SemiSynthPreset, UnobservedSpec,
};
pub use special::{bessel_k, matern_kernel};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::dataset::{DatasetError, GroundTruth, Group, PanelDataset, Row};
use crate::seeds;

#[derive(Debug, Error)]
pub enum SimGenError {
    #[error("bad generator parameters: {0}")]
    BadParameters(String),
    #[error("distance must be nonnegative, got {0}")]
    NegativeDistance(f64),
    #[error("argument must be positive, got {0}")]
    NonPositiveArgument(f64),
    #[error("unsupported matern smoothness {0}; use 1/2, 3/2, 5/2 or a positive integer")]
    UnsupportedSmoothness(f64),
    #[error("gram factorization failed even with jitter {jitter}")]
    FactorizationFailed { jitter: f64 },
    #[error("offset calibration failed: {0}")]
    Calibration(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// A generated panel with its row-aligned ground truth.
#[derive(Debug, Clone)]
pub struct GenOutput {
    pub dataset: PanelDataset,
    pub truth: GroundTruth,
}

/// Noise scales for the outcome equations; both default to standard normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseScales {
    pub s: f64,
    pub y: f64,
}

impl Default for NoiseScales {
    fn default() -> Self {
        NoiseScales { s: 1.0, y: 1.0 }
    }
}

/// Draws (x, u) for one unit given arm and group: bivariate normal with
/// x-mean +-1/2 (sign flipped between groups) and x-u correlation a - 1/2 in
/// the observational group, zero in the experimental group.
fn draw_x_u(g: Group, a: u8, rng: &mut ChaCha12Rng) -> (f64, f64) {
    let z1: f64 = rng.sample(StandardNormal);
    let z2: f64 = rng.sample(StandardNormal);
    let a_f = f64::from(a);
    match g {
        Group::E => ((2.0 * a_f - 1.0) / 2.0 + z1, z2),
        Group::O => {
            let rho = a_f - 0.5;
            let x = (1.0 - 2.0 * a_f) / 2.0 + z1;
            let u = rho * z1 + (1.0 - rho * rho).sqrt() * z2;
            (x, u)
        }
    }
}

/// Closed-form synthetic generator (Dataset 1).
///
/// Treatments are Bernoulli(1/2); covariates and the unobserved confounder
/// come from [`draw_x_u`]; outcomes follow
/// S = 1 + A + X + 2AX + 0.5 X^2 + A X^2 + U + eps_s and
/// Y = 2 + 3A + X + 4AX + X^2 + 2A X^2 + 2U - S + eps_y.
/// The true effect is tau(x) = 2 + 2x + x^2.
pub fn sample_dataset1(n_e: usize, n_o: usize, seed: u64) -> Result<GenOutput, SimGenError> {
    sample_dataset1_with_noise(n_e, n_o, NoiseScales::default(), seed)
}

pub fn sample_dataset1_with_noise(
    n_e: usize,
    n_o: usize,
    noise: NoiseScales,
    seed: u64,
) -> Result<GenOutput, SimGenError> {
    if n_e < 2 || n_o < 2 {
        return Err(SimGenError::BadParameters(format!(
            "need n_e >= 2 and n_o >= 2, got n_e={n_e}, n_o={n_o}"
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seeds::child_seed(seed, 0));
    let s_struct = |a: f64, x: f64, u: f64| {
        1.0 + a + x + 2.0 * a * x + 0.5 * x * x + a * x * x + u
    };
    let y_struct = |a: f64, x: f64, u: f64, s_a: f64| {
        2.0 + 3.0 * a + x + 4.0 * a * x + x * x + 2.0 * a * x * x + 2.0 * u - s_a
    };
    let mut rows = Vec::with_capacity(n_e + n_o);
    let mut tau = Vec::with_capacity(n_e + n_o);
    let mut potentials = Vec::with_capacity(n_e + n_o);
    for (g, count) in [(Group::E, n_e), (Group::O, n_o)] {
        for _ in 0..count {
            let a: u8 = u8::from(rng.gen::<f64>() < 0.5);
            let (x, u) = draw_x_u(g, a, &mut rng);
            let s0 = s_struct(0.0, x, u) + noise.s * rng.sample::<f64, _>(StandardNormal);
            let s1 = s_struct(1.0, x, u) + noise.s * rng.sample::<f64, _>(StandardNormal);
            let y0 = y_struct(0.0, x, u, s0) + noise.y * rng.sample::<f64, _>(StandardNormal);
            let y1 = y_struct(1.0, x, u, s1) + noise.y * rng.sample::<f64, _>(StandardNormal);
            let s = if a == 1 { s1 } else { s0 };
            let y = if a == 1 { y1 } else { y0 };
            rows.push(Row {
                g,
                a,
                x: vec![x],
                s,
                y: (g == Group::O).then_some(y),
            });
            tau.push(2.0 + 2.0 * x + x * x);
            potentials.push([s0, s1, y0, y1]);
        }
    }
    Ok(GenOutput {
        dataset: PanelDataset::from_rows(rows)?,
        truth: GroundTruth { tau, potentials: Some(potentials) },
    })
}

/// Dataset 2 parameters: Matern length scale and smoothness of the two GP
/// components, and the evaluation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset2Params {
    pub length_scale: f64,
    pub smoothness: f64,
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub grid_points: usize,
    pub noise: NoiseScales,
}

impl Default for Dataset2Params {
    fn default() -> Self {
        Dataset2Params {
            length_scale: 1.0,
            smoothness: 2.0,
            grid_lo: -5.0,
            grid_hi: 5.0,
            grid_points: 501,
            noise: NoiseScales::default(),
        }
    }
}

/// Gaussian-process synthetic generator (Dataset 2).
///
/// Treatments, covariates and the confounder are generated as in Dataset 1;
/// two independent Matern GP draws f0, f1 enter the outcomes as
/// S = f0(x) + A + 2AX + A X^2 + U + eps_s and
/// Y = f1(x) + 3A + X + 4AX + 2A X^2 + 2U - S + eps_y.
/// The GP terms and U cancel in the contrast, so tau(x) = 2 + 2x + x^2.
pub fn sample_dataset2(n_e: usize, n_o: usize, seed: u64) -> Result<GenOutput, SimGenError> {
    sample_dataset2_with_params(n_e, n_o, &Dataset2Params::default(), seed)
}

pub fn sample_dataset2_with_params(
    n_e: usize,
    n_o: usize,
    params: &Dataset2Params,
    seed: u64,
) -> Result<GenOutput, SimGenError> {
    if n_e < 2 || n_o < 2 {
        return Err(SimGenError::BadParameters(format!(
            "need n_e >= 2 and n_o >= 2, got n_e={n_e}, n_o={n_o}"
        )));
    }
    let grid = gp::linspace(params.grid_lo, params.grid_hi, params.grid_points);
    let f0 = sample_gp_path(&grid, params.length_scale, params.smoothness, seeds::child_seed(seed, 1))?;
    let f1 = sample_gp_path(&grid, params.length_scale, params.smoothness, seeds::child_seed(seed, 2))?;
    let mut rng = ChaCha12Rng::seed_from_u64(seeds::child_seed(seed, 3));
    let noise = params.noise;
    let s_struct = |a: f64, x: f64, u: f64, f0v: f64| a + 2.0 * a * x + a * x * x + u + f0v;
    let y_struct = |a: f64, x: f64, u: f64, f1v: f64, s_a: f64| {
        f1v + 3.0 * a + x + 4.0 * a * x + 2.0 * a * x * x + 2.0 * u - s_a
    };
    let mut rows = Vec::with_capacity(n_e + n_o);
    let mut tau = Vec::with_capacity(n_e + n_o);
    let mut potentials = Vec::with_capacity(n_e + n_o);
    for (g, count) in [(Group::E, n_e), (Group::O, n_o)] {
        for _ in 0..count {
            let a: u8 = u8::from(rng.gen::<f64>() < 0.5);
            let (x, u) = draw_x_u(g, a, &mut rng);
            let f0v = f0.eval(x);
            let f1v = f1.eval(x);
            let s0 = s_struct(0.0, x, u, f0v) + noise.s * rng.sample::<f64, _>(StandardNormal);
            let s1 = s_struct(1.0, x, u, f0v) + noise.s * rng.sample::<f64, _>(StandardNormal);
            let y0 = y_struct(0.0, x, u, f1v, s0) + noise.y * rng.sample::<f64, _>(StandardNormal);
            let y1 = y_struct(1.0, x, u, f1v, s1) + noise.y * rng.sample::<f64, _>(StandardNormal);
            let s = if a == 1 { s1 } else { s0 };
            let y = if a == 1 { y1 } else { y0 };
            rows.push(Row {
                g,
                a,
                x: vec![x],
                s,
                y: (g == Group::O).then_some(y),
            });
            tau.push(2.0 + 2.0 * x + x * x);
            potentials.push([s0, s1, y0, y1]);
        }
    }
    Ok(GenOutput {
        dataset: PanelDataset::from_rows(rows)?,
        truth: GroundTruth { tau, potentials: Some(potentials) },
    })
}
