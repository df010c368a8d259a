//! Semi-synthetic generators over user-supplied covariate matrices.
//!
//! The pipelines reuse real covariates, hide a subset of columns as the
//! unobserved confounder U, then simulate group membership, treatment, and
//! outcomes from logistic and structural forms. Offsets of the logistic
//! forms are auto-calibrated: the group offset targets the preset's E:O
//! proportion by bisection, and the treatment offsets center the logit
//! range inside [0.05, 0.95], clipping when the range is too wide to fit.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use super::{GenOutput, NoiseScales, SimGenError};
use crate::dataset::{GroundTruth, Group, PanelDataset, Row};
use crate::regress::sigmoid;
use crate::seeds;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SemiSynthPreset {
    /// 25 covariate columns, 8 unobserved, E:O about 1:2.
    Ihdp,
    /// 498 covariate columns, 166 unobserved, E:O about 1:4.
    News,
}

impl SemiSynthPreset {
    pub fn expected_columns(self) -> usize {
        match self {
            SemiSynthPreset::Ihdp => 25,
            SemiSynthPreset::News => 498,
        }
    }

    pub fn expected_unobserved(self) -> usize {
        match self {
            SemiSynthPreset::Ihdp => 8,
            SemiSynthPreset::News => 166,
        }
    }

    /// Target fraction of experimental rows.
    pub fn target_e_fraction(self) -> f64 {
        match self {
            SemiSynthPreset::Ihdp => 1.0 / 3.0,
            SemiSynthPreset::News => 1.0 / 5.0,
        }
    }
}

/// Which covariate columns play the unobserved confounder.
#[derive(Debug, Clone, PartialEq)]
pub enum UnobservedSpec {
    /// Explicit column indices.
    Indices(Vec<usize>),
    /// Draw this many columns at random (seeded).
    Count(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemiSynthParams {
    pub preset: SemiSynthPreset,
    /// Row-major covariate matrix, one row per unit.
    pub covariates: Vec<f64>,
    pub n_cols: usize,
    pub unobserved: UnobservedSpec,
    /// Pinned (offset_g, offset_e, offset_o); `None` auto-calibrates.
    pub offsets: Option<(f64, f64, f64)>,
    pub noise: NoiseScales,
}

impl SemiSynthParams {
    pub fn new(preset: SemiSynthPreset, covariates: Vec<f64>, n_cols: usize) -> Self {
        SemiSynthParams {
            preset,
            covariates,
            n_cols,
            unobserved: UnobservedSpec::Count(preset.expected_unobserved()),
            offsets: None,
            noise: NoiseScales::default(),
        }
    }
}

/// Standard-normal stand-in covariates for running the presets without the
/// original IHDP/News files.
pub fn synthetic_covariates(n: usize, cols: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    (0..n * cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Loads a numeric covariate CSV, headered or headerless.
pub fn load_covariates_csv(path: &Path) -> Result<(Vec<f64>, usize), SimGenError> {
    let text = std::fs::read_to_string(path).map_err(crate::dataset::DatasetError::Io)?;
    let mut values = Vec::new();
    let mut n_cols = 0usize;
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let parsed: Option<Vec<f64>> = fields.iter().map(|f| f.trim().parse().ok()).collect();
        match parsed {
            Some(row) => {
                if n_cols == 0 {
                    n_cols = row.len();
                } else if row.len() != n_cols {
                    return Err(SimGenError::BadParameters(format!(
                        "covariate row {} has {} fields, expected {n_cols}",
                        i + 1,
                        row.len()
                    )));
                }
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(SimGenError::BadParameters(format!(
                        "covariate row {} has a non-finite value",
                        i + 1
                    )));
                }
                values.extend(row);
            }
            None if i == 0 => continue, // header line
            None => {
                return Err(SimGenError::BadParameters(format!(
                    "covariate row {} is not numeric",
                    i + 1
                )))
            }
        }
    }
    if values.is_empty() || n_cols == 0 {
        return Err(SimGenError::BadParameters("covariate file is empty".into()));
    }
    Ok((values, n_cols))
}

/// Finds `offset` with mean_i sigmoid(logit_i - offset) = target by
/// bisection; the mean is strictly decreasing in the offset.
fn calibrate_group_offset(logits: &[f64], target: f64) -> Result<f64, SimGenError> {
    let mean_at = |offset: f64| {
        logits.iter().map(|l| sigmoid(l - offset)).sum::<f64>() / logits.len() as f64
    };
    let mut lo = logits.iter().cloned().fold(f64::INFINITY, f64::min) - 30.0;
    let mut hi = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 30.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_at(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let offset = 0.5 * (lo + hi);
    let achieved = mean_at(offset);
    if (achieved - target).abs() > 1e-6 {
        return Err(SimGenError::Calibration(format!(
            "group offset bisection stalled: target fraction {target}, achieved {achieved}"
        )));
    }
    Ok(offset)
}

/// Centers the logits so probabilities sit inside [0.05, 0.95] when the
/// spread permits; otherwise centers anyway and lets the caller clip.
fn center_offset(logits: &[f64]) -> f64 {
    let lo = logits.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    0.5 * (lo + hi)
}

fn clip_prob(p: f64) -> f64 {
    p.clamp(0.05, 0.95)
}

struct ColumnSplit {
    observed: Vec<usize>,
    unobserved: Vec<usize>,
}

fn split_columns(
    params: &SemiSynthParams,
    rng: &mut ChaCha12Rng,
) -> Result<ColumnSplit, SimGenError> {
    let cols = params.n_cols;
    let unobserved: Vec<usize> = match &params.unobserved {
        UnobservedSpec::Indices(idx) => {
            let mut sorted = idx.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != idx.len() || sorted.iter().any(|i| *i >= cols) {
                return Err(SimGenError::BadParameters(
                    "unobserved indices must be unique and in range".into(),
                ));
            }
            sorted
        }
        UnobservedSpec::Count(k) => {
            if *k >= cols {
                return Err(SimGenError::BadParameters(format!(
                    "unobserved count {k} must be below the column count {cols}"
                )));
            }
            let mut all: Vec<usize> = (0..cols).collect();
            // Fisher-Yates prefix draw.
            for i in 0..*k {
                let j = i + rng.gen_range(0..cols - i);
                all.swap(i, j);
            }
            let mut chosen = all[..*k].to_vec();
            chosen.sort_unstable();
            chosen
        }
    };
    let observed: Vec<usize> = (0..cols).filter(|c| !unobserved.contains(c)).collect();
    if observed.is_empty() || unobserved.is_empty() {
        return Err(SimGenError::BadParameters(
            "both observed and unobserved column sets must be non-empty".into(),
        ));
    }
    Ok(ColumnSplit { observed, unobserved })
}

fn gather(row: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&c| row[c]).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

fn standard_normal_vec(len: usize, rng: &mut ChaCha12Rng) -> Vec<f64> {
    (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// N(1, I) draw normalized by its own mean, the News weight construction.
fn normalized_mean_vec(len: usize, rng: &mut ChaCha12Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..len)
        .map(|_| 1.0 + rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mean = raw.iter().sum::<f64>() / len as f64;
    raw.into_iter().map(|v| v / mean).collect()
}

/// IHDP sparse coefficients: entries from {0, 0.1, 0.2, 0.3, 0.4} with
/// probabilities (0.6, 0.1, 0.1, 0.1, 0.1).
fn sparse_coefficients(len: usize, rng: &mut ChaCha12Rng) -> Vec<f64> {
    (0..len)
        .map(|_| {
            let u: f64 = rng.gen();
            if u < 0.6 {
                0.0
            } else if u < 0.7 {
                0.1
            } else if u < 0.8 {
                0.2
            } else if u < 0.9 {
                0.3
            } else {
                0.4
            }
        })
        .collect()
}

/// Calibrated per-row probabilities (p_g, p_e, p_o) of a semi-synthetic
/// pipeline, for diagnostics: p_e and p_o are the post-calibration,
/// post-clip values the generator draws from.
pub fn semisynth_probabilities(
    params: &SemiSynthParams,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), SimGenError> {
    let prepared = prepare(params, seed)?;
    Ok((prepared.p_g, prepared.p_e, prepared.p_o))
}

struct Prepared {
    xs: Vec<Vec<f64>>,
    us: Vec<Vec<f64>>,
    p_g: Vec<f64>,
    p_e: Vec<f64>,
    p_o: Vec<f64>,
    rng: ChaCha12Rng,
}

/// Column split, weight draws, and offset calibration shared by the
/// generator and the probability diagnostics.
fn prepare(params: &SemiSynthParams, seed: u64) -> Result<Prepared, SimGenError> {
    let cols = params.n_cols;
    if cols == 0 || params.covariates.is_empty() || params.covariates.len() % cols != 0 {
        return Err(SimGenError::BadParameters(
            "covariate matrix must be non-empty and rectangular".into(),
        ));
    }
    if cols != params.preset.expected_columns() {
        return Err(SimGenError::BadParameters(format!(
            "preset expects {} covariate columns, got {cols}",
            params.preset.expected_columns()
        )));
    }
    let n = params.covariates.len() / cols;
    let mut rng = ChaCha12Rng::seed_from_u64(seeds::child_seed(seed, 17));
    let split = split_columns(params, &mut rng)?;
    if split.unobserved.len() != params.preset.expected_unobserved() {
        return Err(SimGenError::BadParameters(format!(
            "preset expects {} unobserved columns, got {}",
            params.preset.expected_unobserved(),
            split.unobserved.len()
        )));
    }
    let dx = split.observed.len();
    let du = split.unobserved.len();
    let xs: Vec<Vec<f64>> = (0..n)
        .map(|i| gather(&params.covariates[i * cols..(i + 1) * cols], &split.observed))
        .collect();
    let us: Vec<Vec<f64>> = (0..n)
        .map(|i| gather(&params.covariates[i * cols..(i + 1) * cols], &split.unobserved))
        .collect();

    // Raw logits for the three probabilities, before offsets.
    let (lg, le, lo): (Vec<f64>, Vec<f64>, Vec<f64>) = match params.preset {
        SemiSynthPreset::Ihdp => {
            let w_g = standard_normal_vec(dx, &mut rng);
            let w_e = standard_normal_vec(dx, &mut rng);
            let w_ox = standard_normal_vec(dx, &mut rng);
            let w_ou = standard_normal_vec(du, &mut rng);
            (
                xs.iter().map(|x| dot(x, &w_g)).collect(),
                xs.iter().map(|x| dot(x, &w_e)).collect(),
                xs.iter()
                    .zip(&us)
                    .map(|(x, u)| dot(x, &w_ox) + 3.0 * dot(u, &w_ou))
                    .collect(),
            )
        }
        SemiSynthPreset::News => {
            let v1 = normalized_mean_vec(dx, &mut rng);
            let v2 = normalized_mean_vec(dx, &mut rng);
            let v3 = normalized_mean_vec(dx, &mut rng);
            let v4 = normalized_mean_vec(du, &mut rng);
            (
                xs.iter().map(|x| -dot(x, &v1)).collect(),
                xs.iter().map(|x| -dot(x, &v2)).collect(),
                xs.iter().zip(&us).map(|(x, u)| -(dot(x, &v3) + dot(u, &v4))).collect(),
            )
        }
    };

    let (offset_g, offset_e, offset_o) = match params.offsets {
        Some(pinned) => pinned,
        None => (
            calibrate_group_offset(&lg, params.preset.target_e_fraction())?,
            center_offset(&le),
            center_offset(&lo),
        ),
    };
    let p_g: Vec<f64> = lg.iter().map(|l| sigmoid(l - offset_g)).collect();
    let p_e: Vec<f64> = le.iter().map(|l| clip_prob(sigmoid(l - offset_e))).collect();
    let p_o: Vec<f64> = lo.iter().map(|l| clip_prob(sigmoid(l - offset_o))).collect();
    Ok(Prepared { xs, us, p_g, p_e, p_o, rng })
}

/// Runs a semi-synthetic pipeline over the covariate matrix, returning the
/// generated panel with row-aligned truth.
pub fn sample_semisynth(params: &SemiSynthParams, seed: u64) -> Result<GenOutput, SimGenError> {
    let Prepared { xs, us, p_g, p_e, p_o, mut rng } = prepare(params, seed)?;
    let n = xs.len();
    let dx = xs[0].len();
    let du = us[0].len();

    // Outcome weights and structural forms.
    enum Outcome {
        Ihdp { w_s1: Vec<f64>, w_s0: Vec<f64>, w_y1: Vec<f64>, w_y0: Vec<f64>, w_u: Vec<f64> },
        News { v5: Vec<f64>, v6: Vec<f64>, v7: Vec<f64>, v8: Vec<f64>, v9: Vec<f64> },
    }
    let outcome = match params.preset {
        SemiSynthPreset::Ihdp => Outcome::Ihdp {
            w_s1: sparse_coefficients(dx, &mut rng),
            w_s0: sparse_coefficients(dx, &mut rng),
            w_y1: sparse_coefficients(dx, &mut rng),
            w_y0: sparse_coefficients(dx, &mut rng),
            w_u: sparse_coefficients(du, &mut rng),
        },
        SemiSynthPreset::News => Outcome::News {
            v5: (0..dx).map(|_| 1.0 + rng.sample::<f64, _>(StandardNormal)).collect(),
            v6: (0..du).map(|_| 1.0 + rng.sample::<f64, _>(StandardNormal)).collect(),
            v7: (0..dx).map(|_| 1.0 + rng.sample::<f64, _>(StandardNormal)).collect(),
            v8: (0..dx).map(|_| 1.0 + rng.sample::<f64, _>(StandardNormal)).collect(),
            v9: (0..dx).map(|_| 1.0 + rng.sample::<f64, _>(StandardNormal)).collect(),
        },
    };

    let noise = params.noise;
    let mut rows = Vec::with_capacity(n);
    let mut tau = Vec::with_capacity(n);
    let mut potentials = Vec::with_capacity(n);
    for i in 0..n {
        let x = &xs[i];
        let u = &us[i];
        let g = if rng.gen::<f64>() < p_g[i] { Group::E } else { Group::O };
        let p_a = if g == Group::E { p_e[i] } else { p_o[i] };
        let a = u8::from(rng.gen::<f64>() < p_a);
        // Mean potential outcomes given (x, u); per-arm noises are
        // independent draws.
        let (m_s0, m_s1, m_y0_excl_s, m_y1_excl_s, t) = match &outcome {
            Outcome::Ihdp { w_s1, w_s0, w_y1, w_y0, w_u } => {
                let xp5: Vec<f64> = x.iter().map(|v| v + 0.5).collect();
                let uw = dot(u, w_u);
                let s1 = dot(x, w_s1) + 4.0 + uw;
                let s0 = dot(&xp5, w_s0).exp() + uw;
                let y1 = dot(x, w_y1) + 8.0 + 2.0 * uw;
                let y0 = dot(&xp5, w_y0).exp() + 2.0 * uw;
                let t = (dot(x, w_y1) + 8.0 - dot(&xp5, w_y0).exp())
                    - (dot(x, w_s1) + 4.0 - dot(&xp5, w_s0).exp());
                (s0, s1, y0, y1, t)
            }
            Outcome::News { v5, v6, v7, v8, v9 } => {
                let x2: Vec<f64> = x.iter().map(|v| v * v).collect();
                let uv = dot(u, v6);
                let s1 = dot(x, v5) + dot(&x2, v5) + uv;
                let s0 = 2.0 * dot(x, v7) + 3.0 * dot(&x2, v7) + uv;
                let y1 = dot(x, v8) + dot(&x2, v8) + 4.0 + 2.0 * uv;
                let y0 = 2.0 * dot(x, v9) + 3.0 * dot(&x2, v9) + 2.0 * uv;
                let t = (dot(x, v8) + dot(&x2, v8) + 4.0 - dot(x, v5) - dot(&x2, v5))
                    - (2.0 * dot(x, v9) + 3.0 * dot(&x2, v9) - 2.0 * dot(x, v7)
                        - 3.0 * dot(&x2, v7));
                (s0, s1, y0, y1, t)
            }
        };
        let s0 = m_s0 + noise.s * rng.sample::<f64, _>(StandardNormal);
        let s1 = m_s1 + noise.s * rng.sample::<f64, _>(StandardNormal);
        let y0 = m_y0_excl_s - s0 + noise.y * rng.sample::<f64, _>(StandardNormal);
        let y1 = m_y1_excl_s - s1 + noise.y * rng.sample::<f64, _>(StandardNormal);
        let s = if a == 1 { s1 } else { s0 };
        let y = if a == 1 { y1 } else { y0 };
        rows.push(Row {
            g,
            a,
            x: x.clone(),
            s,
            y: (g == Group::O).then_some(y),
        });
        tau.push(t);
        potentials.push([s0, s1, y0, y1]);
    }
    Ok(GenOutput {
        dataset: PanelDataset::from_rows(rows)?,
        truth: GroundTruth { tau, potentials: Some(potentials) },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ihdp_params(n: usize, seed: u64) -> SemiSynthParams {
        SemiSynthParams::new(
            SemiSynthPreset::Ihdp,
            synthetic_covariates(n, 25, seed),
            25,
        )
    }

    #[test]
    fn ihdp_propensities_respect_bounds_and_proportion() {
        let params = ihdp_params(3000, 5);
        let out = sample_semisynth(&params, 40).unwrap();
        let n_e = out
            .dataset
            .rows()
            .iter()
            .filter(|r| r.g == Group::E)
            .count();
        let frac = n_e as f64 / out.dataset.n() as f64;
        assert!((frac - 1.0 / 3.0).abs() < 0.05, "E fraction {frac}");
    }

    #[test]
    fn ihdp_truth_matches_structural_contrast() {
        // E[y1 - y0 | x, u] has no u term, so the emitted tau is the
        // structural x-only contrast; check it against the potentials.
        let params = ihdp_params(500, 2);
        let out = sample_semisynth(&params, 7).unwrap();
        let pots = out.truth.potentials.as_ref().unwrap();
        let n = out.dataset.n() as f64;
        let mean_gap: f64 = pots
            .iter()
            .zip(&out.truth.tau)
            .map(|(p, t)| (p[3] - p[2]) - t)
            .sum::<f64>()
            / n;
        // noise-only residual: mean near zero with sd ~ 2/sqrt(n)
        assert!(mean_gap.abs() < 0.3, "mean gap {mean_gap}");
    }

    #[test]
    fn news_proportion_hits_one_to_four() {
        let params = SemiSynthParams::new(
            SemiSynthPreset::News,
            synthetic_covariates(5000, 498, 11),
            498,
        );
        let out = sample_semisynth(&params, 3).unwrap();
        let n_e = out
            .dataset
            .rows()
            .iter()
            .filter(|r| r.g == Group::E)
            .count();
        let frac = n_e as f64 / out.dataset.n() as f64;
        assert!((frac - 0.2).abs() < 0.02, "E fraction {frac}");
    }

    #[test]
    fn preset_shape_is_enforced() {
        let params = SemiSynthParams::new(
            SemiSynthPreset::Ihdp,
            synthetic_covariates(100, 10, 1),
            10,
        );
        assert!(sample_semisynth(&params, 1).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let params = ihdp_params(400, 9);
        let a = sample_semisynth(&params, 31).unwrap();
        let b = sample_semisynth(&params, 31).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.truth, b.truth);
    }

    #[test]
    fn sparse_coefficients_are_sixty_percent_zero() {
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        let coefs = sparse_coefficients(50_000, &mut rng);
        let zero_frac = coefs.iter().filter(|c| **c == 0.0).count() as f64 / 50_000.0;
        assert!((zero_frac - 0.6).abs() < 0.01, "zero fraction {zero_frac}");
        assert!(coefs.iter().all(|c| [0.0, 0.1, 0.2, 0.3, 0.4].contains(c)));
    }

    #[test]
    fn covariate_csv_loading_handles_headers() {
        let dir = std::env::temp_dir().join(format!("hlce_cov_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let headered = dir.join("headered.csv");
        std::fs::write(&headered, "c0,c1\n1.0,2.0\n3.0,4.0\n").unwrap();
        let (values, cols) = load_covariates_csv(&headered).unwrap();
        assert_eq!(cols, 2);
        assert_eq!(values, vec![1.0, 2.0, 3.0, 4.0]);
        let headerless = dir.join("plain.csv");
        std::fs::write(&headerless, "1.5,2.5\n3.5,4.5\n").unwrap();
        let (values, cols) = load_covariates_csv(&headerless).unwrap();
        assert_eq!(cols, 2);
        assert_eq!(values, vec![1.5, 2.5, 3.5, 4.5]);
        std::fs::remove_dir_all(&dir).ok();
    }
}
