//! Experiment orchestration: misspecification, sample-size sweeps, rate
//! extraction, oracle checks, and semi-synthetic runs, with CSV/JSON report
//! persistence and SVG plot emission.
//!
//! Every record carries the seed, preset, estimator kind, and sizes needed
//! to re-run its cell exactly; replications run in parallel but results are
//! merged in deterministic (cell, seed) order.

mod plot;
mod report;

pub use plot::{emit_plot, render_plot, PlotKind};
pub use report::{
    read_report_csv, read_report_json, write_report, ExperimentReport, ReportConfig, ReportFormat,
};

use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetError, PanelDataset};
use crate::estimator::{
    self, EstimatorConfig, EstimatorError, EstimatorKind, Splitting,
};
use crate::metrics::{self, MetricRecord, MetricsError};
use crate::nuisance::{Backend, NuisanceError, NuisanceSpec};
use crate::regress::RegressorSpec;
use crate::seeds;
use crate::simgen::{
    self, sample_semisynth, GenOutput, SemiSynthParams, SemiSynthPreset, SimGenError,
    UnobservedSpec,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("bad experiment config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    SimGen(#[from] SimGenError),
    #[error(transparent)]
    Nuisance(#[from] NuisanceError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("report is empty")]
    EmptyReport,
    #[error("report does not match plot kind: {0}")]
    WrongReportKind(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Experiment selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Misspec,
    SweepE,
    SweepO,
    Rates,
    OracleCheck,
    Semisynth,
}

impl ExperimentKind {
    pub fn label(self) -> &'static str {
        match self {
            ExperimentKind::Misspec => "misspec",
            ExperimentKind::SweepE => "sweep-e",
            ExperimentKind::SweepO => "sweep-o",
            ExperimentKind::Rates => "rates",
            ExperimentKind::OracleCheck => "oracle-check",
            ExperimentKind::Semisynth => "semisynth",
        }
    }
}

/// Experiment configuration; serde-compatible with the CLI's --config JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub estimators: Vec<EstimatorKind>,
    pub replications: usize,
    pub seed: u64,
    /// Default sample sizes; experiments override per their design when
    /// unset.
    pub n_e: Option<usize>,
    pub n_o: Option<usize>,
    /// Experimental-size grid for sweep-e.
    pub n_e_grid: Vec<usize>,
    /// Observational-size grid for sweep-o.
    pub n_o_grid: Vec<usize>,
    /// Total-size grid for the rate experiment.
    pub rates_grid: Vec<usize>,
    /// Shrinks the misspecification experiment to desk scale.
    pub fast: bool,
    /// Worker threads; 0 uses the default pool.
    pub workers: usize,
    pub semisynth_preset: Option<String>,
    /// Units drawn for the semi-synthetic stand-in covariates.
    pub semisynth_n: usize,
    /// Covariate CSV for the semi-synthetic presets; a standard-normal
    /// stand-in matrix is drawn when absent.
    pub covariates: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: ExperimentKind::OracleCheck,
            estimators: EstimatorKind::all().to_vec(),
            replications: 10,
            seed: 0,
            n_e: None,
            n_o: None,
            n_e_grid: vec![100, 150, 250, 500, 1000, 1500, 3000, 5000, 10000],
            n_o_grid: vec![400, 600, 800, 1000, 2000, 3000, 4000, 5000, 10000],
            rates_grid: vec![2000, 4000, 8000, 16000, 32000],
            fast: false,
            workers: 0,
            semisynth_preset: None,
            semisynth_n: 2000,
            covariates: None,
        }
    }
}

impl ExperimentConfig {
    fn validate(&self) -> Result<(), HarnessError> {
        if self.replications == 0 {
            return Err(HarnessError::BadConfig("replications must be >= 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(HarnessError::BadConfig("estimator list must be non-empty".into()));
        }
        match self.experiment {
            ExperimentKind::SweepE if self.n_e_grid.is_empty() => {
                Err(HarnessError::BadConfig("sweep-e grid is empty".into()))
            }
            ExperimentKind::SweepO if self.n_o_grid.is_empty() => {
                Err(HarnessError::BadConfig("sweep-o grid is empty".into()))
            }
            ExperimentKind::Rates if self.rates_grid.len() < 4 => {
                Err(HarnessError::BadConfig("rate experiment needs >= 4 grid sizes".into()))
            }
            ExperimentKind::Misspec
                if !self.estimators.contains(&EstimatorKind::Mr) =>
            {
                Err(HarnessError::BadConfig("misspec experiment requires the mr estimator".into()))
            }
            _ => Ok(()),
        }
    }

    fn echo(&self, n_e: usize, n_o: usize, nuisance: &str, stage2: &str) -> ReportConfig {
        ReportConfig {
            experiment: self.experiment.label().to_string(),
            estimators: self.estimators.iter().map(|k| k.label().to_string()).collect(),
            replications: self.replications,
            seed: self.seed,
            n_e,
            n_o,
            n_e_grid: self.n_e_grid.clone(),
            n_o_grid: self.n_o_grid.clone(),
            rates_grid: self.rates_grid.clone(),
            nuisance: nuisance.to_string(),
            stage2: stage2.to_string(),
            fast: self.fast,
        }
    }
}

/// Train/test material for one replication: fitted on `train`, scored on
/// `test` against the row-aligned true effects.
struct SplitData {
    train: PanelDataset,
    test: PanelDataset,
    test_tau: Vec<f64>,
}

/// Splits a generated draw 63/27/10 and keeps the test rows' truth.
fn split_for_eval(out: &GenOutput, seed: u64) -> Result<SplitData, HarnessError> {
    let idx = out
        .dataset
        .partition_indices(&[0.63, 0.27, 0.10], seeds::salted_seed(seed, "eval-split"))?;
    let rows = out.dataset.rows();
    let take = |part: &[usize]| -> Result<PanelDataset, DatasetError> {
        PanelDataset::from_rows(part.iter().map(|&i| rows[i].clone()).collect())
    };
    let train = take(&idx[0])?;
    let test = take(&idx[2])?;
    let test_tau = idx[2].iter().map(|&i| out.truth.tau[i]).collect();
    Ok(SplitData { train, test, test_tau })
}

/// Fits one estimator on the train part and scores it on the test part.
fn score(
    kind: EstimatorKind,
    config: &EstimatorConfig,
    split: &SplitData,
    preset: &str,
    n_e: usize,
    n_o: usize,
    seed: u64,
) -> Result<MetricRecord, HarnessError> {
    let start = Instant::now();
    let model = estimator::fit_two_stage(&split.train, config)?;
    let tau_hat = model.predict_dataset(&split.test)?;
    let pehe = metrics::pehe(&tau_hat, &split.test_tau)?;
    let ate_error = metrics::ate_error(&tau_hat, &split.test_tau)?;
    Ok(MetricRecord {
        estimator: kind.label().to_string(),
        preset: preset.to_string(),
        n_e,
        n_o,
        seed,
        pehe,
        ate_error,
        wall_ms: start.elapsed().as_millis() as u64,
    })
}

/// Like [`score`] but reuses a nuisance set fitted once per cell.
fn score_with_nuisances(
    kind: EstimatorKind,
    ns: &crate::nuisance::NuisanceSet,
    stage2: &RegressorSpec,
    split: &SplitData,
    preset: &str,
    n_e: usize,
    n_o: usize,
    seed: u64,
) -> Result<MetricRecord, HarnessError> {
    let start = Instant::now();
    let model = estimator::fit_with_nuisances(&split.train, ns, kind, stage2, seed)?;
    let tau_hat = model.predict_dataset(&split.test)?;
    let pehe = metrics::pehe(&tau_hat, &split.test_tau)?;
    let ate_error = metrics::ate_error(&tau_hat, &split.test_tau)?;
    Ok(MetricRecord {
        estimator: kind.label().to_string(),
        preset: preset.to_string(),
        n_e,
        n_o,
        seed,
        pehe,
        ate_error,
        wall_ms: start.elapsed().as_millis() as u64,
    })
}

/// Runs closures over cells on a bounded pool, merging per-cell record
/// batches in cell order.
fn run_cells<C, F>(cells: Vec<C>, workers: usize, job: F) -> Result<Vec<MetricRecord>, HarnessError>
where
    C: Send,
    F: Fn(&C) -> Result<Vec<MetricRecord>, HarnessError> + Sync + Send,
{
    let run = move || -> Result<Vec<Vec<MetricRecord>>, HarnessError> {
        cells.into_par_iter().map(|cell| job(&cell)).collect()
    };
    let batches = if workers == 0 {
        run()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| HarnessError::BadConfig(format!("thread pool: {e}")))?;
        pool.install(run)?
    };
    Ok(batches.into_iter().flatten().collect())
}

// ---------------------------------------------------------------------------
// Misspecification experiment
// ---------------------------------------------------------------------------

/// The six per-nuisance correctness presets of the robustness experiment:
/// all four sets correct, exactly one of the four consistency sets correct,
/// and none correct.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MisspecPreset {
    AllCorrect,
    OnlySet1,
    OnlySet2,
    OnlySet3,
    OnlySet4,
    AllMisspec,
}

impl MisspecPreset {
    pub fn all() -> [MisspecPreset; 6] {
        [
            MisspecPreset::AllCorrect,
            MisspecPreset::OnlySet1,
            MisspecPreset::OnlySet2,
            MisspecPreset::OnlySet3,
            MisspecPreset::OnlySet4,
            MisspecPreset::AllMisspec,
        ]
    }

    /// Report label: primes mark the consistency sets that are broken under
    /// this preset.
    pub fn label(self) -> &'static str {
        match self {
            MisspecPreset::AllCorrect => "M_{1,2,3,4}",
            MisspecPreset::OnlySet1 => "M_{1,2',3',4'}",
            MisspecPreset::OnlySet2 => "M_{1',2,3',4'}",
            MisspecPreset::OnlySet3 => "M_{1',2',3,4'}",
            MisspecPreset::OnlySet4 => "M_{1',2',3',4}",
            MisspecPreset::AllMisspec => "M_{1',2',3',4'}",
        }
    }

    /// Which of the six nuisances are fit with the correct parametric
    /// recipe, in the order (mu_s_e, mu_s_o, mu_y_o, pi_e, pi_o, pi_g).
    fn correct_mask(self) -> [bool; 6] {
        match self {
            MisspecPreset::AllCorrect => [true; 6],
            // set 1 = {mu_s_o, mu_s_e, mu_y_o}
            MisspecPreset::OnlySet1 => [true, true, true, false, false, false],
            // set 2 = {pi_e, pi_o, pi_g}
            MisspecPreset::OnlySet2 => [false, false, false, true, true, true],
            // set 3 = {mu_s_e, pi_o}
            MisspecPreset::OnlySet3 => [true, false, false, false, true, false],
            // set 4 = {pi_e, mu_s_o, mu_y_o, pi_g}
            MisspecPreset::OnlySet4 => [false, true, true, true, false, true],
            MisspecPreset::AllMisspec => [false; 6],
        }
    }

    /// Nuisance spec realizing the preset: named nuisances correct
    /// parametric, all others misspecified parametric.
    pub fn nuisance_spec(self) -> NuisanceSpec {
        let pick = |correct: bool| {
            if correct {
                Backend::CorrectParametric
            } else {
                Backend::MisspecParametric
            }
        };
        let mask = self.correct_mask();
        let mut spec = NuisanceSpec::correct_parametric();
        spec.mu_s_e = pick(mask[0]);
        spec.mu_s_o = pick(mask[1]);
        spec.mu_y_o = pick(mask[2]);
        spec.pi_e = pick(mask[3]);
        spec.pi_o = pick(mask[4]);
        spec.pi_g = pick(mask[5]);
        spec
    }
}

/// Robustness experiment: the mr estimator on fresh closed-form draws under
/// the six misspecification presets, with parametric nuisances and a
/// degree-2 polynomial second stage. Reports test-split PEHE per
/// replication.
pub fn run_misspec(config: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    config.validate()?;
    let (n_e, n_o) = if config.fast {
        (config.n_e.unwrap_or(5000), config.n_o.unwrap_or(7500))
    } else {
        (config.n_e.unwrap_or(10000), config.n_o.unwrap_or(15000))
    };
    let mut cells = Vec::new();
    for rep in 0..config.replications {
        for preset in MisspecPreset::all() {
            cells.push((rep, preset));
        }
    }
    let records = run_cells(cells, config.workers, |&(rep, preset)| {
        let seed = seeds::child_seed(config.seed, rep as u64);
        let out = simgen::sample_dataset1(n_e, n_o, seed)?;
        let split = split_for_eval(&out, seed)?;
        let est_config = EstimatorConfig {
            kind: EstimatorKind::Mr,
            nuisance: preset.nuisance_spec(),
            stage2: RegressorSpec::polynomial(2),
            splitting: Splitting::FullData,
            seed,
        };
        let record = score(
            EstimatorKind::Mr,
            &est_config,
            &split,
            preset.label(),
            n_e,
            n_o,
            seed,
        )?;
        Ok(vec![record])
    })?;
    Ok(ExperimentReport {
        config: config.echo(n_e, n_o, "parametric-per-preset", "poly2"),
        records,
    })
}

// ---------------------------------------------------------------------------
// Sample-size sweeps
// ---------------------------------------------------------------------------

/// Which sample size a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    E,
    O,
}

/// Sample-size sweep on the Gaussian-process generator: one size varies
/// over its grid while the other stays at its default; kernel nuisances and
/// a kernel-ridge second stage.
pub fn run_sweep(config: &ExperimentConfig, axis: SweepAxis) -> Result<ExperimentReport, HarnessError> {
    config.validate()?;
    let default_n_e = config.n_e.unwrap_or(1000);
    let default_n_o = config.n_o.unwrap_or(2000);
    let grid = match axis {
        SweepAxis::E => &config.n_e_grid,
        SweepAxis::O => &config.n_o_grid,
    };
    let mut cells = Vec::new();
    for (gi, &size) in grid.iter().enumerate() {
        for rep in 0..config.replications {
            cells.push((gi, size, rep));
        }
    }
    let estimators = config.estimators.clone();
    let records = run_cells(cells, config.workers, |&(gi, size, rep)| {
        let (n_e, n_o) = match axis {
            SweepAxis::E => (size, default_n_o),
            SweepAxis::O => (default_n_e, size),
        };
        let seed = seeds::child_seed(config.seed, (gi * 10_000 + rep) as u64);
        let out = simgen::sample_dataset2(n_e, n_o, seed)?;
        let split = split_for_eval(&out, seed)?;
        let ns = crate::nuisance::fit_nuisances(&split.train, &NuisanceSpec::kernel())?;
        let stage2 = RegressorSpec::KernelRidge(Default::default());
        let mut records = Vec::with_capacity(estimators.len());
        for &kind in &estimators {
            records.push(score_with_nuisances(
                kind, &ns, &stage2, &split, "none", n_e, n_o, seed,
            )?);
        }
        Ok(records)
    })?;
    Ok(ExperimentReport {
        config: config.echo(default_n_e, default_n_o, "kernel", "kernel-ridge"),
        records,
    })
}

// ---------------------------------------------------------------------------
// Rate experiment
// ---------------------------------------------------------------------------

/// Convergence-rate experiment: closed-form draws over a total-size grid,
/// correctly specified parametric nuisances, two-fold split between the
/// stages, degree-2 polynomial second stage.
pub fn run_rates(config: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    config.validate()?;
    let mut cells = Vec::new();
    for (gi, &total) in config.rates_grid.iter().enumerate() {
        for rep in 0..config.replications {
            cells.push((gi, total, rep));
        }
    }
    let estimators = config.estimators.clone();
    let records = run_cells(cells, config.workers, |&(gi, total, rep)| {
        // Keep the default 2:3 ratio between the data sources.
        let n_e = (total as f64 * 0.4).round() as usize;
        let n_o = total - n_e;
        let seed = seeds::child_seed(config.seed, (gi * 10_000 + rep) as u64);
        let out = simgen::sample_dataset1(n_e, n_o, seed)?;
        let split = split_for_eval(&out, seed)?;
        let mut records = Vec::with_capacity(estimators.len());
        for &kind in &estimators {
            let est_config = EstimatorConfig {
                kind,
                nuisance: NuisanceSpec::correct_parametric(),
                stage2: RegressorSpec::polynomial(2),
                splitting: Splitting::TwoFoldSplit,
                seed,
            };
            records.push(score(kind, &est_config, &split, "none", n_e, n_o, seed)?);
        }
        Ok(records)
    })?;
    Ok(ExperimentReport {
        config: config.echo(0, 0, "correct-parametric", "poly2"),
        records,
    })
}

/// Per-estimator slope of log median PEHE against log total size.
pub fn rate_slopes(report: &ExperimentReport) -> Result<Vec<(String, f64)>, HarnessError> {
    let mut estimators: Vec<String> = report.records.iter().map(|r| r.estimator.clone()).collect();
    estimators.sort();
    estimators.dedup();
    let mut out = Vec::with_capacity(estimators.len());
    for name in estimators {
        let mut sizes: Vec<usize> = report
            .records
            .iter()
            .filter(|r| r.estimator == name)
            .map(|r| r.n_e + r.n_o)
            .collect();
        sizes.sort_unstable();
        sizes.dedup();
        let mut points = Vec::with_capacity(sizes.len());
        for size in sizes {
            let pehes: Vec<f64> = report
                .records
                .iter()
                .filter(|r| r.estimator == name && r.n_e + r.n_o == size)
                .map(|r| r.pehe)
                .collect();
            points.push((size, median_of(&pehes)));
        }
        out.push((name, metrics::rate_slope(&points)?));
    }
    Ok(out)
}

/// Median of a non-empty slice; report summaries lean on this.
pub fn median_of(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

// ---------------------------------------------------------------------------
// Oracle check
// ---------------------------------------------------------------------------

/// Oracle identification check: all four estimators with analytic nuisances
/// on closed-form draws; the naive estimator must reproduce the true effect
/// to numerical precision and the two-stage estimators up to stage-2
/// sampling error. There is nothing to hold out with oracle nuisances, so
/// the fit uses all rows and PEHE is taken against the analytic effect on
/// those rows.
pub fn run_oracle_check(config: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    config.validate()?;
    let n_e = config.n_e.unwrap_or(10000);
    let n_o = config.n_o.unwrap_or(15000);
    let cells: Vec<usize> = (0..config.replications).collect();
    let estimators = config.estimators.clone();
    let records = run_cells(cells, config.workers, |&rep| {
        let seed = seeds::child_seed(config.seed, rep as u64);
        let out = simgen::sample_dataset1(n_e, n_o, seed)?;
        let ns = crate::nuisance::fit_nuisances(&out.dataset, &NuisanceSpec::oracle())?;
        let stage2 = RegressorSpec::polynomial(2);
        let mut records = Vec::with_capacity(estimators.len());
        for &kind in &estimators {
            let start = Instant::now();
            let model = estimator::fit_with_nuisances(&out.dataset, &ns, kind, &stage2, seed)?;
            let tau_hat = model.predict_dataset(&out.dataset)?;
            records.push(MetricRecord {
                estimator: kind.label().to_string(),
                preset: "oracle".to_string(),
                n_e,
                n_o,
                seed,
                pehe: metrics::pehe(&tau_hat, &out.truth.tau)?,
                ate_error: metrics::ate_error(&tau_hat, &out.truth.tau)?,
                wall_ms: start.elapsed().as_millis() as u64,
            });
        }
        Ok(records)
    })?;
    Ok(ExperimentReport {
        config: config.echo(n_e, n_o, "oracle", "poly2"),
        records,
    })
}

// ---------------------------------------------------------------------------
// Semi-synthetic experiment
// ---------------------------------------------------------------------------

/// Semi-synthetic run over a covariate matrix (stand-in covariates are
/// drawn when no file is supplied); kernel nuisances and kernel-ridge
/// second stage.
pub fn run_semisynth(config: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    config.validate()?;
    let preset = match config.semisynth_preset.as_deref() {
        None | Some("ihdp") => SemiSynthPreset::Ihdp,
        Some("news") => SemiSynthPreset::News,
        Some(other) => {
            return Err(HarnessError::BadConfig(format!(
                "unknown semisynth preset `{other}`"
            )))
        }
    };
    let (covariates, n_cols) = match &config.covariates {
        Some(path) => simgen::load_covariates_csv(path)?,
        None => (
            simgen::synthetic_covariates(
                config.semisynth_n,
                preset.expected_columns(),
                seeds::salted_seed(config.seed, "covariates"),
            ),
            preset.expected_columns(),
        ),
    };
    let preset_label = match preset {
        SemiSynthPreset::Ihdp => "ihdp",
        SemiSynthPreset::News => "news",
    };
    let cells: Vec<usize> = (0..config.replications).collect();
    let estimators = config.estimators.clone();
    let records = run_cells(cells, config.workers, |&rep| {
        let seed = seeds::child_seed(config.seed, rep as u64);
        let params = SemiSynthParams {
            preset,
            covariates: covariates.clone(),
            n_cols,
            unobserved: UnobservedSpec::Count(preset.expected_unobserved()),
            offsets: None,
            noise: Default::default(),
        };
        let out = sample_semisynth(&params, seed)?;
        let n_e = out
            .dataset
            .rows()
            .iter()
            .filter(|r| r.g == crate::dataset::Group::E)
            .count();
        let n_o = out.dataset.n() - n_e;
        let split = split_for_eval(&out, seed)?;
        let ns = crate::nuisance::fit_nuisances(&split.train, &NuisanceSpec::kernel())?;
        let stage2 = RegressorSpec::KernelRidge(Default::default());
        let mut records = Vec::with_capacity(estimators.len());
        for &kind in &estimators {
            records.push(score_with_nuisances(
                kind,
                &ns,
                &stage2,
                &split,
                preset_label,
                n_e,
                n_o,
                seed,
            )?);
        }
        Ok(records)
    })?;
    Ok(ExperimentReport {
        config: config.echo(0, 0, "kernel", "kernel-ridge"),
        records,
    })
}

/// Dispatches an experiment by kind.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    match config.experiment {
        ExperimentKind::Misspec => run_misspec(config),
        ExperimentKind::SweepE => run_sweep(config, SweepAxis::E),
        ExperimentKind::SweepO => run_sweep(config, SweepAxis::O),
        ExperimentKind::Rates => run_rates(config),
        ExperimentKind::OracleCheck => run_oracle_check(config),
        ExperimentKind::Semisynth => run_semisynth(config),
    }
}
