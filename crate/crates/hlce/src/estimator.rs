//! Two-stage estimation pipelines.
//!
//! Stage 1 fits the nuisance functions, stage 2 regresses a pseudo outcome
//! on the covariates. The naive estimator skips stage 2 and predicts the
//! plug-in contrast directly. Splitting modes: full-data (nuisances, pseudo
//! outcomes, and stage 2 all on the same rows), a stratified two-fold split
//! (nuisances on one half, pseudo outcomes and stage 2 on the other), and
//! k-fold cross-fitting (each fold's pseudo outcomes come from nuisances fit
//! on its complement; one stage-2 regression on the union).

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetError, PanelDataset};
use crate::nuisance::{self, NuisanceError, NuisanceSet, NuisanceSpec};
use crate::pseudo::{self, PseudoKind};
use crate::regress::{self, FittedModel, RegressError, RegressorSpec};
use crate::seeds;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Nuisance(#[from] NuisanceError),
    #[error(transparent)]
    Regress(#[from] RegressError),
    #[error("cross-fitting needs at least 2 folds, got {0}")]
    BadFoldCount(usize),
    #[error("input has dimension {got}, model expects {want}")]
    DimensionMismatch { got: usize, want: usize },
    #[error("average effect of an empty input is undefined")]
    EmptyInput,
}

/// Which estimator a config fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Naive,
    Reg,
    Pro,
    Mr,
}

impl EstimatorKind {
    pub fn label(self) -> &'static str {
        match self {
            EstimatorKind::Naive => "naive",
            EstimatorKind::Reg => "reg",
            EstimatorKind::Pro => "pro",
            EstimatorKind::Mr => "mr",
        }
    }

    pub fn pseudo_kind(self) -> Option<PseudoKind> {
        match self {
            EstimatorKind::Naive => None,
            EstimatorKind::Reg => Some(PseudoKind::Reg),
            EstimatorKind::Pro => Some(PseudoKind::Pro),
            EstimatorKind::Mr => Some(PseudoKind::Mr),
        }
    }

    pub fn all() -> [EstimatorKind; 4] {
        [EstimatorKind::Naive, EstimatorKind::Reg, EstimatorKind::Pro, EstimatorKind::Mr]
    }
}

/// How the two stages share the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Splitting {
    /// All rows for both stages.
    FullData,
    /// Stratified halves: nuisances on one, pseudo outcomes and stage 2 on
    /// the other.
    TwoFoldSplit,
    /// Stratified k folds; nuisances for each fold fit on its complement,
    /// one stage-2 regression on the union.
    CrossFit(usize),
}

/// Recipe for one estimator fit.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    pub nuisance: NuisanceSpec,
    /// Stage-2 regressor; ignored by the naive estimator.
    pub stage2: RegressorSpec,
    pub splitting: Splitting,
    pub seed: u64,
}

impl EstimatorConfig {
    pub fn new(kind: EstimatorKind, nuisance: NuisanceSpec, stage2: RegressorSpec) -> Self {
        EstimatorConfig { kind, nuisance, stage2, splitting: Splitting::FullData, seed: 0 }
    }
}

/// Fit provenance: what produced the prediction map.
#[derive(Debug, Clone)]
pub struct Provenance {
    pub kind: EstimatorKind,
    pub splitting: Splitting,
    pub nuisance_label: String,
    pub stage2_label: String,
    pub n: usize,
    pub d: usize,
    pub seed: u64,
}

#[derive(Clone)]
enum TauPredictor {
    /// Plug-in contrast over a nuisance set.
    PlugIn(Arc<NuisanceSet>),
    /// Stage-2 regression of a pseudo outcome.
    Stage2(Arc<FittedModel>),
}

/// A fitted heterogeneous-effect model; prediction is pure and total over
/// the covariate domain.
#[derive(Clone)]
pub struct FittedHLCE {
    predictor: TauPredictor,
    pub provenance: Provenance,
}

impl std::fmt::Debug for FittedHLCE {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FittedHLCE").field("provenance", &self.provenance).finish()
    }
}

impl FittedHLCE {
    /// Predicted effect at one covariate vector.
    pub fn predict_one(&self, x: &[f64]) -> Result<f64, EstimatorError> {
        if x.len() != self.provenance.d {
            return Err(EstimatorError::DimensionMismatch {
                got: x.len(),
                want: self.provenance.d,
            });
        }
        Ok(match &self.predictor {
            TauPredictor::PlugIn(ns) => pseudo::tau_naive(x, ns),
            TauPredictor::Stage2(model) => model.predict(x),
        })
    }

    /// Row-wise predictions over a row-major matrix.
    pub fn predict(&self, x: &[f64], d: usize) -> Result<Vec<f64>, EstimatorError> {
        if d != self.provenance.d {
            return Err(EstimatorError::DimensionMismatch { got: d, want: self.provenance.d });
        }
        x.chunks(d).map(|row| self.predict_one(row)).collect()
    }

    /// Mean predicted effect over the rows.
    pub fn ate(&self, x: &[f64], d: usize) -> Result<f64, EstimatorError> {
        let preds = self.predict(x, d)?;
        if preds.is_empty() {
            return Err(EstimatorError::EmptyInput);
        }
        Ok(preds.iter().sum::<f64>() / preds.len() as f64)
    }

    /// Predictions for the rows of a dataset.
    pub fn predict_dataset(&self, dataset: &PanelDataset) -> Result<Vec<f64>, EstimatorError> {
        dataset
            .rows()
            .iter()
            .map(|r| self.predict_one(&r.x))
            .collect()
    }
}

/// Fits an estimator on a dataset per the config. Deterministic per seed.
pub fn fit_two_stage(
    dataset: &PanelDataset,
    config: &EstimatorConfig,
) -> Result<FittedHLCE, EstimatorError> {
    let d = dataset.d();
    let provenance = |n: usize| Provenance {
        kind: config.kind,
        splitting: config.splitting,
        nuisance_label: config.nuisance.label(),
        stage2_label: match config.kind {
            EstimatorKind::Naive => "-".into(),
            _ => config.stage2.label(),
        },
        n,
        d,
        seed: config.seed,
    };

    // The naive estimator is the plug-in map over stage-1 nuisances.
    if config.kind == EstimatorKind::Naive {
        let fit_data;
        let nuisance_data = match config.splitting {
            Splitting::FullData | Splitting::CrossFit(_) => dataset,
            Splitting::TwoFoldSplit => {
                let parts = dataset
                    .partition(&[0.5, 0.5], seeds::salted_seed(config.seed, "two-fold"))?;
                fit_data = parts.into_iter().next().unwrap();
                &fit_data
            }
        };
        let ns = nuisance::fit_nuisances(nuisance_data, &config.nuisance)?;
        return Ok(FittedHLCE {
            predictor: TauPredictor::PlugIn(Arc::new(ns)),
            provenance: provenance(nuisance_data.n()),
        });
    }

    let pseudo_kind = config.kind.pseudo_kind().expect("two-stage kinds carry a pseudo outcome");
    // Assemble (x, pseudo) training pairs per the splitting mode, keeping
    // original row order where the union of folds is regressed.
    let mut x = Vec::new();
    let mut z = Vec::new();
    match config.splitting {
        Splitting::FullData => {
            let ns = nuisance::fit_nuisances(dataset, &config.nuisance)?;
            for row in dataset.rows() {
                x.extend_from_slice(&row.x);
                z.push(pseudo::pseudo_outcome(pseudo_kind, row, &ns));
            }
        }
        Splitting::TwoFoldSplit => {
            let parts =
                dataset.partition(&[0.5, 0.5], seeds::salted_seed(config.seed, "two-fold"))?;
            let ns = nuisance::fit_nuisances(&parts[0], &config.nuisance)?;
            for row in parts[1].rows() {
                x.extend_from_slice(&row.x);
                z.push(pseudo::pseudo_outcome(pseudo_kind, row, &ns));
            }
        }
        Splitting::CrossFit(k) => {
            if k < 2 {
                return Err(EstimatorError::BadFoldCount(k));
            }
            let fractions = vec![1.0 / k as f64; k];
            let folds = dataset
                .partition_indices(&fractions, seeds::salted_seed(config.seed, "cross-fit"))?;
            // Pseudo outcomes per fold from complement-fit nuisances, stored
            // by original row index so the stage-2 union sees the rows in
            // dataset order.
            let rows = dataset.rows();
            let mut by_row = vec![0.0; rows.len()];
            for i in 0..k {
                let complement_rows: Vec<crate::dataset::Row> = folds
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .flat_map(|(_, idx)| idx.iter().map(|&r| rows[r].clone()))
                    .collect();
                let complement = PanelDataset::from_rows(complement_rows)?;
                let ns = nuisance::fit_nuisances(&complement, &config.nuisance)?;
                for &r in &folds[i] {
                    by_row[r] = pseudo::pseudo_outcome(pseudo_kind, &rows[r], &ns);
                }
            }
            for (row, zr) in rows.iter().zip(by_row) {
                x.extend_from_slice(&row.x);
                z.push(zr);
            }
        }
    }
    let model = regress::fit_regressor(
        &config.stage2,
        &x,
        d,
        &z,
        seeds::salted_seed(config.seed, "stage2"),
    )?;
    let n = z.len();
    Ok(FittedHLCE {
        predictor: TauPredictor::Stage2(Arc::new(model)),
        provenance: provenance(n),
    })
}

/// Full-data fit over a nuisance set fitted elsewhere: pseudo outcomes and
/// the stage-2 regression run on all rows of `dataset`. This is the shared
/// stage-1 path the harness uses when several estimators reuse one set.
pub fn fit_with_nuisances(
    dataset: &PanelDataset,
    ns: &NuisanceSet,
    kind: EstimatorKind,
    stage2: &RegressorSpec,
    seed: u64,
) -> Result<FittedHLCE, EstimatorError> {
    let d = dataset.d();
    let provenance = Provenance {
        kind,
        splitting: Splitting::FullData,
        nuisance_label: "precomputed".into(),
        stage2_label: match kind {
            EstimatorKind::Naive => "-".into(),
            _ => stage2.label(),
        },
        n: dataset.n(),
        d,
        seed,
    };
    match kind.pseudo_kind() {
        None => Ok(FittedHLCE {
            predictor: TauPredictor::PlugIn(Arc::new(ns.clone())),
            provenance,
        }),
        Some(pseudo_kind) => {
            let mut x = Vec::with_capacity(dataset.n() * d);
            let mut z = Vec::with_capacity(dataset.n());
            for row in dataset.rows() {
                x.extend_from_slice(&row.x);
                z.push(pseudo::pseudo_outcome(pseudo_kind, row, ns));
            }
            let model =
                regress::fit_regressor(stage2, &x, d, &z, seeds::salted_seed(seed, "stage2"))?;
            Ok(FittedHLCE {
                predictor: TauPredictor::Stage2(Arc::new(model)),
                provenance,
            })
        }
    }
}
