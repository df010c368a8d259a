//! Estimation of heterogeneous long-term causal effects (HLCE) from combined
//! short-term experimental and long-term observational data.
//!
//! The library provides:
//!
//! - a data model for combined panels with group labels, treatments, short-
//!   and long-term outcomes ([`dataset`]),
//! - self-contained regression and probability-model primitives ([`regress`])
//!   plus minimal feedforward networks with manual backpropagation ([`mlp`]),
//! - the six nuisance functions used by the estimators, fit from data or
//!   supplied as analytic oracles ([`nuisance`]),
//! - the naive plug-in effect and the three pseudo outcomes whose regression
//!   on covariates yields the two-stage estimators ([`pseudo`], [`estimator`]),
//! - synthetic and semi-synthetic data generators with row-aligned ground
//!   truth ([`simgen`]),
//! - evaluation metrics and rate-slope extraction ([`metrics`]), and
//! - an experiment harness with CSV/JSON reports and SVG plots ([`harness`]).

pub mod dataset;
pub mod estimator;
pub mod harness;
pub mod metrics;
pub mod mlp;
pub mod nuisance;
pub mod pseudo;
pub mod regress;
pub mod simgen;

mod linalg;
pub mod seeds;

pub use dataset::{GroundTruth, Group, PanelDataset, Row};
pub use estimator::{EstimatorConfig, EstimatorKind, FittedHLCE, Splitting};
pub use nuisance::{Backend, NuisanceSet, NuisanceSpec};
pub use pseudo::PseudoKind;
pub use regress::{ClassifierSpec, FittedModel, KernelFamily, RegressorSpec};
