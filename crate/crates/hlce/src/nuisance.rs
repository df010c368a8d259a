//! The six nuisance functions behind every estimator, assembled from
//! per-subgroup fits or from the analytic oracle of the closed-form
//! generator.
//!
//! A [`NuisanceSet`] bundles the three conditional means (short-term
//! experimental, short-term observational, long-term observational), the
//! three propensities (within-group treatment and the group score), and the
//! scalar group prior p(G=O). Probabilities are clipped at the accessor, so
//! inverse-propensity weights stay bounded no matter which backend produced
//! them.

use std::sync::Arc;

use thiserror::Error;

use crate::dataset::{DatasetError, Group, PanelDataset};
use crate::mlp::{MlpConfig, MlpError, SharedNuisanceNet};
use crate::regress::{
    self, clamp_prob, sigmoid, KernelSpec, RegressError, DEFAULT_CLIP,
};

#[derive(Debug, Error)]
pub enum NuisanceError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Regress(#[from] RegressError),
    #[error(transparent)]
    Mlp(#[from] MlpError),
    #[error("oracle and misspecified backends need a scalar covariate, got d={0}")]
    NeedsScalarCovariate(usize),
    #[error("group prior must lie in (0,1), got {0}")]
    BadGroupPrior(f64),
}

/// Backend choice for one nuisance function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    /// Degree-2 polynomial means, logistic within-group propensities, and
    /// the frequency of G=E for the group score: the correctly specified
    /// parametric recipe for the closed-form generator.
    CorrectParametric,
    /// Linear means, the single-parameter quadratic-logit form for the
    /// within-group propensities, and the frequency of G=O for the group
    /// score: the deliberately misspecified recipe.
    MisspecParametric,
    /// Kernel-ridge means with logistic propensities.
    Kernel,
    /// Heads of one shared-representation network trained on all rows.
    MlpShared,
    /// Analytic forms of the closed-form generator.
    Oracle,
}

/// Per-nuisance backend assignment plus shared fitting knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceSpec {
    pub mu_s_e: Backend,
    pub mu_s_o: Backend,
    pub mu_y_o: Backend,
    pub pi_e: Backend,
    pub pi_o: Backend,
    pub pi_g: Backend,
    pub eps_clip: f64,
    pub kernel: KernelSpec,
    pub mlp: MlpConfig,
    /// Pins p(G=O) instead of using the empirical group fraction.
    pub pinned_p_o: Option<f64>,
}

impl NuisanceSpec {
    pub fn all(backend: Backend) -> Self {
        NuisanceSpec {
            mu_s_e: backend,
            mu_s_o: backend,
            mu_y_o: backend,
            pi_e: backend,
            pi_o: backend,
            pi_g: backend,
            eps_clip: DEFAULT_CLIP,
            kernel: KernelSpec::default(),
            mlp: MlpConfig::default(),
            pinned_p_o: None,
        }
    }

    pub fn correct_parametric() -> Self {
        Self::all(Backend::CorrectParametric)
    }

    pub fn misspec_parametric() -> Self {
        Self::all(Backend::MisspecParametric)
    }

    pub fn kernel() -> Self {
        Self::all(Backend::Kernel)
    }

    pub fn mlp_shared() -> Self {
        Self::all(Backend::MlpShared)
    }

    pub fn oracle() -> Self {
        Self::all(Backend::Oracle)
    }

    fn backends(&self) -> [Backend; 6] {
        [self.mu_s_e, self.mu_s_o, self.mu_y_o, self.pi_e, self.pi_o, self.pi_g]
    }

    /// Short label for report config echoes.
    pub fn label(&self) -> String {
        let tag = |b: Backend| match b {
            Backend::CorrectParametric => "correct",
            Backend::MisspecParametric => "misspec",
            Backend::Kernel => "kernel",
            Backend::MlpShared => "mlp",
            Backend::Oracle => "oracle",
        };
        let b = self.backends();
        if b.iter().all(|x| *x == b[0]) {
            tag(b[0]).to_string()
        } else {
            format!(
                "muSE={},muSO={},muYO={},piE={},piO={},piG={}",
                tag(b[0]),
                tag(b[1]),
                tag(b[2]),
                tag(b[3]),
                tag(b[4]),
                tag(b[5])
            )
        }
    }
}

type ArmFn = Arc<dyn Fn(u8, &[f64]) -> f64 + Send + Sync>;
type CovFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// The six fitted (or oracle) nuisance functions plus the group prior.
#[derive(Clone)]
pub struct NuisanceSet {
    mu_s_e: ArmFn,
    mu_s_o: ArmFn,
    mu_y_o: ArmFn,
    pi_e: CovFn,
    pi_o: CovFn,
    pi_g: CovFn,
    p_o: f64,
    clip: f64,
}

impl std::fmt::Debug for NuisanceSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NuisanceSet")
            .field("p_o", &self.p_o)
            .field("clip", &self.clip)
            .finish()
    }
}

impl NuisanceSet {
    /// Builds a set from arbitrary functions; used by fitting, oracles, and
    /// the corruption helpers in robustness tests.
    pub fn from_fns(
        mu_s_e: impl Fn(u8, &[f64]) -> f64 + Send + Sync + 'static,
        mu_s_o: impl Fn(u8, &[f64]) -> f64 + Send + Sync + 'static,
        mu_y_o: impl Fn(u8, &[f64]) -> f64 + Send + Sync + 'static,
        pi_e: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        pi_o: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        pi_g: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        p_o: f64,
        clip: f64,
    ) -> Result<Self, NuisanceError> {
        if !(p_o > 0.0 && p_o < 1.0) {
            return Err(NuisanceError::BadGroupPrior(p_o));
        }
        Ok(NuisanceSet {
            mu_s_e: Arc::new(mu_s_e),
            mu_s_o: Arc::new(mu_s_o),
            mu_y_o: Arc::new(mu_y_o),
            pi_e: Arc::new(pi_e),
            pi_o: Arc::new(pi_o),
            pi_g: Arc::new(pi_g),
            p_o,
            clip,
        })
    }

    pub fn mu_s_e(&self, a: u8, x: &[f64]) -> f64 {
        (self.mu_s_e)(a, x)
    }

    pub fn mu_s_o(&self, a: u8, x: &[f64]) -> f64 {
        (self.mu_s_o)(a, x)
    }

    pub fn mu_y_o(&self, a: u8, x: &[f64]) -> f64 {
        (self.mu_y_o)(a, x)
    }

    pub fn pi_e(&self, x: &[f64]) -> f64 {
        clamp_prob((self.pi_e)(x), self.clip)
    }

    pub fn pi_o(&self, x: &[f64]) -> f64 {
        clamp_prob((self.pi_o)(x), self.clip)
    }

    /// Probability of G = E given x.
    pub fn pi_g(&self, x: &[f64]) -> f64 {
        clamp_prob((self.pi_g)(x), self.clip)
    }

    /// The scalar prior p(G=O) used by the weighting estimators.
    pub fn p_o(&self) -> f64 {
        self.p_o
    }

    pub fn clip(&self) -> f64 {
        self.clip
    }

    /// Copy of this set with a different prior, for pinning experiments.
    pub fn with_p_o(&self, p_o: f64) -> Result<Self, NuisanceError> {
        if !(p_o > 0.0 && p_o < 1.0) {
            return Err(NuisanceError::BadGroupPrior(p_o));
        }
        let mut out = self.clone();
        out.p_o = p_o;
        Ok(out)
    }
}

/// Analytic nuisance functions implied by the closed-form generator,
/// derived by conditional-Gaussian algebra from the generative equations
/// (not transcribed from a printed list):
///
/// - mu_S_E(a,x) = 1 + a + x + 2ax + 0.5 x^2 + a x^2
/// - mu_S_O(a,x) = 1.25 + a + (0.5 + 3a) x + (0.5 + a) x^2
/// - mu_Y_O(a,x) = 1.25 + 2a + (3a - 0.5) x + (0.5 + a) x^2
/// - pi_E(x) = sigmoid(x), pi_O(x) = sigmoid(-x), pi_G(x) = 1 - p_O
///
/// The identification contrast of these forms reproduces
/// tau(x) = 2 + 2x + x^2 exactly.
pub fn oracle_nuisances_dataset1(p_o: f64) -> Result<NuisanceSet, NuisanceError> {
    NuisanceSet::from_fns(
        |a, x| {
            let (a, x) = (f64::from(a), x[0]);
            1.0 + a + x + 2.0 * a * x + 0.5 * x * x + a * x * x
        },
        |a, x| {
            let (a, x) = (f64::from(a), x[0]);
            1.25 + a + (0.5 + 3.0 * a) * x + (0.5 + a) * x * x
        },
        |a, x| {
            let (a, x) = (f64::from(a), x[0]);
            1.25 + 2.0 * a + (3.0 * a - 0.5) * x + (0.5 + a) * x * x
        },
        |x| sigmoid(x[0]),
        |x| sigmoid(-x[0]),
        move |_| 1.0 - p_o,
        p_o,
        DEFAULT_CLIP,
    )
}

/// Fits a mean function E[target | A=a, X, G=g] per arm on the matching
/// subgroups.
fn fit_mean(
    dataset: &PanelDataset,
    g: Group,
    target_y: bool,
    backend: Backend,
    spec: &NuisanceSpec,
    shared: Option<&Arc<SharedNuisanceNet>>,
) -> Result<ArmFn, NuisanceError> {
    let d = dataset.d();
    match backend {
        Backend::Oracle => {
            if d != 1 {
                return Err(NuisanceError::NeedsScalarCovariate(d));
            }
            let f: ArmFn = match (g, target_y) {
                (Group::E, false) => Arc::new(|a: u8, x: &[f64]| {
                    let (a, x) = (f64::from(a), x[0]);
                    1.0 + a + x + 2.0 * a * x + 0.5 * x * x + a * x * x
                }),
                (Group::O, false) => Arc::new(|a: u8, x: &[f64]| {
                    let (a, x) = (f64::from(a), x[0]);
                    1.25 + a + (0.5 + 3.0 * a) * x + (0.5 + a) * x * x
                }),
                (Group::O, true) => Arc::new(|a: u8, x: &[f64]| {
                    let (a, x) = (f64::from(a), x[0]);
                    1.25 + 2.0 * a + (3.0 * a - 0.5) * x + (0.5 + a) * x * x
                }),
                (Group::E, true) => unreachable!("no long-term mean in the experimental group"),
            };
            Ok(f)
        }
        Backend::MlpShared => {
            let net = Arc::clone(shared.expect("shared net built for mlp backends"));
            let f: ArmFn = Arc::new(move |a: u8, x: &[f64]| {
                let heads = net.forward(x).expect("dimension checked at fit time");
                let arm = usize::from(a);
                match (g, target_y) {
                    (Group::E, false) => heads.mu_s_e[arm],
                    (Group::O, false) => heads.mu_s_o[arm],
                    (Group::O, true) => heads.mu_y_o[arm],
                    (Group::E, true) => unreachable!(),
                }
            });
            Ok(f)
        }
        Backend::CorrectParametric | Backend::MisspecParametric | Backend::Kernel => {
            let mut per_arm = Vec::with_capacity(2);
            for a in [0u8, 1u8] {
                let view = dataset.subgroup(Some(g), Some(a))?;
                let x = view.x_matrix();
                let t = if target_y { view.y_vector() } else { view.s_vector() };
                let model = match backend {
                    Backend::CorrectParametric => regress::fit_polynomial(&x, d, &t, 2, 0.0)?,
                    Backend::MisspecParametric => regress::fit_least_squares(&x, d, &t, 0.0)?,
                    Backend::Kernel => regress::fit_kernel_ridge(&x, d, &t, &spec.kernel)?,
                    _ => unreachable!(),
                };
                per_arm.push(model);
            }
            let f: ArmFn = Arc::new(move |a: u8, x: &[f64]| per_arm[usize::from(a)].predict(x));
            Ok(f)
        }
    }
}

/// Fits a within-group treatment propensity on the group's rows.
fn fit_group_propensity(
    dataset: &PanelDataset,
    g: Group,
    backend: Backend,
    spec: &NuisanceSpec,
    shared: Option<&Arc<SharedNuisanceNet>>,
) -> Result<CovFn, NuisanceError> {
    let d = dataset.d();
    match backend {
        Backend::Oracle => {
            if d != 1 {
                return Err(NuisanceError::NeedsScalarCovariate(d));
            }
            let f: CovFn = match g {
                Group::E => Arc::new(|x: &[f64]| sigmoid(x[0])),
                Group::O => Arc::new(|x: &[f64]| sigmoid(-x[0])),
            };
            Ok(f)
        }
        Backend::MlpShared => {
            let net = Arc::clone(shared.expect("shared net built for mlp backends"));
            let f: CovFn = Arc::new(move |x: &[f64]| {
                let heads = net.forward(x).expect("dimension checked at fit time");
                match g {
                    Group::E => heads.pi_e,
                    Group::O => heads.pi_o,
                }
            });
            Ok(f)
        }
        Backend::CorrectParametric | Backend::Kernel => {
            let view = dataset.subgroup(Some(g), None)?;
            let x = view.x_matrix();
            let a = view.a_vector();
            let model = regress::fit_logistic(&x, d, &a, 100, 1e-8, spec.eps_clip)?;
            let f: CovFn = Arc::new(move |x: &[f64]| model.predict(x));
            Ok(f)
        }
        Backend::MisspecParametric => {
            if d != 1 {
                return Err(NuisanceError::NeedsScalarCovariate(d));
            }
            let view = dataset.subgroup(Some(g), None)?;
            let x = view.x_matrix();
            let a = view.a_vector();
            let model = regress::fit_misspec_propensity(&x, d, &a, spec.eps_clip)?;
            let f: CovFn = Arc::new(move |x: &[f64]| model.predict(x));
            Ok(f)
        }
    }
}

/// Fits the group score pi_G(x) = P(G=E | x).
fn fit_group_score(
    dataset: &PanelDataset,
    backend: Backend,
    spec: &NuisanceSpec,
    shared: Option<&Arc<SharedNuisanceNet>>,
    p_o: f64,
) -> Result<CovFn, NuisanceError> {
    match backend {
        // The true group score of the closed-form generator is the constant
        // p(G=E); the empirical frequency is exactly that here.
        Backend::Oracle => Ok(Arc::new(move |_: &[f64]| 1.0 - p_o)),
        Backend::CorrectParametric => {
            let labels: Vec<f64> = dataset
                .rows()
                .iter()
                .map(|r| f64::from(r.g == Group::E))
                .collect();
            let model = regress::fit_frequency(&labels, spec.eps_clip)?;
            Ok(Arc::new(move |x: &[f64]| model.predict(x)))
        }
        // Deliberately wrong orientation: the frequency of G=O is used as if
        // it were the probability of G=E.
        Backend::MisspecParametric => {
            let labels: Vec<f64> = dataset
                .rows()
                .iter()
                .map(|r| f64::from(r.g == Group::O))
                .collect();
            let model = regress::fit_frequency(&labels, spec.eps_clip)?;
            Ok(Arc::new(move |x: &[f64]| model.predict(x)))
        }
        Backend::Kernel => {
            let d = dataset.d();
            let mut x = Vec::with_capacity(dataset.n() * d);
            let mut labels = Vec::with_capacity(dataset.n());
            for row in dataset.rows() {
                x.extend_from_slice(&row.x);
                labels.push(f64::from(row.g == Group::E));
            }
            let model = regress::fit_logistic(&x, d, &labels, 100, 1e-8, spec.eps_clip)?;
            Ok(Arc::new(move |x: &[f64]| model.predict(x)))
        }
        Backend::MlpShared => {
            let net = Arc::clone(shared.expect("shared net built for mlp backends"));
            Ok(Arc::new(move |x: &[f64]| {
                net.forward(x).expect("dimension checked at fit time").pi_g
            }))
        }
    }
}

/// Fits all six nuisance functions per the per-nuisance backend assignment.
///
/// Means are fit per (group, arm) subgroup; within-group propensities
/// classify A on the group's rows; the group score classifies G=E on all
/// rows. The prior p(G=O) is the empirical group fraction unless pinned.
pub fn fit_nuisances(dataset: &PanelDataset, spec: &NuisanceSpec) -> Result<NuisanceSet, NuisanceError> {
    let p_o = match spec.pinned_p_o {
        Some(p) => {
            if !(p > 0.0 && p < 1.0) {
                return Err(NuisanceError::BadGroupPrior(p));
            }
            p
        }
        None => dataset.group_prior(),
    };
    let needs_shared = spec.backends().contains(&Backend::MlpShared);
    let shared = if needs_shared {
        Some(Arc::new(SharedNuisanceNet::fit(dataset, &spec.mlp)?))
    } else {
        None
    };
    let shared_ref = shared.as_ref();
    let mu_s_e = fit_mean(dataset, Group::E, false, spec.mu_s_e, spec, shared_ref)?;
    let mu_s_o = fit_mean(dataset, Group::O, false, spec.mu_s_o, spec, shared_ref)?;
    let mu_y_o = fit_mean(dataset, Group::O, true, spec.mu_y_o, spec, shared_ref)?;
    let pi_e = fit_group_propensity(dataset, Group::E, spec.pi_e, spec, shared_ref)?;
    let pi_o = fit_group_propensity(dataset, Group::O, spec.pi_o, spec, shared_ref)?;
    let pi_g = fit_group_score(dataset, spec.pi_g, spec, shared_ref, p_o)?;
    Ok(NuisanceSet {
        mu_s_e,
        mu_s_o,
        mu_y_o,
        pi_e,
        pi_o,
        pi_g,
        p_o,
        clip: spec.eps_clip,
    })
}
