//! Self-contained regression and probability-model primitives.
//!
//! These back the nuisance functions and the second-stage pseudo-outcome
//! regression. Everything is fit by closed-form factorizations or small
//! iterative schemes; no external ML runtime is involved.

use thiserror::Error;

use crate::linalg;
use crate::mlp::{Mlp, MlpConfig, MlpError};

/// Default probability clip for classifiers. Propensity estimates are kept
/// inside [clip, 1 - clip] so inverse-propensity weights stay bounded.
pub const DEFAULT_CLIP: f64 = 0.01;

/// Hard cap on expanded polynomial design width.
pub const MAX_POLY_COLUMNS: usize = 20_000;

#[derive(Debug, Error)]
pub enum RegressError {
    #[error("design has no rows")]
    EmptyDesign,
    #[error("design is rank deficient at pivot {pivot}; use a ridge penalty lambda > 0")]
    RankDeficient { pivot: usize },
    #[error("ridge penalty must be nonnegative, got {0}")]
    NegativePenalty(f64),
    #[error("kernel ridge requires lambda > 0, got {0}")]
    NonPositivePenalty(f64),
    #[error("polynomial degree must be at least 1, got {0}")]
    BadDegree(usize),
    #[error("polynomial expansion needs {got} columns, above the cap of {cap}")]
    TooManyColumns { got: usize, cap: usize },
    #[error("labels contain a single class; both classes are required")]
    SingleClass,
    #[error("misspecified propensity expects a scalar covariate, got d={0}")]
    NotScalar(usize),
    #[error("length mismatch: design has {rows} rows, targets have {targets}")]
    LengthMismatch { rows: usize, targets: usize },
    #[error("probability clip must lie in (0, 0.5), got {0}")]
    BadClip(f64),
    #[error(transparent)]
    Mlp(#[from] MlpError),
}

/// Kernel families for kernel-ridge regression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelFamily {
    Rbf,
    /// Matern kernel with the given smoothness.
    Matern { nu: f64 },
}

/// Bandwidth rule for kernel regression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// Median pairwise distance of the training inputs.
    Median,
    Fixed(f64),
}

/// Kernel-ridge configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub bandwidth: Bandwidth,
    /// Ridge penalty per training point; the solved system uses
    /// `lambda_per_n * n`.
    pub lambda_per_n: f64,
    /// Training rows beyond this cap are subsampled by even striding before
    /// the Gram factorization.
    pub max_points: usize,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec {
            family: KernelFamily::Rbf,
            bandwidth: Bandwidth::Median,
            lambda_per_n: 1e-3,
            max_points: 1024,
        }
    }
}

/// Recipe for a regression backend.
#[derive(Debug, Clone, PartialEq)]
pub enum RegressorSpec {
    /// Ordinary least squares on the raw covariates.
    Ols,
    /// Ridge regression on the raw covariates.
    Ridge { lambda: f64 },
    /// Least squares on a polynomial expansion of total degree <= `degree`.
    Polynomial { degree: usize, lambda: f64 },
    KernelRidge(KernelSpec),
    Mlp(MlpConfig),
    /// Deliberately misspecified linear fit (alias for degree-1 features);
    /// used by the misspecification experiments.
    MisspecLinear,
}

impl RegressorSpec {
    pub fn polynomial(degree: usize) -> Self {
        RegressorSpec::Polynomial { degree, lambda: 0.0 }
    }

    /// Short label used in report config echoes.
    pub fn label(&self) -> String {
        match self {
            RegressorSpec::Ols => "ols".into(),
            RegressorSpec::Ridge { lambda } => format!("ridge({lambda})"),
            RegressorSpec::Polynomial { degree, .. } => format!("poly{degree}"),
            RegressorSpec::KernelRidge(_) => "kernel-ridge".into(),
            RegressorSpec::Mlp(_) => "mlp".into(),
            RegressorSpec::MisspecLinear => "misspec-linear".into(),
        }
    }
}

/// Recipe for a probability-model backend.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierSpec {
    pub kind: ClassifierKind,
    pub clip: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClassifierKind {
    Logistic,
    /// Constant prediction equal to the sample frequency of the label.
    Frequency,
    /// The single-parameter form p(x) = 1 / (1 + exp(alpha x^2)).
    MisspecQuadraticLogit,
    Mlp(MlpConfig),
}

impl Default for ClassifierSpec {
    fn default() -> Self {
        ClassifierSpec { kind: ClassifierKind::Logistic, clip: DEFAULT_CLIP }
    }
}

/// Training diagnostics attached to every fitted model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub iterations: usize,
    pub final_loss: f64,
    /// Set when logistic fitting detected complete separation and stopped
    /// with clipped probabilities instead of failing.
    pub separation: bool,
}

#[derive(Debug, Clone)]
enum Fitted {
    /// Intercept plus linear coefficients, optionally on expanded features.
    Linear { intercept: f64, coef: Vec<f64>, degree: usize },
    Logistic { intercept: f64, coef: Vec<f64>, clip: f64 },
    Constant { value: f64 },
    MisspecLogit { alpha: f64, clip: f64 },
    Kernel {
        anchors: Vec<f64>,
        d: usize,
        alpha: Vec<f64>,
        y_mean: f64,
        family: KernelFamily,
        bandwidth: f64,
    },
    Mlp(Box<Mlp>),
}

/// A fitted regressor or classifier. Prediction is a pure function of the
/// input vector.
#[derive(Debug, Clone)]
pub struct FittedModel {
    inner: Fitted,
    pub diagnostics: Diagnostics,
}

impl FittedModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        match &self.inner {
            Fitted::Linear { intercept, coef, degree } => {
                if *degree <= 1 {
                    intercept + dot(coef, x)
                } else {
                    let feats = expand_row(x, *degree);
                    intercept + dot(coef, &feats)
                }
            }
            Fitted::Logistic { intercept, coef, clip } => {
                clamp_prob(sigmoid(intercept + dot(coef, x)), *clip)
            }
            Fitted::Constant { value } => *value,
            Fitted::MisspecLogit { alpha, clip } => {
                clamp_prob(sigmoid(-alpha * x[0] * x[0]), *clip)
            }
            Fitted::Kernel { anchors, d, alpha, y_mean, family, bandwidth } => {
                let mut acc = *y_mean;
                for (i, a) in alpha.iter().enumerate() {
                    let r = linalg::euclidean(&anchors[i * d..(i + 1) * d], x);
                    acc += a * kernel_value(*family, *bandwidth, r);
                }
                acc
            }
            Fitted::Mlp(net) => net.predict_scalar(x),
        }
    }

    pub fn predict_batch(&self, x: &[f64], d: usize) -> Vec<f64> {
        x.chunks(d).map(|row| self.predict(row)).collect()
    }

    fn constant(value: f64, diagnostics: Diagnostics) -> Self {
        FittedModel { inner: Fitted::Constant { value }, diagnostics }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn clamp_prob(p: f64, clip: f64) -> f64 {
    p.clamp(clip, 1.0 - clip)
}

fn kernel_value(family: KernelFamily, bandwidth: f64, r: f64) -> f64 {
    match family {
        KernelFamily::Rbf => (-0.5 * (r / bandwidth) * (r / bandwidth)).exp(),
        KernelFamily::Matern { nu } => {
            crate::simgen::matern_kernel(r, bandwidth, nu).expect("matern kernel parameters")
        }
    }
}

/// Penalized least squares with an unpenalized intercept:
/// minimizes sum (y - b0 - x.b)^2 + lambda ||b||^2 via Cholesky on the
/// normal equations.
pub fn fit_least_squares(
    x: &[f64],
    d: usize,
    y: &[f64],
    lambda: f64,
) -> Result<FittedModel, RegressError> {
    fit_linear_on_features(x, d, y, lambda, 1)
}

fn fit_linear_on_features(
    x: &[f64],
    d: usize,
    y: &[f64],
    lambda: f64,
    degree: usize,
) -> Result<FittedModel, RegressError> {
    let n = y.len();
    if n == 0 {
        return Err(RegressError::EmptyDesign);
    }
    if d > 0 && x.len() != n * d {
        return Err(RegressError::LengthMismatch { rows: x.len() / d.max(1), targets: n });
    }
    if lambda < 0.0 {
        return Err(RegressError::NegativePenalty(lambda));
    }
    let p = d + 1;
    let (mut m, v) = linalg::weighted_normal_equations(x, d, y, None);
    for j in 1..p {
        m[j * p + j] += lambda;
    }
    let tol = if lambda > 0.0 { 1e-14 } else { 1e-10 };
    linalg::cholesky_in_place(&mut m, p, tol)
        .map_err(|pivot| RegressError::RankDeficient { pivot })?;
    let beta = linalg::cholesky_solve(&m, p, &v);
    let intercept = beta[0];
    let coef = beta[1..].to_vec();
    let mut rss = 0.0;
    for i in 0..n {
        let pred = intercept + dot(&coef, &x[i * d..(i + 1) * d]);
        rss += (y[i] - pred) * (y[i] - pred);
    }
    Ok(FittedModel {
        inner: Fitted::Linear { intercept, coef, degree },
        diagnostics: Diagnostics { iterations: 1, final_loss: rss, separation: false },
    })
}

/// Expands an n x d design into all monomials of total degree 1..=degree in
/// graded order (degree 1 block first), descending lexicographically within
/// a degree block. No intercept column is emitted.
pub fn polynomial_features(
    x: &[f64],
    d: usize,
    degree: usize,
) -> Result<(Vec<f64>, usize), RegressError> {
    if degree < 1 {
        return Err(RegressError::BadDegree(degree));
    }
    let cols = poly_column_count(d, degree)?;
    let n = x.len() / d;
    let mut out = Vec::with_capacity(n * cols);
    for i in 0..n {
        out.extend(expand_row(&x[i * d..(i + 1) * d], degree));
    }
    Ok((out, cols))
}

/// Number of monomials of total degree 1..=degree over d variables:
/// C(d + degree, degree) - 1.
pub fn poly_column_count(d: usize, degree: usize) -> Result<usize, RegressError> {
    let mut count: usize = 1;
    for k in 1..=degree {
        count = count
            .checked_mul(d + k)
            .and_then(|c| Some(c / k))
            .ok_or(RegressError::TooManyColumns { got: usize::MAX, cap: MAX_POLY_COLUMNS })?;
        if count > 100 * MAX_POLY_COLUMNS {
            return Err(RegressError::TooManyColumns { got: count, cap: MAX_POLY_COLUMNS });
        }
    }
    let cols = count - 1;
    if cols > MAX_POLY_COLUMNS {
        return Err(RegressError::TooManyColumns { got: cols, cap: MAX_POLY_COLUMNS });
    }
    Ok(cols)
}

fn expand_row(x: &[f64], degree: usize) -> Vec<f64> {
    let d = x.len();
    let mut out = Vec::new();
    let mut exponents = vec![0usize; d];
    for total in 1..=degree {
        emit_monomials(x, &mut exponents, 0, total, &mut out);
    }
    out
}

/// Emits all monomials with the given remaining total degree, assigning
/// exponents left to right in descending order, which yields the graded
/// lexicographic layout (x0^2, x0 x1, x1^2 for d=2, degree 2).
fn emit_monomials(x: &[f64], exps: &mut [usize], pos: usize, left: usize, out: &mut Vec<f64>) {
    let d = x.len();
    if pos == d - 1 {
        exps[pos] = left;
        let mut v = 1.0;
        for (e, xv) in exps.iter().zip(x) {
            v *= xv.powi(*e as i32);
        }
        out.push(v);
        return;
    }
    for e in (0..=left).rev() {
        exps[pos] = e;
        emit_monomials(x, exps, pos + 1, left - e, out);
        exps[pos] = 0;
    }
}

/// Least squares on the polynomial expansion of the design.
pub fn fit_polynomial(
    x: &[f64],
    d: usize,
    y: &[f64],
    degree: usize,
    lambda: f64,
) -> Result<FittedModel, RegressError> {
    let (feats, cols) = polynomial_features(x, d, degree)?;
    let mut model = fit_linear_on_features(&feats, cols, y, lambda, 1)?;
    if let Fitted::Linear { intercept, coef, .. } = model.inner {
        model.inner = Fitted::Linear { intercept, coef, degree };
    }
    Ok(model)
}

/// Logistic regression by iteratively reweighted least squares.
///
/// Stops when the max coefficient change drops below `tol` or `max_iter` is
/// reached. Complete separation is detected as diverging coefficients and
/// downgraded to a diagnostics flag: the fit stops with large coefficients
/// and predictions saturate at the clip bounds.
pub fn fit_logistic(
    x: &[f64],
    d: usize,
    labels: &[f64],
    max_iter: usize,
    tol: f64,
    clip: f64,
) -> Result<FittedModel, RegressError> {
    let n = labels.len();
    if n == 0 {
        return Err(RegressError::EmptyDesign);
    }
    if !(0.0..0.5).contains(&clip) || clip <= 0.0 {
        return Err(RegressError::BadClip(clip));
    }
    let positives = labels.iter().filter(|l| **l > 0.5).count();
    if positives == 0 || positives == n {
        return Err(RegressError::SingleClass);
    }
    let p = d + 1;
    let mut beta = vec![0.0; p];
    let mut iterations = 0;
    let mut separation = false;
    const SEPARATION_BOUND: f64 = 30.0;
    for iter in 0..max_iter {
        iterations = iter + 1;
        // Working response z = eta + (a - p) / w with weights w = p (1 - p).
        let mut w = vec![0.0; n];
        let mut z = vec![0.0; n];
        for i in 0..n {
            let eta = beta[0] + dot(&beta[1..], &x[i * d..(i + 1) * d]);
            let prob = sigmoid(eta);
            let wi = (prob * (1.0 - prob)).max(1e-10);
            w[i] = wi;
            z[i] = eta + (labels[i] - prob) / wi;
        }
        let (mut m, v) = linalg::weighted_normal_equations(x, d, &z, Some(&w));
        for j in 0..p {
            m[j * p + j] += 1e-10;
        }
        linalg::cholesky_in_place(&mut m, p, 1e-14)
            .map_err(|pivot| RegressError::RankDeficient { pivot })?;
        let new_beta = linalg::cholesky_solve(&m, p, &v);
        let delta = new_beta
            .iter()
            .zip(&beta)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        beta = new_beta;
        if beta.iter().any(|b| b.abs() > SEPARATION_BOUND) {
            separation = true;
            break;
        }
        if delta < tol {
            break;
        }
    }
    // Complete separation: the fitted hyperplane classifies every point
    // correctly, so the unpenalized likelihood has no finite maximizer.
    if !separation {
        separation = (0..n).all(|i| {
            let eta = beta[0] + dot(&beta[1..], &x[i * d..(i + 1) * d]);
            (2.0 * labels[i] - 1.0) * eta > 0.0
        });
    }
    let mut nll = 0.0;
    for i in 0..n {
        let eta = beta[0] + dot(&beta[1..], &x[i * d..(i + 1) * d]);
        // log(1 + e^eta) - a * eta, computed stably
        nll += softplus(eta) - labels[i] * eta;
    }
    Ok(FittedModel {
        inner: Fitted::Logistic { intercept: beta[0], coef: beta[1..].to_vec(), clip },
        diagnostics: Diagnostics { iterations, final_loss: nll, separation },
    })
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Fits the single parameter of the deliberately misspecified propensity
/// form p(a=1|x) = 1 / (1 + exp(alpha x^2)) by Newton steps on the scalar
/// score. The log-likelihood is concave in alpha.
pub fn fit_misspec_propensity(
    x: &[f64],
    d: usize,
    labels: &[f64],
    clip: f64,
) -> Result<FittedModel, RegressError> {
    if d != 1 {
        return Err(RegressError::NotScalar(d));
    }
    let n = labels.len();
    if n == 0 {
        return Err(RegressError::EmptyDesign);
    }
    let positives = labels.iter().filter(|l| **l > 0.5).count();
    if positives == 0 || positives == n {
        return Err(RegressError::SingleClass);
    }
    let mut alpha = 0.0f64;
    let mut iterations = 0;
    for iter in 0..100 {
        iterations = iter + 1;
        let mut score = 0.0;
        let mut info = 0.0;
        for i in 0..n {
            let q = x[i] * x[i];
            let prob = sigmoid(-alpha * q);
            score += q * (prob - labels[i]);
            info += q * q * prob * (1.0 - prob);
        }
        if info < 1e-12 {
            break;
        }
        let step = (score / info).clamp(-2.0, 2.0);
        alpha += step;
        if step.abs() < 1e-10 {
            break;
        }
    }
    let mut nll = 0.0;
    for i in 0..n {
        let eta = -alpha * x[i] * x[i];
        nll += softplus(eta) - labels[i] * eta;
    }
    Ok(FittedModel {
        inner: Fitted::MisspecLogit { alpha, clip },
        diagnostics: Diagnostics { iterations, final_loss: nll, separation: false },
    })
}

/// Constant classifier equal to the clipped sample frequency of the label.
pub fn fit_frequency(labels: &[f64], clip: f64) -> Result<FittedModel, RegressError> {
    if labels.is_empty() {
        return Err(RegressError::EmptyDesign);
    }
    let mean = labels.iter().sum::<f64>() / labels.len() as f64;
    Ok(FittedModel::constant(
        clamp_prob(mean, clip),
        Diagnostics { iterations: 1, final_loss: 0.0, separation: false },
    ))
}

/// Kernel-ridge regression: solves (K + lambda I) alpha = y - mean(y) on the
/// (possibly subsampled) training inputs; prediction adds the mean back.
pub fn fit_kernel_ridge(
    x: &[f64],
    d: usize,
    y: &[f64],
    spec: &KernelSpec,
) -> Result<FittedModel, RegressError> {
    let n = y.len();
    if n == 0 {
        return Err(RegressError::EmptyDesign);
    }
    if spec.lambda_per_n <= 0.0 {
        return Err(RegressError::NonPositivePenalty(spec.lambda_per_n));
    }
    // Even-stride subsample beyond the cap keeps the factorization bounded.
    let (anchors, targets) = if n > spec.max_points {
        let m = spec.max_points;
        let mut ax = Vec::with_capacity(m * d);
        let mut ay = Vec::with_capacity(m);
        for j in 0..m {
            let i = j * n / m;
            ax.extend_from_slice(&x[i * d..(i + 1) * d]);
            ay.push(y[i]);
        }
        (ax, ay)
    } else {
        (x.to_vec(), y.to_vec())
    };
    let m = targets.len();
    let bandwidth = match spec.bandwidth {
        Bandwidth::Fixed(h) => h,
        Bandwidth::Median => median_pairwise_distance(&anchors, d, m),
    };
    let lambda = spec.lambda_per_n * m as f64;
    let y_mean = targets.iter().sum::<f64>() / m as f64;
    let mut gram = vec![0.0; m * m];
    for i in 0..m {
        for j in i..m {
            let r = linalg::euclidean(&anchors[i * d..(i + 1) * d], &anchors[j * d..(j + 1) * d]);
            let v = kernel_value(spec.family, bandwidth, r);
            gram[i * m + j] = v;
            gram[j * m + i] = v;
        }
        gram[i * m + i] += lambda;
    }
    linalg::cholesky_in_place(&mut gram, m, 1e-15)
        .map_err(|pivot| RegressError::RankDeficient { pivot })?;
    let centered: Vec<f64> = targets.iter().map(|v| v - y_mean).collect();
    let alpha = linalg::cholesky_solve(&gram, m, &centered);
    Ok(FittedModel {
        inner: Fitted::Kernel {
            anchors,
            d,
            alpha,
            y_mean,
            family: spec.family,
            bandwidth,
        },
        diagnostics: Diagnostics { iterations: 1, final_loss: 0.0, separation: false },
    })
}

fn median_pairwise_distance(x: &[f64], d: usize, n: usize) -> f64 {
    if n < 2 {
        return 1.0;
    }
    // Cap the pair count; an even stride keeps the estimate stable.
    let max_points = 512.min(n);
    let mut dists = Vec::with_capacity(max_points * (max_points - 1) / 2);
    for i in 0..max_points {
        let ii = i * n / max_points;
        for j in (i + 1)..max_points {
            let jj = j * n / max_points;
            dists.push(linalg::euclidean(
                &x[ii * d..(ii + 1) * d],
                &x[jj * d..(jj + 1) * d],
            ));
        }
    }
    let med = linalg::median(&dists);
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

/// Dispatches a [`RegressorSpec`] on a design; the seed only matters for the
/// MLP backend.
pub fn fit_regressor(
    spec: &RegressorSpec,
    x: &[f64],
    d: usize,
    y: &[f64],
    seed: u64,
) -> Result<FittedModel, RegressError> {
    match spec {
        RegressorSpec::Ols => fit_least_squares(x, d, y, 0.0),
        RegressorSpec::Ridge { lambda } => fit_least_squares(x, d, y, *lambda),
        RegressorSpec::Polynomial { degree, lambda } => fit_polynomial(x, d, y, *degree, *lambda),
        RegressorSpec::KernelRidge(kspec) => fit_kernel_ridge(x, d, y, kspec),
        RegressorSpec::Mlp(config) => {
            let mut config = config.clone();
            config.seed = seed;
            let net = Mlp::fit_regression(x, d, y, &config)?;
            Ok(FittedModel {
                inner: Fitted::Mlp(Box::new(net)),
                diagnostics: Diagnostics { iterations: config.epochs, final_loss: 0.0, separation: false },
            })
        }
        RegressorSpec::MisspecLinear => fit_least_squares(x, d, y, 0.0),
    }
}
