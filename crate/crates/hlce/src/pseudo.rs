//! The naive plug-in effect and the three pseudo outcomes.
//!
//! Each pseudo outcome is a per-row value whose conditional expectation
//! given X equals tau(x) when the right nuisance subset is correct;
//! regressing it on X yields the two-stage estimators. All functions here
//! are pure row-level algebra over a [`NuisanceSet`].

use crate::dataset::{Group, Row};
use crate::nuisance::NuisanceSet;

/// Which pseudo outcome a two-stage estimator regresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PseudoKind {
    /// Outcome-regression construction.
    Reg,
    /// Inverse-propensity construction.
    Pro,
    /// Multiple robust construction: weighted residuals plus the plug-in.
    Mr,
}

/// The signed inverse-propensity factor (-1)^{1-a} / (1 - a + (-1)^{1-a} pi):
/// +1/pi for the treated arm, -1/(1 - pi) for the control arm.
pub fn signed_inverse(a: u8, pi: f64) -> f64 {
    if a == 1 {
        1.0 / pi
    } else {
        -1.0 / (1.0 - pi)
    }
}

/// Plug-in identification contrast:
/// mu_Y_O(1,x) - mu_Y_O(0,x) + mu_S_E(1,x) - mu_S_E(0,x)
/// + mu_S_O(0,x) - mu_S_O(1,x).
pub fn tau_naive(x: &[f64], ns: &NuisanceSet) -> f64 {
    ns.mu_y_o(1, x) - ns.mu_y_o(0, x) + ns.mu_s_e(1, x) - ns.mu_s_e(0, x) + ns.mu_s_o(0, x)
        - ns.mu_s_o(1, x)
}

/// Outcome-regression pseudo outcome.
///
/// Observational rows contribute the cross-arm long/short residual plus the
/// experimental short-term contrast; experimental rows contribute the
/// cross-arm short-term residual plus the two observational contrasts.
pub fn pseudo_reg(row: &Row, ns: &NuisanceSet) -> f64 {
    let x = &row.x;
    let sign = if row.a == 1 { 1.0 } else { -1.0 };
    let other = 1 - row.a;
    match row.g {
        Group::O => {
            let y = row.y.expect("observational row carries y");
            sign * (y - ns.mu_y_o(other, x) - row.s + ns.mu_s_o(other, x)) + ns.mu_s_e(1, x)
                - ns.mu_s_e(0, x)
        }
        Group::E => {
            sign * (row.s - ns.mu_s_e(other, x)) + ns.mu_y_o(1, x) - ns.mu_y_o(0, x)
                + ns.mu_s_o(0, x)
                - ns.mu_s_o(1, x)
        }
    }
}

/// Inverse-propensity pseudo outcome.
pub fn pseudo_pro(row: &Row, ns: &NuisanceSet) -> f64 {
    let x = &row.x;
    let p_o = ns.p_o();
    match row.g {
        Group::E => {
            signed_inverse(row.a, ns.pi_e(x)) * (1.0 / p_o) * (1.0 / ns.pi_g(x) - 1.0) * row.s
        }
        Group::O => {
            let y = row.y.expect("observational row carries y");
            (1.0 / p_o) * signed_inverse(row.a, ns.pi_o(x)) * (y - row.s)
        }
    }
}

/// Multiple robust pseudo outcome: group-exclusive weighted residual terms
/// plus the full plug-in contrast.
pub fn pseudo_mr(row: &Row, ns: &NuisanceSet) -> f64 {
    let x = &row.x;
    let p_o = ns.p_o();
    let residual_term = match row.g {
        Group::E => {
            signed_inverse(row.a, ns.pi_e(x))
                * (1.0 / p_o)
                * (row.s - ns.mu_s_e(row.a, x))
                * (1.0 / ns.pi_g(x) - 1.0)
        }
        Group::O => {
            let y = row.y.expect("observational row carries y");
            (1.0 / p_o)
                * signed_inverse(row.a, ns.pi_o(x))
                * (y - ns.mu_y_o(row.a, x) - row.s + ns.mu_s_o(row.a, x))
        }
    };
    residual_term + tau_naive(x, ns)
}

/// Dispatches on the pseudo-outcome kind.
pub fn pseudo_outcome(kind: PseudoKind, row: &Row, ns: &NuisanceSet) -> f64 {
    match kind {
        PseudoKind::Reg => pseudo_reg(row, ns),
        PseudoKind::Pro => pseudo_pro(row, ns),
        PseudoKind::Mr => pseudo_mr(row, ns),
    }
}
