//! Acceptance suite: one test per criterion, each printing a pass/fail line
//! per sub-check before asserting. Tolerances and thresholds are pinned in
//! code; nothing is deferred to later calibration.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see every line.

use hlce::dataset::Group;
use hlce::estimator::EstimatorKind;
use hlce::harness::{
    self, median_of, ExperimentConfig, ExperimentKind, MisspecPreset, SweepAxis,
};
use hlce::metrics::{self, MetricRecord};
use hlce::mlp::{HeadNorm, HeadWeights, MlpConfig, NormStats, SharedNuisanceNet};
use hlce::nuisance::{oracle_nuisances_dataset1, NuisanceSet};
use hlce::pseudo::{pseudo_outcome, PseudoKind};
use hlce::regress;
use hlce::simgen::{
    self, matern_kernel, sample_dataset1, sample_semisynth, semisynth_probabilities,
    synthetic_covariates, SemiSynthParams, SemiSynthPreset,
};

/// Collects sub-check outcomes so every line of a criterion prints before
/// the test verdict.
struct Checklist {
    name: &'static str,
    failures: Vec<String>,
}

impl Checklist {
    fn new(name: &'static str) -> Self {
        Checklist { name, failures: Vec::new() }
    }

    fn check(&mut self, label: &str, pass: bool, detail: String) {
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!("[{}] {verdict} {label}: {detail}", self.name);
        if !pass {
            self.failures.push(format!("{label}: {detail}"));
        }
    }

    fn finish(self) {
        assert!(
            self.failures.is_empty(),
            "{} sub-checks failed:\n{}",
            self.name,
            self.failures.join("\n")
        );
    }
}

fn pehe_values(records: &[MetricRecord], kind: EstimatorKind) -> Vec<f64> {
    records
        .iter()
        .filter(|r| r.estimator == kind.label())
        .map(|r| r.pehe)
        .collect()
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    let rank = |v: &[f64]| -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
        let mut r = vec![0.0; v.len()];
        for (pos, &i) in idx.iter().enumerate() {
            r[i] = pos as f64;
        }
        r
    };
    let rx = rank(xs);
    let ry = rank(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut cov, mut vx, mut vy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    cov / (vx.sqrt() * vy.sqrt())
}

// ---------------------------------------------------------------------------
// Criterion 1: oracle identification
// ---------------------------------------------------------------------------

#[test]
fn criterion1_oracle_identification() {
    let mut list = Checklist::new("criterion 1");
    let config = ExperimentConfig {
        experiment: ExperimentKind::OracleCheck,
        replications: 10,
        seed: 0,
        ..Default::default()
    };
    let report = harness::run_oracle_check(&config).unwrap();
    let naive_max = pehe_values(&report.records, EstimatorKind::Naive)
        .into_iter()
        .fold(0.0f64, f64::max);
    list.check(
        "naive PEHE <= 1e-8",
        naive_max <= 1e-8,
        format!("max over 10 seeds = {naive_max:.2e}"),
    );
    for kind in [EstimatorKind::Reg, EstimatorKind::Pro, EstimatorKind::Mr] {
        let med = median_of(&pehe_values(&report.records, kind));
        list.check(
            &format!("{} median PEHE < 0.15", kind.label()),
            med < 0.15,
            format!("median = {med:.4}"),
        );
    }
    list.finish();
}

// ---------------------------------------------------------------------------
// Criterion 2: multiple robustness
// ---------------------------------------------------------------------------

#[test]
fn criterion2_multiple_robustness() {
    let mut list = Checklist::new("criterion 2");
    let config = ExperimentConfig {
        experiment: ExperimentKind::Misspec,
        estimators: vec![EstimatorKind::Mr],
        replications: 10,
        seed: 0,
        ..Default::default()
    };
    let report = harness::run_misspec(&config).unwrap();
    let preset_median = |preset: MisspecPreset| {
        let vals: Vec<f64> = report
            .records
            .iter()
            .filter(|r| r.preset == preset.label())
            .map(|r| r.pehe)
            .collect();
        median_of(&vals)
    };
    let one_set = [
        MisspecPreset::OnlySet1,
        MisspecPreset::OnlySet2,
        MisspecPreset::OnlySet3,
        MisspecPreset::OnlySet4,
    ];
    let mut worst_one_set = 0.0f64;
    for preset in one_set {
        let med = preset_median(preset);
        worst_one_set = worst_one_set.max(med);
        list.check(
            &format!("{} median PEHE < 0.5", preset.label()),
            med < 0.5,
            format!("median = {med:.4}"),
        );
    }
    let all_bad = preset_median(MisspecPreset::AllMisspec);
    list.check(
        "all-misspecified median PEHE in [1.0, 2.25]",
        (1.0..=2.25).contains(&all_bad),
        format!("median = {all_bad:.4}"),
    );
    let ratio = worst_one_set / all_bad;
    list.check(
        "(any one-set-correct)/(all-misspecified) < 1/3",
        ratio < 1.0 / 3.0,
        format!("worst ratio = {ratio:.4}"),
    );
    list.finish();
}

// ---------------------------------------------------------------------------
// Criterion 3: consistency sweeps
// ---------------------------------------------------------------------------

#[test]
fn criterion3_consistency_sweeps() {
    let mut list = Checklist::new("criterion 3");
    for axis in [SweepAxis::E, SweepAxis::O] {
        let config = ExperimentConfig {
            experiment: match axis {
                SweepAxis::E => ExperimentKind::SweepE,
                SweepAxis::O => ExperimentKind::SweepO,
            },
            replications: 10,
            seed: 0,
            ..Default::default()
        };
        let report = harness::run_sweep(&config, axis).unwrap();
        let (axis_name, grid) = match axis {
            SweepAxis::E => ("sweep-e", config.n_e_grid.clone()),
            SweepAxis::O => ("sweep-o", config.n_o_grid.clone()),
        };
        for kind in EstimatorKind::all() {
            let mut meds = Vec::new();
            for &size in &grid {
                let vals: Vec<f64> = report
                    .records
                    .iter()
                    .filter(|r| {
                        r.estimator == kind.label()
                            && (match axis {
                                SweepAxis::E => r.n_e,
                                SweepAxis::O => r.n_o,
                            }) == size
                    })
                    .map(|r| r.pehe)
                    .collect();
                meds.push(median_of(&vals));
            }
            let sizes: Vec<f64> = grid.iter().map(|&s| s as f64).collect();
            let rho = spearman(&sizes, &meds);
            list.check(
                &format!("{axis_name} {}: Spearman(median PEHE, size) < 0", kind.label()),
                rho < 0.0,
                format!("rho = {rho:.3}"),
            );
        }
        if axis == SweepAxis::E {
            let at_small = |kind: EstimatorKind| {
                let vals: Vec<f64> = report
                    .records
                    .iter()
                    .filter(|r| r.estimator == kind.label() && r.n_e == 100)
                    .map(|r| r.pehe)
                    .collect();
                median_of(&vals)
            };
            let mr = at_small(EstimatorKind::Mr);
            let pro = at_small(EstimatorKind::Pro);
            list.check(
                "at n_e=100, median PEHE(mr) <= median PEHE(pro)",
                mr <= pro,
                format!("mr = {mr:.3}, pro = {pro:.3}"),
            );
        }
    }
    list.finish();
}

// ---------------------------------------------------------------------------
// Criterion 4: rate behavior
// ---------------------------------------------------------------------------

#[test]
fn criterion4_rate_behavior() {
    let mut list = Checklist::new("criterion 4");
    let config = ExperimentConfig {
        experiment: ExperimentKind::Rates,
        replications: 10,
        seed: 0,
        ..Default::default()
    };
    let report = harness::run_rates(&config).unwrap();
    let slopes = harness::rate_slopes(&report).unwrap();
    let slope_of = |name: &str| slopes.iter().find(|(n, _)| n == name).map(|(_, s)| *s).unwrap();
    let mr = slope_of("mr");
    list.check("mr slope <= -0.3", mr <= -0.3, format!("slope = {mr:.3}"));
    let gap = (slope_of("naive") - slope_of("reg")).abs();
    list.check(
        "|slope(naive) - slope(reg)| <= 0.15",
        gap <= 0.15,
        format!("gap = {gap:.3}"),
    );
    let all_negative = slopes.iter().all(|(_, s)| *s < 0.0);
    list.check(
        "all slopes negative",
        all_negative,
        format!(
            "{}",
            slopes
                .iter()
                .map(|(n, s)| format!("{n}={s:.3}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    );
    list.finish();
}

// ---------------------------------------------------------------------------
// Criterion 5: pseudo-outcome unbiasedness
// ---------------------------------------------------------------------------

/// Per-bin t-check of mean(pseudo - tau(x)) over 10 equal-count x-bins.
fn binned_unbiasedness(
    list: &mut Checklist,
    label: &str,
    out: &simgen::GenOutput,
    ns: &NuisanceSet,
    kind: PseudoKind,
) {
    let rows = out.dataset.rows();
    let mut xs: Vec<f64> = rows.iter().map(|r| r.x[0]).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let edges: Vec<f64> = (1..10).map(|k| xs[k * xs.len() / 10]).collect();
    let bin_of = |x: f64| edges.iter().filter(|e| x > **e).count();
    let mut bins: Vec<Vec<f64>> = vec![Vec::new(); 10];
    for (row, tau) in rows.iter().zip(&out.truth.tau) {
        bins[bin_of(row.x[0])].push(pseudo_outcome(kind, row, ns) - tau);
    }
    let mut worst_t = 0.0f64;
    for diffs in &bins {
        let n = diffs.len() as f64;
        let mean = diffs.iter().sum::<f64>() / n;
        let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
        let t = mean.abs() / (var / n).sqrt();
        worst_t = worst_t.max(t);
    }
    list.check(
        &format!("{label}: binned means match tau within 3 se"),
        worst_t <= 3.0,
        format!("worst |t| over 10 bins = {worst_t:.2}"),
    );
}

/// Oracle set with deliberately corrupted complements for one robustness
/// set. Corruptions are arm- and x-dependent so nothing cancels in the
/// contrasts; the group prior stays true (it is a known normalizer, not a
/// member of any set).
fn corrupted_except(set: usize, p_o: f64) -> NuisanceSet {
    let oracle = oracle_nuisances_dataset1(p_o).unwrap();
    // correct flags per set: (mu_s_e, mu_s_o, mu_y_o, pi_e, pi_o, pi_g)
    let keep = match set {
        1 => [true, true, true, false, false, false],
        2 => [false, false, false, true, true, true],
        3 => [true, false, false, false, true, false],
        4 => [false, true, true, true, false, true],
        _ => unreachable!(),
    };
    let o = oracle.clone();
    let warp_mean = |v: f64, a: u8, x: &[f64]| v + (0.5 + f64::from(a)) * (1.0 + 0.3 * x[0]);
    let o1 = o.clone();
    let o2 = o.clone();
    let o3 = o.clone();
    let o4 = o.clone();
    let o5 = o.clone();
    NuisanceSet::from_fns(
        move |a, x| {
            let v = o.mu_s_e(a, x);
            if keep[0] { v } else { warp_mean(v, a, x) }
        },
        move |a, x| {
            let v = o1.mu_s_o(a, x);
            if keep[1] { v } else { warp_mean(v, a, x) }
        },
        move |a, x| {
            let v = o2.mu_y_o(a, x);
            if keep[2] { v } else { warp_mean(v, a, x) }
        },
        move |x| {
            if keep[3] {
                o3.pi_e(x)
            } else {
                sigmoid(0.4 - 0.7 * x[0])
            }
        },
        move |x| {
            if keep[4] {
                o4.pi_o(x)
            } else {
                sigmoid(0.3 + 0.5 * x[0])
            }
        },
        move |x| if keep[5] { o5.pi_g(x) } else { 0.25 },
        p_o,
        0.01,
    )
    .unwrap()
}

#[test]
fn criterion5_pseudo_outcome_unbiasedness() {
    let mut list = Checklist::new("criterion 5");
    let out = sample_dataset1(80_000, 120_000, 50).unwrap();
    let ns = oracle_nuisances_dataset1(out.dataset.group_prior()).unwrap();
    for (kind, label) in [
        (PseudoKind::Reg, "Y_reg, oracle nuisances"),
        (PseudoKind::Pro, "Y_pro, oracle nuisances"),
        (PseudoKind::Mr, "Y_mr, oracle nuisances"),
    ] {
        binned_unbiasedness(&mut list, label, &out, &ns, kind);
    }
    // Multiple robustness of the mr construction: one set oracle, the rest
    // corrupted, for each of the four sets.
    for set in 1..=4usize {
        let corrupted = corrupted_except(set, out.dataset.group_prior());
        binned_unbiasedness(
            &mut list,
            &format!("Y_mr, only set {set} correct"),
            &out,
            &corrupted,
            PseudoKind::Mr,
        );
    }
    // And the corruption itself must break the naive plug-in, or the
    // robustness checks above would be vacuous.
    let corrupted = corrupted_except(2, out.dataset.group_prior());
    let mut naive_bias = 0.0f64;
    for x in [-1.0, 0.0, 1.0] {
        let plug = hlce::pseudo::tau_naive(&[x], &corrupted);
        naive_bias = naive_bias.max((plug - (2.0 + 2.0 * x + x * x)).abs());
    }
    list.check(
        "corrupted means visibly bias the plug-in",
        naive_bias > 0.5,
        format!("max plug-in bias = {naive_bias:.3}"),
    );
    list.finish();
}

// ---------------------------------------------------------------------------
// Criterion 6: DGP validity
// ---------------------------------------------------------------------------

/// Within-bin linear regression of `value` on x per class, evaluated at the
/// pooled bin mean; returns per-bin (gap, se) between the two classes.
/// Raw bin means would carry within-bin composition drift, so the linear
/// adjustment is what makes these conditional comparisons honest.
fn binned_adjusted_gaps(
    points: &[(f64, f64, bool)], // (x, value, class)
    bins: usize,
) -> Vec<(f64, f64)> {
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let edges: Vec<f64> = (1..bins).map(|k| xs[k * xs.len() / bins]).collect();
    let bin_of = |x: f64| edges.iter().filter(|e| x > **e).count();
    let mut out = Vec::new();
    for b in 0..bins {
        let in_bin: Vec<&(f64, f64, bool)> =
            points.iter().filter(|p| bin_of(p.0) == b).collect();
        let x_star =
            in_bin.iter().map(|p| p.0).sum::<f64>() / in_bin.len() as f64;
        let fit = |class: bool| -> (f64, f64) {
            let sel: Vec<&&(f64, f64, bool)> =
                in_bin.iter().filter(|p| p.2 == class).collect();
            let m = sel.len() as f64;
            let mx = sel.iter().map(|p| p.0).sum::<f64>() / m;
            let my = sel.iter().map(|p| p.1).sum::<f64>() / m;
            let mut sxx = 0.0;
            let mut sxy = 0.0;
            for p in &sel {
                sxx += (p.0 - mx) * (p.0 - mx);
                sxy += (p.0 - mx) * (p.1 - my);
            }
            let slope = if sxx > 1e-12 { sxy / sxx } else { 0.0 };
            let pred = my + slope * (x_star - mx);
            let mut rss = 0.0;
            for p in &sel {
                let r = p.1 - my - slope * (p.0 - mx);
                rss += r * r;
            }
            let sigma2 = rss / (m - 2.0).max(1.0);
            let var = sigma2 * (1.0 / m + (x_star - mx) * (x_star - mx) / sxx.max(1e-12));
            (pred, var)
        };
        let (pred_a, var_a) = fit(true);
        let (pred_b, var_b) = fit(false);
        out.push((pred_a - pred_b, (var_a + var_b).sqrt()));
    }
    out
}

#[test]
fn criterion6_dgp_validity() {
    let mut list = Checklist::new("criterion 6");
    let out = sample_dataset1(200_000, 300_000, 60).unwrap();
    let pots = out.truth.potentials.as_ref().unwrap();

    // CAECB: for each potential arm a, the cross-arm contrast of S(a) must
    // equal that of Y(a) among observational rows. Equivalently the
    // conditional mean of S(a) - Y(a) is the same in both realized arms.
    for a in [0usize, 1usize] {
        let points: Vec<(f64, f64, bool)> = out
            .dataset
            .rows()
            .iter()
            .zip(pots)
            .filter(|(row, _)| row.g == Group::O)
            .map(|(row, pot)| (row.x[0], pot[a] - pot[2 + a], row.a == 0))
            .collect();
        let gaps = binned_adjusted_gaps(&points, 10);
        let worst = gaps
            .iter()
            .map(|(gap, se)| gap.abs() / se)
            .fold(0.0f64, f64::max);
        list.check(
            &format!("CAECB for potential arm a={a} within 3 se"),
            worst <= 3.0,
            format!("worst |t| over 10 bins = {worst:.2}"),
        );
    }

    // External validity: E[S(a)|x] should agree between the groups. The
    // generator's observational group couples U to X, so this check fails
    // by construction on the closed-form generator (gap 0.25 - 0.5 x
    // tanh(x/2)); it is asserted as written and expected red here.
    for a in [0usize, 1usize] {
        let points: Vec<(f64, f64, bool)> = out
            .dataset
            .rows()
            .iter()
            .zip(pots)
            .map(|(row, pot)| (row.x[0], pot[a], row.g == Group::E))
            .collect();
        let gaps = binned_adjusted_gaps(&points, 10);
        let worst = gaps
            .iter()
            .map(|(gap, se)| gap.abs() / se)
            .fold(0.0f64, f64::max);
        list.check(
            &format!("external validity for S({a}) on closed-form draws within 3 se"),
            worst <= 3.0,
            format!("worst |t| over 10 bins = {worst:.2}"),
        );
    }

    // The same check passes on the IHDP preset, where the group indicator
    // depends on observed covariates only: evidence the check itself works.
    // The group score p_g is sufficient for G there, so bins condition on
    // it (conditioning on one covariate would leak the selection on the
    // other sixteen).
    {
        let params = SemiSynthParams::new(
            SemiSynthPreset::Ihdp,
            synthetic_covariates(20_000, 25, 61),
            25,
        );
        let ihdp = sample_semisynth(&params, 61).unwrap();
        let (p_g, _, _) = semisynth_probabilities(&params, 61).unwrap();
        let ihdp_pots = ihdp.truth.potentials.as_ref().unwrap();
        let points: Vec<(f64, f64, bool)> = ihdp
            .dataset
            .rows()
            .iter()
            .zip(ihdp_pots)
            .zip(&p_g)
            .map(|((row, pot), pg)| (*pg, pot[1], row.g == Group::E))
            .collect();
        let gaps = binned_adjusted_gaps(&points, 10);
        let worst = gaps
            .iter()
            .map(|(gap, se)| gap.abs() / se)
            .fold(0.0f64, f64::max);
        list.check(
            "external validity for S(1) on the ihdp preset within 3 se",
            worst <= 3.0,
            format!("worst |t| over 10 bins = {worst:.2}"),
        );
    }

    // GP-generator truth: regressing y1 - y0 on (1, x, x^2) recovers
    // (2, 2, 1) within 0.05.
    {
        let out2 = simgen::sample_dataset2(50_000, 50_000, 62).unwrap();
        let pots2 = out2.truth.potentials.as_ref().unwrap();
        let mut x = Vec::with_capacity(out2.dataset.n());
        let mut diff = Vec::with_capacity(out2.dataset.n());
        for (row, pot) in out2.dataset.rows().iter().zip(pots2) {
            x.push(row.x[0]);
            diff.push(pot[3] - pot[2]);
        }
        let feats: Vec<f64> = x.iter().flat_map(|v| [*v, v * v]).collect();
        let fit = regress::fit_least_squares(&feats, 2, &diff, 0.0).unwrap();
        let intercept = fit.predict(&[0.0, 0.0]);
        let slope = fit.predict(&[1.0, 0.0]) - intercept;
        let curvature = fit.predict(&[0.0, 1.0]) - intercept;
        let worst = (intercept - 2.0)
            .abs()
            .max((slope - 2.0).abs())
            .max((curvature - 1.0).abs());
        list.check(
            "GP-generator effect regression recovers (2, 2, 1) within 0.05",
            worst < 0.05,
            format!("({intercept:.3}, {slope:.3}, {curvature:.3})"),
        );
    }

    // Semi-synthetic presets: calibrated treatment probabilities inside
    // [0.05, 0.95] on every row.
    for (preset, n, cols) in [
        (SemiSynthPreset::Ihdp, 3000usize, 25usize),
        (SemiSynthPreset::News, 2000, 498),
    ] {
        let params = SemiSynthParams::new(preset, synthetic_covariates(n, cols, 63), cols);
        let (_, p_e, p_o) = semisynth_probabilities(&params, 63).unwrap();
        let ok = p_e
            .iter()
            .chain(&p_o)
            .all(|p| (0.05..=0.95).contains(p));
        let lo = p_e.iter().chain(&p_o).cloned().fold(f64::INFINITY, f64::min);
        let hi = p_e.iter().chain(&p_o).cloned().fold(0.0f64, f64::max);
        list.check(
            &format!("{preset:?} treatment probabilities in [0.05, 0.95]"),
            ok,
            format!("range [{lo:.3}, {hi:.3}] over {} rows", p_e.len()),
        );
    }
    list.finish();
}

// ---------------------------------------------------------------------------
// Criterion 7: numerics
// ---------------------------------------------------------------------------

/// Integral-representation oracle for the modified Bessel function:
/// K_n(z) = integral_0^inf exp(-z cosh t) cosh(n t) dt by composite Simpson.
fn bessel_k_integral(order: usize, z: f64) -> f64 {
    let mut upper = 1.0f64;
    while z * upper.cosh() - order as f64 * upper < 750.0 {
        upper += 0.5;
    }
    let steps = 200_000;
    let h = upper / steps as f64;
    let f = |t: f64| (-z * t.cosh()).exp() * (order as f64 * t).cosh();
    let mut acc = f(0.0) + f(upper);
    for i in 1..steps {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    acc * h / 3.0
}

#[test]
fn criterion7_numerics() {
    let mut list = Checklist::new("criterion 7");

    // MLP gradient check, all heads supervised, relative error < 1e-4.
    {
        let rows = vec![
            hlce::dataset::Row { g: Group::E, a: 0, x: vec![0.4, -0.9], s: 1.1, y: None },
            hlce::dataset::Row { g: Group::E, a: 1, x: vec![-0.3, 0.6], s: -0.4, y: None },
            hlce::dataset::Row { g: Group::O, a: 0, x: vec![1.2, 0.2], s: 0.7, y: Some(1.4) },
            hlce::dataset::Row { g: Group::O, a: 1, x: vec![-0.8, -0.5], s: 0.2, y: Some(-0.6) },
        ];
        let refs: Vec<&hlce::dataset::Row> = rows.iter().collect();
        let config = MlpConfig {
            widths: vec![5],
            epochs: 1,
            seed: 7,
            ..MlpConfig::default()
        };
        let mut net = SharedNuisanceNet::new(
            2,
            &config,
            0.01,
            NormStats::identity(2),
            HeadNorm::identity(),
        )
        .unwrap();
        // Nudge every parameter (biases start at zero) so no ReLU
        // pre-activation sits exactly at the kink, where one-sided finite
        // differences are undefined.
        {
            use rand::prelude::*;
            use rand_chacha::ChaCha12Rng;
            use rand_distr::StandardNormal;
            let mut rng = ChaCha12Rng::seed_from_u64(1);
            let mut params = net.params();
            for v in params.iter_mut() {
                *v += 0.05 * rng.sample::<f64, _>(StandardNormal);
            }
            net.set_params(&params);
        }
        let weights: HeadWeights = [1.0; 9];
        let analytic = net.batch_grad(&refs, &weights, 1e-3);
        let params = net.params();
        let eps = 1e-5;
        let mut worst = 0.0f64;
        for i in 0..params.len() {
            let mut plus = net.clone();
            let mut minus = net.clone();
            let mut p = params.clone();
            p[i] += eps;
            plus.set_params(&p);
            p[i] -= 2.0 * eps;
            minus.set_params(&p);
            let numeric = (plus.batch_loss(&refs, &weights, 1e-3)
                - minus.batch_loss(&refs, &weights, 1e-3))
                / (2.0 * eps);
            let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((analytic[i] - numeric).abs() / denom);
        }
        list.check(
            "MLP finite-difference gradient relative error < 1e-4",
            worst < 1e-4,
            format!("worst relative error = {worst:.2e} over {} params", params.len()),
        );
    }

    // Least squares vs an independent Gauss-Jordan solve, 1e-8.
    {
        use rand::prelude::*;
        use rand_chacha::ChaCha12Rng;
        use rand_distr::StandardNormal;
        let mut rng = ChaCha12Rng::seed_from_u64(70);
        let (n, d) = (120usize, 4usize);
        let mut x = Vec::with_capacity(n * d);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let row: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let noise: f64 = rng.sample(StandardNormal);
            y.push(1.0 + row.iter().enumerate().map(|(j, v)| (j as f64 - 1.5) * v).sum::<f64>()
                + 0.1 * noise);
            x.extend(row);
        }
        let model = regress::fit_least_squares(&x, d, &y, 0.0).unwrap();
        // brute force on the normal equations
        let p = d + 1;
        let mut m = vec![0.0; p * p];
        let mut v = vec![0.0; p];
        for i in 0..n {
            let mut z = vec![1.0];
            z.extend_from_slice(&x[i * d..(i + 1) * d]);
            for a in 0..p {
                v[a] += z[a] * y[i];
                for b in 0..p {
                    m[a * p + b] += z[a] * z[b];
                }
            }
        }
        // Gauss-Jordan with partial pivoting
        for col in 0..p {
            let mut pivot = col;
            for r in (col + 1)..p {
                if m[r * p + col].abs() > m[pivot * p + col].abs() {
                    pivot = r;
                }
            }
            for c in 0..p {
                m.swap(col * p + c, pivot * p + c);
            }
            v.swap(col, pivot);
            let diag = m[col * p + col];
            for c in 0..p {
                m[col * p + c] /= diag;
            }
            v[col] /= diag;
            for r in 0..p {
                if r != col {
                    let f = m[r * p + col];
                    for c in 0..p {
                        m[r * p + c] -= f * m[col * p + c];
                    }
                    v[r] -= f * v[col];
                }
            }
        }
        let mut worst = 0.0f64;
        for probe in 0..50 {
            let point: Vec<f64> = (0..d).map(|j| ((probe * 7 + j) % 11) as f64 / 5.0 - 1.0).collect();
            let brute = v[0] + point.iter().zip(&v[1..]).map(|(a, b)| a * b).sum::<f64>();
            worst = worst.max((model.predict(&point) - brute).abs());
        }
        list.check(
            "least squares matches brute-force solve within 1e-8",
            worst < 1e-8,
            format!("worst prediction gap = {worst:.2e}"),
        );
    }

    // Matern nu=2 vs the Bessel integral oracle, 1e-6.
    {
        let mut worst = 0.0f64;
        for r in [0.2, 0.5, 1.0, 1.5, 2.5] {
            let z = 2.0 * r;
            let oracle = 0.5 * z * z * bessel_k_integral(2, z);
            let v = matern_kernel(r, 1.0, 2.0).unwrap();
            worst = worst.max((v - oracle).abs());
        }
        list.check(
            "Matern(nu=2) matches Bessel integral oracle within 1e-6",
            worst < 1e-6,
            format!("worst gap = {worst:.2e}"),
        );
    }

    // rate_slope on exact power laws within 1e-9.
    {
        let points: Vec<(usize, f64)> = [200usize, 400, 800, 1600, 3200]
            .iter()
            .map(|&n| (n, 3.7 * (n as f64).powf(-0.5)))
            .collect();
        let slope = metrics::rate_slope(&points).unwrap();
        let gap = (slope + 0.5).abs();
        list.check(
            "rate_slope exact on n^{-1/2} within 1e-9",
            gap < 1e-9,
            format!("slope = {slope:.12}"),
        );
    }
    list.finish();
}
