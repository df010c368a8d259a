//! Standalone SVG plots of experiment reports: median lines with
//! inter-quartile bands for sweeps (log-scaled x), bars with whiskers for
//! the misspecification presets. Output bytes are deterministic for a given
//! report.

use std::path::Path;

use super::report::ExperimentReport;
use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    SweepLines,
    MisspecBars,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 130.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

fn fmt(v: f64) -> String {
    format!("{v:.3}")
}

fn quartiles(values: &mut Vec<f64>) -> (f64, f64, f64) {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |p: f64| {
        let idx = p * (values.len() - 1) as f64;
        let lo = idx.floor() as usize;
        let hi = idx.ceil() as usize;
        let w = idx - lo as f64;
        values[lo] * (1.0 - w) + values[hi] * w
    };
    (q(0.25), q(0.5), q(0.75))
}

/// Emits an SVG for the report; the report's experiment must match the plot
/// kind (sweeps for lines, misspec for bars).
pub fn emit_plot(
    report: &ExperimentReport,
    kind: PlotKind,
    path: &Path,
) -> Result<(), HarnessError> {
    let svg = render_plot(report, kind)?;
    std::fs::write(path, svg)?;
    Ok(())
}

/// Renders the SVG text; see [`emit_plot`].
pub fn render_plot(report: &ExperimentReport, kind: PlotKind) -> Result<String, HarnessError> {
    if report.records.is_empty() {
        return Err(HarnessError::EmptyReport);
    }
    match kind {
        PlotKind::SweepLines => render_sweep(report),
        PlotKind::MisspecBars => render_misspec(report),
    }
}

fn svg_open() -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         fill=\"white\"/>\n"
    )
}

fn axis_lines() -> String {
    let x0 = MARGIN_L;
    let x1 = WIDTH - MARGIN_R;
    let y0 = HEIGHT - MARGIN_B;
    let y1 = MARGIN_T;
    format!(
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n\
         <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>\n"
    )
}

fn render_sweep(report: &ExperimentReport) -> Result<String, HarnessError> {
    let axis_e = match report.config.experiment.as_str() {
        "sweep-e" => true,
        "sweep-o" => false,
        other => {
            return Err(HarnessError::WrongReportKind(format!(
                "sweep-lines plot needs a sweep report, got `{other}`"
            )))
        }
    };
    let size_of = |r: &crate::metrics::MetricRecord| if axis_e { r.n_e } else { r.n_o };
    let mut sizes: Vec<usize> = report.records.iter().map(&size_of).collect();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 2 {
        return Err(HarnessError::WrongReportKind(
            "sweep plot needs at least two grid sizes".into(),
        ));
    }
    let estimators = &report.config.estimators;
    // Per-estimator (size, q1, median, q3).
    let mut series: Vec<(String, Vec<(usize, f64, f64, f64)>)> = Vec::new();
    for name in estimators {
        let mut points = Vec::new();
        for &size in &sizes {
            let mut vals: Vec<f64> = report
                .records
                .iter()
                .filter(|r| &r.estimator == name && size_of(r) == size)
                .map(|r| r.pehe)
                .collect();
            if vals.is_empty() {
                continue;
            }
            let (q1, med, q3) = quartiles(&mut vals);
            points.push((size, q1, med, q3));
        }
        if !points.is_empty() {
            series.push((name.clone(), points));
        }
    }
    let log_lo = (sizes[0] as f64).log10();
    let log_hi = (*sizes.last().unwrap() as f64).log10();
    let y_max = series
        .iter()
        .flat_map(|s| s.1.iter().map(|p| p.3))
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let x_pos = |size: usize| {
        MARGIN_L + (WIDTH - MARGIN_L - MARGIN_R) * ((size as f64).log10() - log_lo) / (log_hi - log_lo)
    };
    let y_pos = |v: f64| HEIGHT - MARGIN_B - (HEIGHT - MARGIN_T - MARGIN_B) * (v / (1.05 * y_max));

    let mut svg = svg_open();
    svg.push_str(&axis_lines());
    // x ticks at the grid sizes
    for &size in &sizes {
        let x = x_pos(size);
        let y = HEIGHT - MARGIN_B;
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
            fmt(x),
            fmt(y),
            fmt(x),
            fmt(y + 5.0)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"middle\">{size}</text>\n",
            fmt(x),
            fmt(y + 18.0)
        ));
    }
    // y ticks
    for i in 0..=4 {
        let v = y_max * i as f64 / 4.0;
        let y = y_pos(v);
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"end\">{}</text>\n",
            fmt(MARGIN_L - 8.0),
            fmt(y + 3.0),
            fmt(v)
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
        fmt(MARGIN_L + (WIDTH - MARGIN_L - MARGIN_R) / 2.0),
        fmt(HEIGHT - 15.0),
        if axis_e { "n_e (log scale)" } else { "n_o (log scale)" }
    ));
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" \
         transform=\"rotate(-90 18 {})\">PEHE</text>\n",
        fmt(MARGIN_T + (HEIGHT - MARGIN_T - MARGIN_B) / 2.0),
        fmt(MARGIN_T + (HEIGHT - MARGIN_T - MARGIN_B) / 2.0)
    ));
    for (si, (name, points)) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        // interquartile band
        let mut band = String::from("<polygon points=\"");
        for (size, q1, _, _) in points {
            band.push_str(&format!("{},{} ", fmt(x_pos(*size)), fmt(y_pos(q1.min(y_max)))));
        }
        for (size, _, _, q3) in points.iter().rev() {
            band.push_str(&format!("{},{} ", fmt(x_pos(*size)), fmt(y_pos(q3.min(y_max)))));
        }
        band.push_str(&format!("\" fill=\"{color}\" opacity=\"0.15\" stroke=\"none\"/>\n"));
        svg.push_str(&band);
        // median polyline
        let mut line = String::from("<polyline points=\"");
        for (size, _, med, _) in points {
            line.push_str(&format!("{},{} ", fmt(x_pos(*size)), fmt(y_pos(med.min(y_max)))));
        }
        line.push_str(&format!(
            "\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>\n"
        ));
        svg.push_str(&line);
        // legend
        let ly = MARGIN_T + 16.0 * si as f64;
        svg.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"4\" fill=\"{color}\"/>\n",
            fmt(WIDTH - MARGIN_R + 10.0),
            fmt(ly)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\">{name}</text>\n",
            fmt(WIDTH - MARGIN_R + 28.0),
            fmt(ly + 5.0)
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn render_misspec(report: &ExperimentReport) -> Result<String, HarnessError> {
    if report.config.experiment != "misspec" {
        return Err(HarnessError::WrongReportKind(format!(
            "misspec-bars plot needs a misspec report, got `{}`",
            report.config.experiment
        )));
    }
    // Bars in first-seen preset order, which the harness emits
    // deterministically.
    let mut presets: Vec<String> = Vec::new();
    for r in &report.records {
        if !presets.contains(&r.preset) {
            presets.push(r.preset.clone());
        }
    }
    let mut stats = Vec::with_capacity(presets.len());
    for preset in &presets {
        let mut vals: Vec<f64> = report
            .records
            .iter()
            .filter(|r| &r.preset == preset)
            .map(|r| r.pehe)
            .collect();
        let (q1, med, q3) = quartiles(&mut vals);
        stats.push((preset.clone(), q1, med, q3));
    }
    let y_max = stats.iter().map(|s| s.3).fold(0.0f64, f64::max).max(1e-9);
    let y_pos = |v: f64| HEIGHT - MARGIN_B - (HEIGHT - MARGIN_T - MARGIN_B) * (v / (1.1 * y_max));
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let slot = plot_w / stats.len() as f64;
    let bar_w = slot * 0.6;

    let mut svg = svg_open();
    svg.push_str(&axis_lines());
    for i in 0..=4 {
        let v = y_max * i as f64 / 4.0;
        let y = y_pos(v);
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"end\">{}</text>\n",
            fmt(MARGIN_L - 8.0),
            fmt(y + 3.0),
            fmt(v)
        ));
    }
    for (i, (preset, q1, med, q3)) in stats.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let cx = MARGIN_L + slot * (i as f64 + 0.5);
        let x = cx - bar_w / 2.0;
        let y = y_pos(*med);
        let h = (HEIGHT - MARGIN_B) - y;
        svg.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{color}\" opacity=\"0.8\"/>\n",
            fmt(x),
            fmt(y),
            fmt(bar_w),
            fmt(h)
        ));
        // whiskers: interquartile range
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
            fmt(cx),
            fmt(y_pos(*q1)),
            fmt(cx),
            fmt(y_pos(*q3))
        ));
        for q in [q1, q3] {
            svg.push_str(&format!(
                "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
                fmt(cx - 6.0),
                fmt(y_pos(*q)),
                fmt(cx + 6.0),
                fmt(y_pos(*q))
            ));
        }
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"9\" text-anchor=\"middle\">{}</text>\n",
            fmt(cx),
            fmt(HEIGHT - MARGIN_B + 16.0),
            preset
        ));
    }
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" \
         transform=\"rotate(-90 18 {})\">PEHE</text>\n",
        fmt(MARGIN_T + (HEIGHT - MARGIN_T - MARGIN_B) / 2.0),
        fmt(MARGIN_T + (HEIGHT - MARGIN_T - MARGIN_B) / 2.0)
    ));
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::report::ReportConfig;
    use crate::metrics::MetricRecord;

    fn record(estimator: &str, preset: &str, n_e: usize, seed: u64, pehe: f64) -> MetricRecord {
        MetricRecord {
            estimator: estimator.into(),
            preset: preset.into(),
            n_e,
            n_o: 2000,
            seed,
            pehe,
            ate_error: pehe / 2.0,
            wall_ms: 1,
        }
    }

    fn sweep_report() -> ExperimentReport {
        let mut records = Vec::new();
        for &n_e in &[100usize, 1000, 10000] {
            for seed in 0..3u64 {
                for (k, name) in ["naive", "reg", "pro", "mr"].iter().enumerate() {
                    records.push(record(
                        name,
                        "none",
                        n_e,
                        seed,
                        1.0 / (n_e as f64).sqrt() * (k + 1) as f64 + seed as f64 * 0.01,
                    ));
                }
            }
        }
        ExperimentReport {
            config: ReportConfig {
                experiment: "sweep-e".into(),
                estimators: vec!["naive".into(), "reg".into(), "pro".into(), "mr".into()],
                replications: 3,
                seed: 0,
                n_e: 1000,
                n_o: 2000,
                n_e_grid: vec![100, 1000, 10000],
                n_o_grid: vec![],
                rates_grid: vec![],
                nuisance: "kernel".into(),
                stage2: "kernel-ridge".into(),
                fast: false,
            },
            records,
        }
    }

    #[test]
    fn sweep_plot_has_one_polyline_per_estimator() {
        let svg = render_plot(&sweep_report(), PlotKind::SweepLines).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 4);
        assert_eq!(svg.matches("<polygon").count(), 4);
        assert!(svg.contains("n_e (log scale)"));
    }

    #[test]
    fn misspec_plot_has_six_bars() {
        let presets = [
            "M_{1,2,3,4}",
            "M_{1,2',3',4'}",
            "M_{1',2,3',4'}",
            "M_{1',2',3,4'}",
            "M_{1',2',3',4}",
            "M_{1',2',3',4'}",
        ];
        let mut records = Vec::new();
        for preset in presets {
            for seed in 0..3u64 {
                records.push(record("mr", preset, 10000, seed, 0.2 + seed as f64 * 0.05));
            }
        }
        let report = ExperimentReport {
            config: ReportConfig {
                experiment: "misspec".into(),
                estimators: vec!["mr".into()],
                replications: 3,
                seed: 0,
                n_e: 10000,
                n_o: 15000,
                n_e_grid: vec![],
                n_o_grid: vec![],
                rates_grid: vec![],
                nuisance: "parametric-per-preset".into(),
                stage2: "poly2".into(),
                fast: false,
            },
            records,
        };
        let svg = render_plot(&report, PlotKind::MisspecBars).unwrap();
        assert_eq!(svg.matches("<rect").count(), 7); // 6 bars + background
    }

    #[test]
    fn plot_bytes_are_deterministic_and_kind_checked() {
        let report = sweep_report();
        let a = render_plot(&report, PlotKind::SweepLines).unwrap();
        let b = render_plot(&report, PlotKind::SweepLines).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            render_plot(&report, PlotKind::MisspecBars),
            Err(HarnessError::WrongReportKind(_))
        ));
    }
}
