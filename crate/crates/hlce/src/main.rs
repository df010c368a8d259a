//! Command-line harness for generating data, fitting estimators, scoring
//! predictions, and reproducing the experiment designs at desk scale.

use std::error::Error;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use hlce::dataset::{GroundTruth, PanelDataset};
use hlce::estimator::{self, EstimatorConfig, EstimatorKind, Splitting};
use hlce::harness::{
    self, emit_plot, read_report_json, write_report, ExperimentConfig, ExperimentKind, PlotKind,
    ReportFormat,
};
use hlce::metrics;
use hlce::nuisance::NuisanceSpec;
use hlce::regress::{KernelSpec, RegressorSpec};
use hlce::simgen::{
    self, sample_semisynth, NoiseScales, SemiSynthParams, SemiSynthPreset, UnobservedSpec,
};

#[derive(Parser)]
#[command(name = "hlce", version, about = "Heterogeneous long-term causal effect estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Root seed for everything the subcommand randomizes.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// JSON experiment config; CLI flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for experiment cells (0 = default pool).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Shrink the misspecification experiment to desk scale.
    #[arg(long, global = true, default_value_t = false)]
    fast: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset plus its ground-truth sidecar.
    Gen {
        #[command(subcommand)]
        generator: GenCommand,
    },
    /// Fit an estimator on a dataset CSV and write predictions.
    Fit(FitArgs),
    /// Score a prediction file against a ground-truth sidecar.
    Eval(EvalArgs),
    /// Run an experiment and persist its report.
    Exp(ExpArgs),
    /// Render an SVG plot from a JSON report.
    Plot(PlotArgs),
}

#[derive(Subcommand)]
enum GenCommand {
    /// Closed-form synthetic generator.
    Dataset1 {
        #[arg(long, default_value_t = 10000)]
        n_e: usize,
        #[arg(long, default_value_t = 15000)]
        n_o: usize,
        #[arg(long, default_value_t = 1.0)]
        noise_s: f64,
        #[arg(long, default_value_t = 1.0)]
        noise_y: f64,
    },
    /// Gaussian-process synthetic generator.
    Dataset2 {
        #[arg(long, default_value_t = 1000)]
        n_e: usize,
        #[arg(long, default_value_t = 2000)]
        n_o: usize,
        #[arg(long, default_value_t = 1.0)]
        length_scale: f64,
        #[arg(long, default_value_t = 2.0)]
        smoothness: f64,
    },
    /// Semi-synthetic pipeline over 25-column covariates (8 unobserved).
    Ihdp {
        /// Covariate CSV; a standard-normal stand-in is drawn when absent.
        #[arg(long)]
        covariates: Option<PathBuf>,
        /// Units for the stand-in covariate draw.
        #[arg(long, default_value_t = 747)]
        n: usize,
    },
    /// Semi-synthetic pipeline over 498-column covariates (166 unobserved).
    News {
        #[arg(long)]
        covariates: Option<PathBuf>,
        #[arg(long, default_value_t = 5000)]
        n: usize,
    },
}

#[derive(Args)]
struct FitArgs {
    /// Training dataset CSV.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = KindArg::Mr)]
    kind: KindArg,
    #[arg(long, value_enum, default_value_t = NuisanceArg::Kernel)]
    nuisance: NuisanceArg,
    #[arg(long, value_enum, default_value_t = Stage2Arg::KernelRidge)]
    stage2: Stage2Arg,
    /// full, twofold, or crossfit:K.
    #[arg(long, default_value = "full")]
    splitting: String,
    /// Rows to predict for; defaults to the training data.
    #[arg(long)]
    eval: Option<PathBuf>,
    /// Output CSV of predicted effects.
    #[arg(long, default_value = "predictions.csv")]
    pred_out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Naive,
    Reg,
    Pro,
    Mr,
}

impl KindArg {
    fn kind(self) -> EstimatorKind {
        match self {
            KindArg::Naive => EstimatorKind::Naive,
            KindArg::Reg => EstimatorKind::Reg,
            KindArg::Pro => EstimatorKind::Pro,
            KindArg::Mr => EstimatorKind::Mr,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum NuisanceArg {
    Correct,
    Misspec,
    Kernel,
    Mlp,
    Oracle,
}

impl NuisanceArg {
    fn spec(self) -> NuisanceSpec {
        match self {
            NuisanceArg::Correct => NuisanceSpec::correct_parametric(),
            NuisanceArg::Misspec => NuisanceSpec::misspec_parametric(),
            NuisanceArg::Kernel => NuisanceSpec::kernel(),
            NuisanceArg::Mlp => NuisanceSpec::mlp_shared(),
            NuisanceArg::Oracle => NuisanceSpec::oracle(),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Stage2Arg {
    Ols,
    Poly2,
    KernelRidge,
    Mlp,
}

impl Stage2Arg {
    fn spec(self) -> RegressorSpec {
        match self {
            Stage2Arg::Ols => RegressorSpec::Ols,
            Stage2Arg::Poly2 => RegressorSpec::polynomial(2),
            Stage2Arg::KernelRidge => RegressorSpec::KernelRidge(KernelSpec::default()),
            Stage2Arg::Mlp => RegressorSpec::Mlp(Default::default()),
        }
    }
}

#[derive(Args)]
struct EvalArgs {
    /// Predictions CSV (tau_hat column).
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth sidecar CSV.
    #[arg(long)]
    truth: PathBuf,
    /// Optional JSON metrics output.
    #[arg(long)]
    json_out: Option<PathBuf>,
}

#[derive(Args)]
struct ExpArgs {
    /// misspec, sweep-e, sweep-o, rates, oracle-check, or semisynth.
    name: String,
    #[arg(long)]
    replications: Option<usize>,
    /// Comma-separated estimator kinds.
    #[arg(long, value_delimiter = ',')]
    estimators: Option<Vec<String>>,
    #[arg(long)]
    n_e: Option<usize>,
    #[arg(long)]
    n_o: Option<usize>,
    /// ihdp or news (semisynth experiment).
    #[arg(long)]
    preset: Option<String>,
    /// Covariate CSV for semisynth.
    #[arg(long)]
    covariates: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// JSON report produced by `exp`.
    #[arg(long)]
    report: PathBuf,
    /// sweep-lines or misspec-bars.
    #[arg(long)]
    kind: String,
    #[arg(long, default_value = "plot.svg")]
    plot_out: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<(), Box<dyn Error>> {
    std::fs::create_dir_all(&cli.out)?;
    match cli.command {
        Command::Gen { ref generator } => run_gen(&cli, generator),
        Command::Fit(ref args) => run_fit(&cli, args),
        Command::Eval(ref args) => run_eval(args),
        Command::Exp(ref args) => run_exp(&cli, args),
        Command::Plot(ref args) => run_plot(&cli, args),
    }
}

fn write_gen_output(out: &simgen::GenOutput, dir: &Path) -> Result<(), Box<dyn Error>> {
    let data_path = dir.join("dataset.csv");
    let truth_path = dir.join("truth.csv");
    out.dataset.write_csv(&data_path)?;
    out.truth.write_csv(&truth_path)?;
    println!(
        "wrote {} rows (d={}) to {} and truth to {}",
        out.dataset.n(),
        out.dataset.d(),
        data_path.display(),
        truth_path.display()
    );
    Ok(())
}

fn run_gen(cli: &Cli, generator: &GenCommand) -> Result<(), Box<dyn Error>> {
    let out = match generator {
        GenCommand::Dataset1 { n_e, n_o, noise_s, noise_y } => simgen::sample_dataset1_with_noise(
            *n_e,
            *n_o,
            NoiseScales { s: *noise_s, y: *noise_y },
            cli.seed,
        )?,
        GenCommand::Dataset2 { n_e, n_o, length_scale, smoothness } => {
            let params = simgen::Dataset2Params {
                length_scale: *length_scale,
                smoothness: *smoothness,
                ..Default::default()
            };
            simgen::sample_dataset2_with_params(*n_e, *n_o, &params, cli.seed)?
        }
        GenCommand::Ihdp { covariates, n } => {
            semisynth_gen(SemiSynthPreset::Ihdp, covariates.as_deref(), *n, cli.seed)?
        }
        GenCommand::News { covariates, n } => {
            semisynth_gen(SemiSynthPreset::News, covariates.as_deref(), *n, cli.seed)?
        }
    };
    write_gen_output(&out, &cli.out)
}

fn semisynth_gen(
    preset: SemiSynthPreset,
    covariates: Option<&Path>,
    n: usize,
    seed: u64,
) -> Result<simgen::GenOutput, Box<dyn Error>> {
    let (matrix, cols) = match covariates {
        Some(path) => simgen::load_covariates_csv(path)?,
        None => (
            simgen::synthetic_covariates(n, preset.expected_columns(), seed ^ 0x5eed),
            preset.expected_columns(),
        ),
    };
    let params = SemiSynthParams {
        preset,
        covariates: matrix,
        n_cols: cols,
        unobserved: UnobservedSpec::Count(preset.expected_unobserved()),
        offsets: None,
        noise: Default::default(),
    };
    Ok(sample_semisynth(&params, seed)?)
}

fn parse_splitting(text: &str) -> Result<Splitting, Box<dyn Error>> {
    if text == "full" {
        return Ok(Splitting::FullData);
    }
    if text == "twofold" {
        return Ok(Splitting::TwoFoldSplit);
    }
    if let Some(k) = text.strip_prefix("crossfit:") {
        return Ok(Splitting::CrossFit(k.parse()?));
    }
    Err(format!("unknown splitting `{text}`; use full, twofold, or crossfit:K").into())
}

fn run_fit(cli: &Cli, args: &FitArgs) -> Result<(), Box<dyn Error>> {
    let dataset = PanelDataset::load_csv(&args.data)?;
    let config = EstimatorConfig {
        kind: args.kind.kind(),
        nuisance: args.nuisance.spec(),
        stage2: args.stage2.spec(),
        splitting: parse_splitting(&args.splitting)?,
        seed: cli.seed,
    };
    let model = estimator::fit_two_stage(&dataset, &config)?;
    let eval_data = match &args.eval {
        Some(path) => PanelDataset::load_csv(path)?,
        None => dataset.clone(),
    };
    let preds = model.predict_dataset(&eval_data)?;
    let mut text = String::from("tau_hat\n");
    for p in &preds {
        text.push_str(&format!("{p}\n"));
    }
    let pred_path = cli.out.join(&args.pred_out);
    std::fs::write(&pred_path, text)?;
    println!(
        "fit {} ({} rows, nuisance={}, stage2={}); wrote {} predictions to {}",
        model.provenance.kind.label(),
        model.provenance.n,
        model.provenance.nuisance_label,
        model.provenance.stage2_label,
        preds.len(),
        pred_path.display()
    );
    Ok(())
}

fn read_predictions(path: &Path) -> Result<Vec<f64>, Box<dyn Error>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some("tau_hat") => {}
        other => return Err(format!("expected `tau_hat` header, got {other:?}").into()),
    }
    let mut out = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        out.push(line.parse()?);
    }
    Ok(out)
}

fn run_eval(args: &EvalArgs) -> Result<(), Box<dyn Error>> {
    let preds = read_predictions(&args.pred)?;
    let truth = GroundTruth::load_csv(&args.truth)?;
    let pehe = metrics::pehe(&preds, &truth.tau)?;
    let ate_error = metrics::ate_error(&preds, &truth.tau)?;
    println!("pehe={pehe}");
    println!("ate_error={ate_error}");
    if let Some(path) = &args.json_out {
        let value = serde_json::json!({ "pehe": pehe, "ate_error": ate_error, "n": preds.len() });
        std::fs::write(path, serde_json::to_string_pretty(&value)?)?;
    }
    Ok(())
}

fn parse_estimators(names: &[String]) -> Result<Vec<EstimatorKind>, Box<dyn Error>> {
    names
        .iter()
        .map(|name| match name.as_str() {
            "naive" => Ok(EstimatorKind::Naive),
            "reg" => Ok(EstimatorKind::Reg),
            "pro" => Ok(EstimatorKind::Pro),
            "mr" => Ok(EstimatorKind::Mr),
            other => Err(format!("unknown estimator `{other}`").into()),
        })
        .collect()
}

fn run_exp(cli: &Cli, args: &ExpArgs) -> Result<(), Box<dyn Error>> {
    let experiment = match args.name.as_str() {
        "misspec" => ExperimentKind::Misspec,
        "sweep-e" => ExperimentKind::SweepE,
        "sweep-o" => ExperimentKind::SweepO,
        "rates" => ExperimentKind::Rates,
        "oracle-check" => ExperimentKind::OracleCheck,
        "semisynth" => ExperimentKind::Semisynth,
        other => return Err(format!("unknown experiment `{other}`").into()),
    };
    let mut config: ExperimentConfig = match &cli.config {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => ExperimentConfig::default(),
    };
    config.experiment = experiment;
    config.seed = cli.seed;
    config.workers = cli.workers;
    config.fast = cli.fast;
    if let Some(reps) = args.replications {
        config.replications = reps;
    }
    if let Some(names) = &args.estimators {
        config.estimators = parse_estimators(names)?;
    }
    if args.n_e.is_some() {
        config.n_e = args.n_e;
    }
    if args.n_o.is_some() {
        config.n_o = args.n_o;
    }
    if args.preset.is_some() {
        config.semisynth_preset = args.preset.clone();
    }
    if args.covariates.is_some() {
        config.covariates = args.covariates.clone();
    }

    let report = harness::run_experiment(&config)?;
    let csv_path = cli.out.join("report.csv");
    let json_path = cli.out.join("report.json");
    write_report(&report, &csv_path, ReportFormat::Csv)?;
    write_report(&report, &json_path, ReportFormat::Json)?;
    println!(
        "{}: {} records -> {} and {}",
        experiment.label(),
        report.records.len(),
        csv_path.display(),
        json_path.display()
    );

    // Per-experiment console summary.
    match experiment {
        ExperimentKind::Misspec => {
            let mut presets: Vec<String> = Vec::new();
            for r in &report.records {
                if !presets.contains(&r.preset) {
                    presets.push(r.preset.clone());
                }
            }
            for preset in presets {
                let vals: Vec<f64> = report
                    .records
                    .iter()
                    .filter(|r| r.preset == preset)
                    .map(|r| r.pehe)
                    .collect();
                println!("  {preset}: median PEHE {:.4}", harness::median_of(&vals));
            }
        }
        ExperimentKind::Rates => {
            for (name, slope) in harness::rate_slopes(&report)? {
                println!("  {name}: rate slope {slope:.3}");
            }
        }
        _ => {
            let mut names: Vec<String> =
                report.records.iter().map(|r| r.estimator.clone()).collect();
            names.sort();
            names.dedup();
            for name in names {
                let vals: Vec<f64> = report
                    .records
                    .iter()
                    .filter(|r| r.estimator == name)
                    .map(|r| r.pehe)
                    .collect();
                println!("  {name}: median PEHE {:.4}", harness::median_of(&vals));
            }
        }
    }
    Ok(())
}

fn run_plot(cli: &Cli, args: &PlotArgs) -> Result<(), Box<dyn Error>> {
    let report = read_report_json(&args.report)?;
    let kind = match args.kind.as_str() {
        "sweep-lines" => PlotKind::SweepLines,
        "misspec-bars" => PlotKind::MisspecBars,
        other => return Err(format!("unknown plot kind `{other}`").into()),
    };
    let path = cli.out.join(&args.plot_out);
    emit_plot(&report, kind, &path)?;
    println!("wrote {}", path.display());
    Ok(())
}
