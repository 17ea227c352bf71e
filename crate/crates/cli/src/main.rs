//! Staged EMR risk-modeling pipeline.
//!
//! Five file-based subcommands: `synth` writes a population with planted
//! ground truth, `cohort` matches cases to controls, `featurize` builds the
//! design matrix, `cv` runs cross-validated (optionally stepwise) logistic
//! fits, and `report` turns per-feature-set CV reports into figure tables.
//! Every stage is seeded and writes a provenance manifest next to its
//! outputs.
//!
//! Exit codes: 0 success, 2 usage or config error, 3 infeasible cohort
//! matching, 4 degenerate fit, 5 misaligned report inputs.

mod manifest;

use clap::{Parser, Subcommand, ValueEnum};
use cohortrisk_core::cohort::{build_cohort, CohortError, CohortFile, CohortSpec, Label};
use cohortrisk_core::emr::{load_dataset, validate_dataset, DatasetIoError};
use cohortrisk_core::features::{
    build_design_matrix, default_dictionary, DesignIoError, FeatureDictionary, FeatureError,
};
use cohortrisk_core::glm::GlmError;
use cohortrisk_core::metrics::{
    coefficient_stability, cross_validate, emit_figure_data, CvError, FeatureSetReports,
    FigureError, RocError, Selector,
};
use cohortrisk_core::synth::{generate_population, write_population, ConfigError, GeneratorConfig};
use cohortrisk_core::{CvReport, DesignMatrix, FitOptions};
use manifest::ManifestBuilder;
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "cohortrisk", version, about = "Case-control risk modeling over EMR extracts")]
struct Cli {
    /// Worker threads (0 = auto).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Master seed; overrides seeds embedded in config files.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic population with planted ground truth.
    Synth {
        /// Generator config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Directory for patients.jsonl, encounters.jsonl, truth.json.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Identify cases, screen eligibility, and match controls.
    Cohort {
        #[arg(long)]
        patients: PathBuf,
        #[arg(long)]
        encounters: PathBuf,
        /// Cohort spec (JSON); defaults apply when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Widen or tighten the age matching tolerance (years).
        #[arg(long)]
        age_tolerance: Option<i32>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the design matrix for a cumulative feature set.
    Featurize {
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long)]
        patients: PathBuf,
        #[arg(long)]
        encounters: PathBuf,
        /// Feature dictionary (JSON); the shipped dictionary when omitted.
        #[arg(long)]
        dict: Option<PathBuf>,
        /// Cumulative feature set (1..=9 for the shipped dictionary).
        #[arg(long)]
        set: u8,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validated logistic fits with optional stepwise selection.
    Cv {
        #[arg(long)]
        design: PathBuf,
        #[arg(long, value_enum, default_value_t = SelectorArg::None)]
        select: SelectorArg,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Figure tables and the coefficient-stability table from CV reports.
    Report {
        /// Forward-selection reports, one per feature set, ascending.
        #[arg(long, num_args = 1.., required = true)]
        forward: Vec<PathBuf>,
        /// Backward-selection reports, aligned with --forward.
        #[arg(long, num_args = 1.., required = true)]
        backward: Vec<PathBuf>,
        /// The cohort the reports were computed on.
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Significance level for the p-value filter flag.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Minimum folds a feature must be selected in.
        #[arg(long, default_value_t = 5)]
        min_folds: usize,
        /// Minimum |mean coefficient| for a stability row.
        #[arg(long, default_value_t = 1.0)]
        beta_magnitude: f64,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SelectorArg {
    None,
    Forward,
    Backward,
}

impl From<SelectorArg> for Selector {
    fn from(arg: SelectorArg) -> Self {
        match arg {
            SelectorArg::None => Selector::None,
            SelectorArg::Forward => Selector::Forward,
            SelectorArg::Backward => Selector::Backward,
        }
    }
}

const EXIT_CONFIG: i32 = 2;
const EXIT_COHORT: i32 = 3;
const EXIT_FIT: i32 = 4;
const EXIT_MISALIGNED: i32 = 5;

struct CliError {
    code: i32,
    message: String,
}

fn fail(code: i32, message: impl Into<String>) -> CliError {
    CliError { code, message: message.into() }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        fail(1, e.to_string())
    }
}

impl From<DatasetIoError> for CliError {
    fn from(e: DatasetIoError) -> Self {
        fail(EXIT_CONFIG, e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        fail(EXIT_CONFIG, e.to_string())
    }
}

impl From<CohortError> for CliError {
    fn from(e: CohortError) -> Self {
        fail(EXIT_COHORT, e.to_string())
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        fail(EXIT_CONFIG, e.to_string())
    }
}

impl From<DesignIoError> for CliError {
    fn from(e: DesignIoError) -> Self {
        fail(EXIT_CONFIG, e.to_string())
    }
}

impl From<CvError> for CliError {
    fn from(e: CvError) -> Self {
        let code = match &e {
            CvError::TooFewSamples { .. } => EXIT_CONFIG,
            CvError::Glm(_) | CvError::Roc(_) => EXIT_FIT,
        };
        fail(code, e.to_string())
    }
}

impl From<FigureError> for CliError {
    fn from(e: FigureError) -> Self {
        let code = match &e {
            FigureError::MisalignedCohorts { .. } => EXIT_MISALIGNED,
            FigureError::Empty => EXIT_CONFIG,
            FigureError::Roc(RocError::OneClassOnly) => EXIT_FIT,
            _ => EXIT_FIT,
        };
        fail(code, e.to_string())
    }
}

impl From<GlmError> for CliError {
    fn from(e: GlmError) -> Self {
        fail(EXIT_FIT, e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        fail(1, e.to_string())
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| fail(EXIT_CONFIG, format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| fail(EXIT_CONFIG, format!("{}: {e}", path.display())))
}

fn main() {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::new().filter("COHORTRISK_LOG")).init();
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .expect("rayon pool configured once");
    }
    if let Err(e) = run(cli) {
        eprintln!("error: {}", e.message);
        std::process::exit(e.code);
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth { config, out_dir } => cmd_synth(&config, cli.seed, &out_dir),
        Command::Cohort { patients, encounters, spec, age_tolerance, out } => {
            cmd_cohort(&patients, &encounters, spec.as_deref(), age_tolerance, cli.seed, &out)
        }
        Command::Featurize { cohort, patients, encounters, dict, set, out } => {
            cmd_featurize(&cohort, &patients, &encounters, dict.as_deref(), set, &out)
        }
        Command::Cv { design, select, folds, out } => {
            cmd_cv(&design, select.into(), folds, cli.seed.unwrap_or(0), &out)
        }
        Command::Report {
            forward,
            backward,
            cohort,
            out_dir,
            alpha,
            min_folds,
            beta_magnitude,
        } => cmd_report(&forward, &backward, &cohort, &out_dir, alpha, min_folds, beta_magnitude),
    }
}

fn cmd_synth(config_path: &Path, seed: Option<u64>, out_dir: &Path) -> Result<(), CliError> {
    let mut config: GeneratorConfig = read_json(config_path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let population = generate_population(&config)?;
    let paths = write_population(&population, out_dir)?;
    let cases = population.truth.labels.values().filter(|&&l| l == 1).count();
    log::info!(
        "generated {} patients ({cases} cases), {} encounters",
        population.patients.len(),
        population.encounters.len()
    );
    ManifestBuilder::new("synth")
        .input("config", config_path)
        .output("patients", &paths.patients)
        .output("encounters", &paths.encounters)
        .output("truth", &paths.truth)
        .seed(config.seed)
        .write(out_dir)?;
    println!(
        "synth: {} patients ({} cases) -> {}",
        population.patients.len(),
        cases,
        out_dir.display()
    );
    Ok(())
}

fn cmd_cohort(
    patients: &Path,
    encounters: &Path,
    spec_path: Option<&Path>,
    age_tolerance: Option<i32>,
    seed: Option<u64>,
    out: &Path,
) -> Result<(), CliError> {
    let dataset = load_dataset(patients, encounters)?;
    let report = validate_dataset(&dataset);
    if !report.is_empty() {
        return Err(fail(
            EXIT_CONFIG,
            format!(
                "dataset failed validation: {} dangling refs, {} duplicate ids, {} patients without encounters",
                report.dangling_refs.len(),
                report.duplicate_ids.len(),
                report.zero_encounter_patients.len()
            ),
        ));
    }
    let mut spec: CohortSpec = match spec_path {
        Some(p) => read_json(p)?,
        None => CohortSpec::default(),
    };
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    if let Some(tol) = age_tolerance {
        spec.age_tolerance_years = tol;
    }
    let assignments = build_cohort(&dataset, &spec)?;
    let cases = assignments.iter().filter(|a| a.label == Label::Case).count();
    let controls = assignments.len() - cases;
    let file = CohortFile { seed: spec.seed, spec, assignments };
    let json = serde_json::to_string_pretty(&file).expect("cohort serializes");
    std::fs::write(out, json + "\n")?;
    let mut builder = ManifestBuilder::new("cohort");
    builder.input("patients", patients).input("encounters", encounters).output("cohort", out);
    if let Some(p) = spec_path {
        builder.input("spec", p);
    }
    builder.seed(file.seed).write(out)?;
    println!("cohort: {cases} cases, {controls} controls -> {}", out.display());
    Ok(())
}

fn cmd_featurize(
    cohort: &Path,
    patients: &Path,
    encounters: &Path,
    dict_path: Option<&Path>,
    set: u8,
    out: &Path,
) -> Result<(), CliError> {
    let file: CohortFile = read_json(cohort)?;
    let dataset = load_dataset(patients, encounters)?;
    let dictionary = match dict_path {
        Some(p) => FeatureDictionary::load(p)
            .map_err(|e| fail(EXIT_CONFIG, format!("{}: {e}", p.display())))?,
        None => default_dictionary(),
    };
    let design = build_design_matrix::<f64>(&file.assignments, &dataset, &dictionary, set)?;
    design.save_csv(out)?;
    let mut builder = ManifestBuilder::new("featurize");
    builder
        .input("cohort", cohort)
        .input("patients", patients)
        .input("encounters", encounters)
        .output("design", out);
    if let Some(p) = dict_path {
        builder.input("dict", p);
    }
    builder.write(out)?;
    println!(
        "featurize: set {set}, {} rows x {} columns -> {}",
        design.n_rows(),
        design.n_cols(),
        out.display()
    );
    Ok(())
}

fn cmd_cv(
    design_path: &Path,
    selector: Selector,
    folds: usize,
    seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    if folds < 2 {
        return Err(fail(EXIT_CONFIG, format!("--folds must be at least 2, got {folds}")));
    }
    let design = DesignMatrix::load_csv(design_path)?;
    let report = cross_validate(&design, selector, folds, seed, &FitOptions::default())?;
    std::fs::write(out, report.to_json() + "\n")?;
    ManifestBuilder::new("cv")
        .input("design", design_path)
        .output("report", out)
        .seed(seed)
        .write(out)?;
    println!(
        "cv: {} folds, auc {:.3} +/- {:.3} -> {}",
        report.folds,
        report.auc_mean,
        report.auc_std,
        out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_report(
    forward: &[PathBuf],
    backward: &[PathBuf],
    cohort_path: &Path,
    out_dir: &Path,
    alpha: f64,
    min_folds: usize,
    beta_magnitude: f64,
) -> Result<(), CliError> {
    if forward.len() != backward.len() {
        return Err(fail(
            EXIT_CONFIG,
            format!(
                "--forward has {} reports but --backward has {}",
                forward.len(),
                backward.len()
            ),
        ));
    }
    let cohort: CohortFile = read_json(cohort_path)?;
    let cohort_ids: BTreeSet<&str> =
        cohort.assignments.iter().map(|a| a.patient_id.as_str()).collect();

    let mut reports = Vec::with_capacity(forward.len());
    for (i, (f, b)) in forward.iter().zip(backward).enumerate() {
        let fwd: CvReport = read_json(f)?;
        let bwd: CvReport = read_json(b)?;
        for (path, report) in [(f, &fwd), (b, &bwd)] {
            let ids: BTreeSet<&str> =
                report.pooled_scores.iter().map(|p| p.patient_id.as_str()).collect();
            if ids != cohort_ids {
                return Err(fail(
                    EXIT_MISALIGNED,
                    format!("{} was not computed on cohort {}", path.display(), cohort_path.display()),
                ));
            }
        }
        reports.push(FeatureSetReports {
            feature_set: u8::try_from(i + 1).expect("few feature sets"),
            forward: fwd,
            backward: bwd,
        });
    }

    let figures = emit_figure_data(&reports)?;
    std::fs::create_dir_all(out_dir)?;
    let write = |name: &str, rows: &dyn Fn(&mut dyn std::io::Write) -> Result<(), csv::Error>| -> Result<PathBuf, CliError> {
        let path = out_dir.join(name);
        let mut file = std::io::BufWriter::new(std::fs::File::create(&path)?);
        rows(&mut file)?;
        Ok(path)
    };
    use cohortrisk_core::metrics::figures::write_rows;
    write("fig2_auc.csv", &|w| write_rows(&figures.auc_summary, w))?;
    write("fig3_counts.csv", &|w| write_rows(&figures.selection_counts, w))?;
    write("fig4_pairs.csv", &|w| write_rows(&figures.case_pairs, w))?;
    write("fig5_kde.csv", &|w| write_rows(&figures.control_kde, w))?;
    write("fig6_box.csv", &|w| write_rows(&figures.box_stats, w))?;
    write("fig7_roc.csv", &|w| write_rows(&figures.roc_points, w))?;
    write("fig7_sweep.csv", &|w| write_rows(&figures.sweeps, w))?;
    write("table3_intersection.csv", &|w| write_rows(&figures.intersections, w))?;

    // Stability table from the last (most complete) forward report.
    let last = reports.last().expect("validated nonempty");
    let stability = coefficient_stability(
        &last.forward.per_fold,
        &last.forward.feature_counts,
        last.forward.case_total(),
        last.forward.control_total(),
        min_folds,
        beta_magnitude,
    );
    let stability_path = out_dir.join("stability_table.csv");
    stability.write_csv(
        std::io::BufWriter::new(std::fs::File::create(&stability_path)?),
        Some(alpha),
    )?;

    let mut builder = ManifestBuilder::new("report");
    builder.input("cohort", cohort_path);
    for (i, p) in forward.iter().enumerate() {
        builder.input(&format!("forward_fs{}", i + 1), p);
    }
    for (i, p) in backward.iter().enumerate() {
        builder.input(&format!("backward_fs{}", i + 1), p);
    }
    for name in [
        "fig2_auc.csv",
        "fig3_counts.csv",
        "fig4_pairs.csv",
        "fig5_kde.csv",
        "fig6_box.csv",
        "fig7_roc.csv",
        "fig7_sweep.csv",
        "table3_intersection.csv",
        "stability_table.csv",
    ] {
        builder.output(name, &out_dir.join(name));
    }
    builder.write(out_dir)?;
    println!(
        "report: {} feature sets, {} stability rows -> {}",
        reports.len(),
        stability.rows.len(),
        out_dir.display()
    );
    Ok(())
}
