//! Command-line front end. Every command reads CSVs with a header row,
//! writes its reports under `--out`, and prints a short deterministic
//! summary to stdout. Exit codes: 0 success, 1 input problem, 2
//! numerical failure (a `diagnostics.txt` is left in the output
//! directory for the latter).

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rrglm::error::{Error, Result};
use rrglm::glm::{scale_factor, DataSet, Family};
use rrglm::io::{
    load_dataset, model_from_string, model_to_string, path_to_string, pcv_report_to_string,
    read_csv_matrix, write_csv_matrix, LoadedData, ModelFile, PathFile,
};
use rrglm::oracle::{
    finite_diff_gradcheck, matrix_approx_oracle, perturbation_check, von_neumann_check,
};
use rrglm::reduce::{extract_type1, extract_type2, progressive_reduce, CoolingSchedule};
use rrglm::solve::{fit_path, fit_rule, FitOptions};
use rrglm::textfmt::fmt_f64;
use rrglm::threshold::{apply_matrix, penalty_matrix, ThresholdRule};
use rrglm::tune::{lambda_grid, pcv};

#[derive(Parser)]
#[command(
    name = "rrglm",
    version,
    about = "Rank-constrained and singular-value-penalized vector GLMs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one model: a penalized rule or a rank constraint
    Fit(FitArgs),
    /// Fit a solution path over a geometric penalty grid
    Path(PathArgs),
    /// Fit a path, cross-validate the extracted subspaces, keep the best
    Tune(TuneArgs),
    /// Shrink the predictor space to a target dimension in stages
    Reduce(ReduceArgs),
    /// Extract supervised features from a fitted model
    Extract(ExtractArgs),
    /// Apply a fitted model to a new design
    Predict(PredictArgs),
    /// Run the built-in analytic verifiers
    #[command(hide = true)]
    Verify(VerifyArgs),
}

impl Command {
    fn out_dir(&self) -> Option<&Path> {
        match self {
            Command::Fit(a) => Some(&a.out.out),
            Command::Path(a) => Some(&a.out.out),
            Command::Tune(a) => Some(&a.path.out.out),
            Command::Reduce(a) => Some(&a.out.out),
            Command::Extract(a) => Some(&a.out.out),
            Command::Predict(a) => Some(&a.out.out),
            Command::Verify(_) => None,
        }
    }
}

#[derive(Args)]
struct DataArgs {
    /// Design CSV: header row, predictors only (no intercept column)
    #[arg(long, value_name = "F")]
    design: PathBuf,
    /// Response CSV: header row, one column per response
    #[arg(long, value_name = "F")]
    response: PathBuf,
    /// Response family: gaussian or bernoulli
    #[arg(long, value_name = "NAME")]
    family: String,
    /// Center and scale predictors to unit standard deviation
    #[arg(long)]
    standardize: bool,
    /// Do not prepend the all-ones intercept column
    #[arg(long)]
    no_intercept: bool,
}

impl DataArgs {
    fn load(&self) -> Result<LoadedData> {
        let family = Family::from_str(&self.family)?;
        load_dataset(
            &self.design,
            &self.response,
            family,
            !self.no_intercept,
            self.standardize,
        )
    }
}

#[derive(Args)]
struct OutArgs {
    /// Output directory (created if missing)
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct SolverArgs {
    /// Relative coefficient-change tolerance for stopping
    #[arg(long, value_name = "T", default_value_t = 1e-9)]
    tol: f64,
    /// Iteration cap per fit
    #[arg(long, value_name = "N", default_value_t = 5000)]
    max_iter: usize,
}

impl SolverArgs {
    fn options(&self) -> FitOptions {
        FitOptions {
            max_iter: self.max_iter,
            tol: self.tol,
            ..FitOptions::default()
        }
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Threshold rule spec, e.g. soft:lambda=0.5 or hardridge:lambda=1,eta=0.1
    #[arg(long, value_name = "SPEC", conflicts_with = "rank")]
    rule: Option<String>,
    /// Fit under a rank constraint instead of a penalty
    #[arg(long, value_name = "R")]
    rank: Option<usize>,
    /// Ridge level for the rank-constrained fit
    #[arg(long, value_name = "E", default_value_t = 0.0)]
    eta: f64,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct PathArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Rule template whose penalty level the grid sweeps
    #[arg(long, value_name = "SPEC")]
    rule: String,
    /// Grid size and smallest-to-largest penalty ratio, as L,ratio
    #[arg(long, value_name = "L,RATIO", default_value = "16,1e-3")]
    grid: String,
    /// Worker threads for independent path entries
    #[arg(long, value_name = "N", default_value_t = 1)]
    jobs: usize,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    path: PathArgs,
    /// Cross-validation folds
    #[arg(long, value_name = "K", default_value_t = 5)]
    folds: usize,
    /// Add the BIC dimension correction to fold deviances
    #[arg(long)]
    bic: bool,
    /// Seed for the fold shuffle
    #[arg(long, value_name = "S", default_value_t = 0)]
    seed: u64,
    /// Ridge level for the per-fold refits
    #[arg(long, value_name = "E", default_value_t = 0.0)]
    eta: f64,
}

#[derive(Args)]
struct ReduceArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Target predictor-space dimension
    #[arg(long, value_name = "R")]
    rank: usize,
    /// Ridge level for the stage fits
    #[arg(long, value_name = "E", default_value_t = 0.0)]
    eta: f64,
    /// Per-stage dimension decay factor in (0, 1)
    #[arg(long, value_name = "D", default_value_t = 0.7)]
    decay: f64,
    /// Iteration cap per stage
    #[arg(long, value_name = "N", default_value_t = 10)]
    inner_cap: usize,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct ExtractArgs {
    /// Design CSV in the model's original predictor coordinates
    #[arg(long, value_name = "F")]
    design: PathBuf,
    /// Response CSV matching the model's responses
    #[arg(long, value_name = "F")]
    response: PathBuf,
    /// Fitted model file written by fit or tune
    #[arg(long, value_name = "F")]
    model: PathBuf,
    /// Feature kind: type1, type1-scaled, or type2
    #[arg(long, value_name = "KIND", default_value = "type1")]
    kind: String,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct PredictArgs {
    /// Design CSV in the model's original predictor coordinates
    #[arg(long, value_name = "F")]
    design: PathBuf,
    /// Fitted model file written by fit or tune
    #[arg(long, value_name = "F")]
    model: PathBuf,
    /// Emit 0/1 labels by the 0.5 cut instead of probabilities
    #[arg(long)]
    labels: bool,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct VerifyArgs {
    /// Seed for the randomized suites
    #[arg(long, value_name = "S", default_value_t = 0)]
    seed: u64,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests leave through stdout with code
            // 0; everything else is a usage problem, exit code 1.
            let code = i32::from(e.use_stderr());
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Some(dir) = cli.command.out_dir() {
        if let Err(e) = fs::create_dir_all(dir) {
            eprintln!("cannot create output directory {}: {e}", dir.display());
            std::process::exit(1);
        }
    }
    if let Err(e) = run(&cli.command) {
        eprintln!("{e}");
        if matches!(e, Error::Numerical(_)) {
            if let Some(dir) = cli.command.out_dir() {
                write_diagnostics(dir, &e);
            }
        }
        std::process::exit(e.exit_code());
    }
}

fn write_diagnostics(dir: &Path, e: &Error) {
    let args: Vec<String> = std::env::args().collect();
    let body = format!("rrglm diagnostics\ncommand: {}\nerror: {e}\n", args.join(" "));
    let path = dir.join("diagnostics.txt");
    if fs::write(&path, body).is_ok() {
        eprintln!("diagnostics written to {}", path.display());
    }
}

fn run(command: &Command) -> Result<()> {
    match command {
        Command::Fit(args) => cmd_fit(args),
        Command::Path(args) => cmd_path(args),
        Command::Tune(args) => cmd_tune(args),
        Command::Reduce(args) => cmd_reduce(args),
        Command::Extract(args) => cmd_extract(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Verify(args) => cmd_verify(args),
    }
}

fn write_report(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_fit(args: &FitArgs) -> Result<()> {
    let loaded = args.data.load()?;
    let rule = match (&args.rule, args.rank) {
        (Some(spec), None) => ThresholdRule::from_str(spec)?,
        (None, Some(r)) => ThresholdRule::Quantile { r, eta: args.eta },
        _ => {
            return Err(Error::input(
                "give exactly one of --rule or --rank".to_string(),
            ))
        }
    };
    let estimate = fit_rule(&loaded.data, &rule, &args.solver.options())?;
    println!(
        "fit: rule {} rank {} objective {} iterations {} converged {} fixed_point_residual {}",
        rule.spec_string(),
        estimate.rank,
        fmt_f64(estimate.objective),
        estimate.iterations,
        estimate.converged,
        fmt_f64(estimate.fixed_point_residual)
    );
    let model = ModelFile {
        family: loaded.data.family(),
        intercept: loaded.data.has_intercept(),
        standardization: loaded.standardization,
        rule,
        estimate,
    };
    write_report(&args.out.out.join("model.txt"), &model_to_string(&model))
}

/// Parses `--grid L,ratio`.
fn parse_grid(spec: &str) -> Result<(usize, f64)> {
    let err = || Error::input(format!("bad grid spec '{spec}': expected L,ratio"));
    let (l, ratio) = spec.split_once(',').ok_or_else(err)?;
    let l: usize = l.trim().parse().map_err(|_| err())?;
    let ratio: f64 = ratio.trim().parse().map_err(|_| err())?;
    if l == 0 || !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::input(format!(
            "bad grid spec '{spec}': need L >= 1 and ratio in (0, 1]"
        )));
    }
    Ok((l, ratio))
}

fn fit_grid_path(args: &PathArgs, loaded: &LoadedData) -> Result<(Vec<ThresholdRule>, PathFile)> {
    let template = ThresholdRule::from_str(&args.rule)?;
    let (l, ratio) = parse_grid(&args.grid)?;
    let k0 = scale_factor(loaded.data.family(), loaded.data.x(), &template)?;
    let lambdas = lambda_grid(&loaded.data, l, ratio, k0)?;
    let rules: Vec<ThresholdRule> = lambdas
        .iter()
        .map(|&lambda| template.with_lambda(lambda))
        .collect::<Result<_>>()?;
    let path = fit_path(&loaded.data, &rules, &args.solver.options(), args.jobs)?;
    let file = PathFile {
        family: loaded.data.family(),
        intercept: loaded.data.has_intercept(),
        standardization: loaded.standardization.clone(),
        path,
    };
    Ok((rules, file))
}

fn print_path_summary(file: &PathFile) {
    for (i, entry) in file.path.entries.iter().enumerate() {
        match &entry.result {
            Ok(est) => println!(
                "entry {i}: rule {} rank {} objective {} converged {}",
                entry.rule.spec_string(),
                est.rank,
                fmt_f64(est.objective),
                est.converged
            ),
            Err(msg) => println!("entry {i}: rule {} error {msg}", entry.rule.spec_string()),
        }
    }
}

fn cmd_path(args: &PathArgs) -> Result<()> {
    let loaded = args.data.load()?;
    let (_, file) = fit_grid_path(args, &loaded)?;
    print_path_summary(&file);
    write_report(&args.out.out.join("path.txt"), &path_to_string(&file))
}

fn cmd_tune(args: &TuneArgs) -> Result<()> {
    let loaded = args.path.data.load()?;
    let (_, file) = fit_grid_path(&args.path, &loaded)?;
    let report = pcv(
        &loaded.data,
        &file.path,
        args.folds,
        args.eta,
        args.bic,
        args.seed,
    )?;
    let selected = report.selected;
    let candidate = &report.candidates[selected];
    println!(
        "tune: selected candidate {selected} rule {} rank {} score {}",
        candidate.rule.spec_string(),
        candidate.rank,
        fmt_f64(candidate.score)
    );
    write_report(
        &args.path.out.out.join("tune_report.txt"),
        &pcv_report_to_string(&report),
    )?;
    let entry = &file.path.entries[selected];
    match &entry.result {
        Ok(est) => {
            let model = ModelFile {
                family: loaded.data.family(),
                intercept: loaded.data.has_intercept(),
                standardization: loaded.standardization,
                rule: entry.rule.clone(),
                estimate: est.clone(),
            };
            write_report(
                &args.path.out.out.join("model.txt"),
                &model_to_string(&model),
            )
        }
        Err(msg) => Err(Error::numerical(format!(
            "every tuning candidate failed; the selected entry reported: {msg}"
        ))),
    }
}

fn cmd_reduce(args: &ReduceArgs) -> Result<()> {
    let loaded = args.data.load()?;
    let mut schedule = CoolingSchedule::geometric(loaded.data.p(), args.rank);
    schedule.decay = args.decay;
    schedule.inner_cap = args.inner_cap;
    let reduced = progressive_reduce(&loaded.data, &schedule, args.eta)?;
    for (i, stage) in reduced.stages.iter().enumerate() {
        println!(
            "stage {i}: width {} iterations {} objective {}",
            stage.width,
            stage.iterations,
            fmt_f64(stage.objective)
        );
    }
    let design_path = args.out.out.join("reduced_design.csv");
    write_csv_matrix(&design_path, "z", reduced.z.x_slope())?;
    println!("wrote {}", design_path.display());
    let transform_path = args.out.out.join("transform.csv");
    write_csv_matrix(&transform_path, "u", reduced.u.view())?;
    println!("wrote {}", transform_path.display());
    Ok(())
}

/// Rebuilds a dataset in a model's training coordinates: the recorded
/// standardization is replayed, never refit.
fn dataset_for_model(
    model: &ModelFile,
    design: &Path,
    response: &Path,
) -> Result<DataSet> {
    let (_, predictors) = read_csv_matrix(design)?;
    let (_, y) = read_csv_matrix(response)?;
    let predictors = match &model.standardization {
        Some(st) => st.apply(predictors.view())?,
        None => predictors,
    };
    DataSet::new(predictors, y, model.family, model.intercept)
}

fn read_model(path: &Path) -> Result<ModelFile> {
    let text = fs::read_to_string(path)?;
    model_from_string(&text)
}

fn cmd_extract(args: &ExtractArgs) -> Result<()> {
    let model = read_model(&args.model)?;
    let data = dataset_for_model(&model, &args.design, &args.response)?;
    let extraction = match args.kind.as_str() {
        "type1" => extract_type1(&model.estimate, &data, false)?,
        "type1-scaled" => extract_type1(&model.estimate, &data, true)?,
        "type2" => extract_type2(&model.estimate, &data)?,
        other => {
            return Err(Error::input(format!(
                "unknown feature kind '{other}' (expected type1, type1-scaled, or type2)"
            )))
        }
    };
    println!(
        "extract: kind {} features {}x{}",
        args.kind,
        extraction.z.nrows(),
        extraction.z.ncols()
    );
    let features_path = args.out.out.join("features.csv");
    write_csv_matrix(&features_path, "z", extraction.z.view())?;
    println!("wrote {}", features_path.display());
    let transform_path = args.out.out.join("feature_transform.csv");
    write_csv_matrix(&transform_path, "t", extraction.transform.view())?;
    println!("wrote {}", transform_path.display());
    Ok(())
}

fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let model = read_model(&args.model)?;
    let (_, predictors) = read_csv_matrix(&args.design)?;
    let predictors = match &model.standardization {
        Some(st) => st.apply(predictors.view())?,
        None => predictors,
    };
    let x = if model.intercept {
        let mut full = Array2::ones((predictors.nrows(), predictors.ncols() + 1));
        full.slice_mut(ndarray::s![.., 1..]).assign(&predictors);
        full
    } else {
        predictors
    };
    let eta = model.estimate.linear_predictor(x.view())?;
    let mu = eta.mapv(|t| model.family.mean(t));
    let out_path = args.out.out.join("predictions.csv");
    if args.labels {
        if model.family != Family::BernoulliLogit {
            return Err(Error::input(
                "--labels applies only to bernoulli models".to_string(),
            ));
        }
        let mut writer = csv::Writer::from_path(&out_path)?;
        let headers: Vec<String> = (1..=mu.ncols()).map(|j| format!("label{j}")).collect();
        writer.write_record(&headers)?;
        for row in mu.rows() {
            writer.write_record(row.iter().map(|&p| if p > 0.5 { "1" } else { "0" }))?;
        }
        writer.flush()?;
    } else {
        write_csv_matrix(&out_path, "mu", mu.view())?;
    }
    println!(
        "predict: {} rows, {} responses{}",
        mu.nrows(),
        mu.ncols(),
        if args.labels { ", labels by 0.5 cut" } else { "" }
    );
    println!("wrote {}", out_path.display());
    Ok(())
}

/// Runs the analytic verifiers on seeded inputs and prints one line per
/// suite. Any failure exits with the numerical error code.
fn cmd_verify(args: &VerifyArgs) -> Result<()> {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    let mut failures = 0usize;
    let mut report = |name: &str, pass: bool, gap: f64, witness: &str| {
        let status = if pass { "PASS" } else { "FAIL" };
        println!("{status} {name}: worst gap {} ({witness})", fmt_f64(gap));
        if !pass {
            failures += 1;
        }
    };

    let seeded = |seed: u64, rows: usize, cols: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((rows, cols), move || rng.gen_range(-2.0..2.0))
    };

    // Closed-form thresholding against the grid minimizer.
    let rules = [
        ThresholdRule::Soft { lambda: 0.6 },
        ThresholdRule::Hard { lambda: 0.9 },
        ThresholdRule::Ridge { lambda: 0.5 },
        ThresholdRule::HardRidge { lambda: 0.7, eta: 0.2 },
        ThresholdRule::Berhu { lambda: 0.6, m: 1.0 },
    ];
    let mut worst = 0.0f64;
    let mut witness = String::new();
    for (k, rule) in rules.iter().enumerate() {
        for trial in 0..10u64 {
            let y = seeded(args.seed ^ (1000 + 31 * k as u64 + trial), 4, 3);
            let b = apply_matrix(rule, y.view())?;
            let attained =
                0.5 * rrglm::linalg::frob((&y - &b).view()).powi(2)
                    + penalty_matrix(rule, b.view())?;
            let grid = matrix_approx_oracle(y.view(), rule, 1e-4)?;
            let gap = (attained - grid.value).abs();
            if gap > worst {
                worst = gap;
                witness = format!("rule {} trial {trial}", rule.spec_string());
            }
        }
    }
    report("matrix_approx", worst <= 1e-4, worst, &witness);

    let mut worst = 0.0f64;
    let mut witness = String::from("none");
    for trial in 0..1000u64 {
        let a = seeded(args.seed ^ (2000 + 2 * trial), 4, 4);
        let b = seeded(args.seed ^ (2001 + 2 * trial), 4, 4);
        let v = von_neumann_check(a.view(), b.view())?;
        if v.gap > worst {
            worst = v.gap;
            witness = format!("pair {trial}");
        }
    }
    report("von_neumann", worst <= 1e-10, worst, &witness);

    let mut worst = 0.0f64;
    let mut witness = String::from("none");
    for (k, rule) in rules.iter().filter(|r| r.is_convex()).enumerate() {
        let y = seeded(args.seed ^ (3000 + k as u64), 4, 3);
        let v = perturbation_check(y.view(), rule, 200, args.seed ^ (3100 + k as u64))?;
        if v.gap > worst {
            worst = v.gap;
            witness = format!("rule {}: {}", rule.spec_string(), v.witness);
        }
    }
    report("perturbation", worst <= 1e-10, worst, &witness);

    let mut worst = 0.0f64;
    let mut witness = String::new();
    for (k, family) in [Family::Gaussian, Family::BernoulliLogit].iter().enumerate() {
        let x = seeded(args.seed ^ (4000 + k as u64), 30, 5);
        let y = match family {
            Family::Gaussian => seeded(args.seed ^ (4100 + k as u64), 30, 4),
            Family::BernoulliLogit => seeded(args.seed ^ (4100 + k as u64), 30, 4)
                .mapv(|v| if v > 0.0 { 1.0 } else { 0.0 }),
        };
        let data = DataSet::new(x, y, *family, true)?;
        let b = seeded(args.seed ^ (4200 + k as u64), 6, 4).mapv(|v| 0.3 * v);
        let v = finite_diff_gradcheck(&data, b.view(), 1e-5)?;
        if v.gap > worst {
            worst = v.gap;
            witness = format!("family {family}: {}", v.witness);
        }
    }
    report("gradcheck", worst <= 1e-5, worst, &witness);

    drop(report);
    if failures > 0 {
        let mut msg = String::new();
        let _ = write!(msg, "{failures} verifier suite(s) failed");
        return Err(Error::numerical(msg));
    }
    Ok(())
}
