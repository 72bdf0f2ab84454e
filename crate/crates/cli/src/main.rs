//! `sslda`: fit, apply and benchmark semi-supervised LDA classifiers.
//!
//! Exit codes: 0 success, 1 input or configuration error, 2 fit failure,
//! 3 self-check failure.

mod model;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use sslda::bench::{self, ExperimentConfig, TableFormat};
use sslda::data::{self, BoundaryMode, Dataset, Delimiter, LabelColumn, LoadOptions, SplitPlan, ToySpec};
use sslda::semisup::{self, FitConfig};
use sslda::{lda, selfcheck, Class, Matrix, Method};

use model::{ModelFile, TraceSummary};

#[derive(Parser)]
#[command(
    name = "sslda",
    version,
    about = "Semi-supervised linear discriminant analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a classifier; rows with an empty, `?` or `NA` label are unlabeled.
    Fit(FitArgs),
    /// Apply a saved model; writes `row,class,posterior` for each row.
    Predict(PredictArgs),
    /// Draw a sample from the two-Gaussian toy problem.
    Toy(ToyArgs),
    /// Repeated cross-validation study from a configuration file.
    Cv(ExperimentArgs),
    /// Learning curves over unlabeled-set sizes from a configuration file.
    Curve(ExperimentArgs),
    /// Run the fast invariant suite.
    Selfcheck(SelfcheckArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Delimited data file.
    #[arg(long)]
    data: PathBuf,
    /// Label column: zero-based index, header name, or `last`.
    #[arg(long = "labels-col", default_value = "last")]
    labels_col: String,
    /// Field delimiter: `,`, `tab`, `whitespace` or a single character.
    #[arg(long, default_value = ",")]
    delimiter: String,
}

impl DataArgs {
    fn options(&self) -> anyhow::Result<LoadOptions> {
        Ok(LoadOptions {
            label_column: self.labels_col.parse::<LabelColumn>()?,
            delimiter: self.delimiter.parse::<Delimiter>()?,
            skip_columns: Vec::new(),
        })
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    /// lda, sllda, emlda, mclda or iclda.
    #[arg(long, default_value = "iclda")]
    method: Method,
    /// Extra unlabeled rows, same layout as --data; their labels are ignored.
    #[arg(long)]
    unlabeled: Option<PathBuf>,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
    /// Recorded in the model file; fitting itself is deterministic.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0.0)]
    ridge: f64,
    #[arg(long = "max-iter", default_value_t = 1000)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
}

#[derive(Args)]
struct PredictArgs {
    /// Model file written by `fit`.
    #[arg(long)]
    model: PathBuf,
    /// Same layout as the training data; label values are ignored.
    #[command(flatten)]
    data: DataArgs,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ToyArgs {
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// between-clusters or within-clusters.
    #[arg(long, default_value = "between-clusters")]
    mode: BoundaryMode,
    /// Keep labels for this many rows (both classes present); the rest are
    /// written unlabeled.
    #[arg(long = "n-labeled")]
    n_labeled: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment configuration (TOML); see configs/ for presets.
    #[arg(long)]
    config: PathBuf,
    /// Directory for relative dataset paths.
    #[arg(long = "data-dir", env = "SSLDA_DATA_DIR")]
    data_dir: Option<PathBuf>,
    /// Output directory; results are only printed when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    ridge: Option<f64>,
    #[arg(long = "max-iter")]
    max_iter: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Worker threads; 0 uses all cores.
    #[arg(long)]
    jobs: Option<usize>,
    /// Override any configuration key, e.g. `--set grid=[0,10,"max"]`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ExperimentArgs {
    fn load(&self) -> anyhow::Result<ExperimentConfig> {
        let mut overrides: Vec<(String, String)> = Vec::new();
        let flags = [
            ("repeats", self.repeats.map(|v| v.to_string())),
            ("folds", self.folds.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("ridge", self.ridge.map(float_literal)),
            ("max_iter", self.max_iter.map(|v| v.to_string())),
            ("tol", self.tol.map(float_literal)),
            ("jobs", self.jobs.map(|v| v.to_string())),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                overrides.push((k.into(), v));
            }
        }
        for s in &self.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| anyhow!("--set expects KEY=VALUE, got {s:?}"))?;
            overrides.push((k.trim().into(), v.trim().into()));
        }
        Ok(ExperimentConfig::from_file(
            &self.config,
            &overrides,
            self.data_dir.as_deref(),
        )?)
    }
}

/// TOML needs a decimal point or exponent to read a float.
fn float_literal(v: f64) -> String {
    let s = format!("{v:?}");
    if s.contains(['.', 'e', 'E']) || !v.is_finite() {
        s
    } else {
        format!("{s}.0")
    }
}

#[derive(Args)]
struct SelfcheckArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Inflate the named check's deviation (exercises the failure path).
    #[arg(long, hide = true)]
    corrupt: Option<String>,
}

enum Failure {
    Input(anyhow::Error),
    Fit(anyhow::Error),
    Check(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Input(e)
    }
}

impl From<sslda::Error> for Failure {
    fn from(e: sslda::Error) -> Self {
        Failure::Input(e.into())
    }
}

type CmdResult = Result<(), Failure>;

fn fit_error(e: sslda::Error) -> Failure {
    match e {
        sslda::Error::SingularCovariance | sslda::Error::EmptyClass => Failure::Fit(e.into()),
        other => Failure::Input(other.into()),
    }
}

/// Loads a data file; errors always name the file.
fn load_file(path: &Path, options: &LoadOptions) -> anyhow::Result<Dataset> {
    match data::load_delimited(path, options) {
        Ok(ds) => Ok(ds),
        Err(e @ sslda::Error::Io { .. }) => Err(e.into()),
        Err(e) => Err(anyhow::Error::new(e).context(format!("cannot load {}", path.display()))),
    }
}

fn load(args: &DataArgs) -> anyhow::Result<Dataset> {
    load_file(&args.data, &args.options()?)
}

fn write_output(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn stack(a: &Matrix, b: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(a.nrows() + b.nrows(), a.ncols());
    out.rows_mut(0, a.nrows()).copy_from(a);
    out.rows_mut(a.nrows(), b.nrows()).copy_from(b);
    out
}

fn cmd_fit(args: &FitArgs) -> CmdResult {
    let ds = load(&args.data)?;
    let (x, y, mut xu) = ds.partition_by_label();
    if let Some(path) = &args.unlabeled {
        let extra = load_file(path, &args.data.options()?)?;
        if extra.dim() != ds.dim() {
            return Err(Failure::Input(anyhow!(
                "{} has {} features, {} has {}",
                path.display(),
                extra.dim(),
                args.data.data.display(),
                ds.dim()
            )));
        }
        xu = stack(&xu, &extra.x);
    }
    let cfg = FitConfig {
        max_iter: args.max_iter,
        tol: args.tol,
        ridge: args.ridge,
        ..FitConfig::default()
    };
    cfg.validate()?;
    let (params, trace) = semisup::fit_method(args.method, &x, &y, &xu, &cfg).map_err(fit_error)?;
    let label_names = ds
        .label_names
        .as_ref()
        .filter(|n| n.len() == 2)
        .map(|n| [n[0].clone(), n[1].clone()]);
    let file = ModelFile {
        method: args.method,
        seed: args.seed,
        params,
        label_names,
        trace: trace.as_ref().map(TraceSummary::from),
    };
    fs::write(&args.out, file.render()).with_context(|| format!("cannot write {}", args.out.display()))?;

    eprintln!(
        "fitted {} on {} labeled and {} unlabeled rows ({} features)",
        args.method,
        x.nrows(),
        xu.nrows(),
        ds.dim()
    );
    if let Some(t) = &trace {
        eprintln!(
            "iterations {}, converged {}, final objective {}",
            t.iterations,
            t.converged,
            t.final_objective().map_or("n/a".into(), |o| format!("{o:.6}"))
        );
        if t.fell_back {
            eprintln!("warning: the fit collapsed onto one class; saved the supervised solution instead");
        }
    }
    Ok(())
}

fn cmd_predict(args: &PredictArgs) -> CmdResult {
    let text =
        fs::read_to_string(&args.model).with_context(|| format!("cannot read {}", args.model.display()))?;
    let model =
        ModelFile::parse(&text).with_context(|| format!("invalid model file {}", args.model.display()))?;
    let ds = load(&args.data)?;
    if ds.dim() != model.params.dim() {
        return Err(Failure::Input(anyhow!(
            "model has {} features but {} has {}",
            model.params.dim(),
            args.data.data.display(),
            ds.dim()
        )));
    }
    let post = lda::posterior(&model.params, &ds.x).map_err(fit_error)?;
    let classes = lda::predict(&model.params, &ds.x).map_err(fit_error)?;
    let mut out = String::from("row,class,posterior\n");
    for (i, (c, p)) in classes.iter().zip(&post).enumerate() {
        let name = match (&model.label_names, c) {
            (Some(n), Class::One) => n[0].clone(),
            (Some(n), Class::Two) => n[1].clone(),
            (None, c) => c.to_string(),
        };
        out.push_str(&format!("{i},{name},{p}\n"));
    }
    write_output(args.out.as_deref(), &out)?;
    Ok(())
}

fn cmd_toy(args: &ToyArgs) -> CmdResult {
    let ds = data::generate_gaussian_toy(args.n, &ToySpec::standard(args.mode), args.seed)?;
    let ds = match args.n_labeled {
        None => ds,
        Some(k) => {
            let plan = SplitPlan {
                n_labeled: k,
                seed: sslda::rng::derive_seed(args.seed, &[1]),
                fold_count: 1,
            };
            let (lab, mut unl) = data::split_labeled(&ds, &plan)?;
            unl.labels.iter_mut().for_each(|l| *l = None);
            let labels = lab.labels.iter().chain(&unl.labels).copied().collect();
            Dataset::new(ds.name.clone(), stack(&lab.x, &unl.x), labels)?
        }
    };
    let mut buf = Vec::new();
    data::write_delimited(&ds, &mut buf, Delimiter::Comma)?;
    write_output(
        args.out.as_deref(),
        &String::from_utf8(buf).expect("utf-8 output"),
    )?;
    Ok(())
}

fn create_out_dir(dir: Option<&Path>) -> anyhow::Result<()> {
    if let Some(d) = dir {
        fs::create_dir_all(d).with_context(|| format!("cannot create {}", d.display()))?;
    }
    Ok(())
}

fn report_warnings(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn cmd_cv(args: &ExperimentArgs) -> CmdResult {
    let cfg = args.load()?;
    let out = args.out.clone().or_else(|| cfg.out.as_ref().map(PathBuf::from));
    create_out_dir(out.as_deref())?;
    let result = bench::run_cross_validation(&cfg)?;
    report_warnings(&result.warnings);
    let markdown = bench::render_tables(&result, TableFormat::Markdown)?;
    if let Some(dir) = &out {
        let delimited = bench::render_tables(&result, TableFormat::Delimited)?;
        write_output(Some(&dir.join(format!("{}.csv", cfg.name))), &delimited)?;
        write_output(Some(&dir.join(format!("{}.md", cfg.name))), &markdown)?;
    }
    print!("{markdown}");
    Ok(())
}

fn cmd_curve(args: &ExperimentArgs) -> CmdResult {
    let cfg = args.load()?;
    let out = args.out.clone().or_else(|| cfg.out.as_ref().map(PathBuf::from));
    create_out_dir(out.as_deref())?;
    let result = bench::run_learning_curve(&cfg)?;
    report_warnings(&result.warnings);
    let text = bench::render_curve(&result)?;
    match &out {
        Some(dir) => write_output(Some(&dir.join(format!("{}-curve.csv", cfg.name))), &text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_selfcheck(args: &SelfcheckArgs) -> CmdResult {
    if let Some(name) = &args.corrupt {
        if !selfcheck::CHECK_NAMES.contains(&name.as_str()) {
            return Err(Failure::Input(anyhow!(
                "unknown check {name:?}; expected one of {:?}",
                selfcheck::CHECK_NAMES
            )));
        }
    }
    let outcomes = selfcheck::run_checks(args.seed, args.corrupt.as_deref())?;
    let mut failed = Vec::new();
    for o in &outcomes {
        println!(
            "{} {:<16} worst {:.3e} (tolerance {:.0e}, {} instances)",
            if o.passed { "PASS" } else { "FAIL" },
            o.name,
            o.worst,
            o.tolerance,
            o.instances
        );
        if !o.passed {
            failed.push(o.name);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(failed.join(", ")))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Toy(a) => cmd_toy(a),
        Command::Cv(a) => cmd_cv(a),
        Command::Curve(a) => cmd_curve(a),
        Command::Selfcheck(a) => cmd_selfcheck(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Fit(e)) => {
            eprintln!("fit failed: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Check(names)) => {
            eprintln!("self-check failed: {names}");
            ExitCode::from(3)
        }
    }
}
