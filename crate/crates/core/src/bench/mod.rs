//! Experiment harness: repeated cross-validation and learning curves over a
//! set of classifiers, with per-repeat seeds derived from one root seed.
//!
//! Repeats are independent work units and run in parallel; results are
//! collected in repeat order, so parallel and sequential runs agree bit for
//! bit.

mod config;
mod report;
mod stats;

use std::collections::BTreeMap;

use rayon::prelude::*;

pub use config::{set_override, Classifier, DatasetSource, ExperimentConfig, GridPoint, LabeledRule};
pub use report::{parse_curve_delimited, parse_delimited, render_curve, render_tables, TableFormat};
pub use stats::{error_rate, paired_t_test, test_loss, TTest};

use crate::data::{self, Dataset, SplitPlan};
use crate::error::{Error, Result};
use crate::lda::{ModelParams, SoftLabels};
use crate::numkit::Matrix;
use crate::rng;
use crate::semisup::{self, FitConfig};

/// Share of failed fits above which a classifier's row is marked unreliable.
pub const MAX_FAILED_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    Error,
    Loss,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::Error, Metric::Loss];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Error => "error",
            Metric::Loss => "loss",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "error" => Ok(Metric::Error),
            "loss" => Ok(Metric::Loss),
            _ => Err(Error::InvalidInput(format!("unknown metric {s:?}"))),
        }
    }
}

/// One `(dataset, classifier, metric)` cell of a cross-validation study.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub dataset: String,
    pub classifier: Classifier,
    pub metric: Metric,
    /// Mean over repeats of the per-repeat fold average.
    pub mean: f64,
    /// Sample standard deviation over repeats (0 for one repeat).
    pub std: f64,
    pub repeats: usize,
    /// Significantly better than supervised LDA (paired t-test over repeats).
    pub beats_supervised: Option<bool>,
    /// Lowest mean among the semi-supervised classifiers and significantly
    /// better than each of the others.
    pub best_semisupervised: Option<bool>,
    pub failed_fits: usize,
    pub total_fits: usize,
}

impl BenchRow {
    pub fn unreliable(&self) -> bool {
        self.total_fits > 0 && self.failed_fits as f64 > MAX_FAILED_FRACTION * self.total_fits as f64
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchResult {
    pub rows: Vec<BenchRow>,
    pub warnings: Vec<String>,
}

impl BenchResult {
    pub fn row(&self, dataset: &str, classifier: Classifier, metric: Metric) -> Option<&BenchRow> {
        self.rows
            .iter()
            .find(|r| r.dataset == dataset && r.classifier == classifier && r.metric == metric)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub dataset: String,
    pub classifier: Classifier,
    pub n_unlabeled: usize,
    pub metric: Metric,
    pub mean: f64,
    /// `std / √repeats`; 0 for a single repeat.
    pub stderr: f64,
    pub repeats: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CurveResult {
    pub rows: Vec<CurveRow>,
    /// Skipped grid points and other non-fatal notes.
    pub warnings: Vec<String>,
}

impl CurveResult {
    pub fn point(
        &self,
        dataset: &str,
        classifier: Classifier,
        n_unlabeled: usize,
        metric: Metric,
    ) -> Option<&CurveRow> {
        self.rows.iter().find(|r| {
            r.dataset == dataset
                && r.classifier == classifier
                && r.n_unlabeled == n_unlabeled
                && r.metric == metric
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct Evaluation {
    error: f64,
    loss: f64,
}

#[derive(Debug, Clone, Copy)]
struct Outcome {
    eval: Option<Evaluation>,
    failed: bool,
}

fn stack_rows(a: &Matrix, b: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(a.nrows() + b.nrows(), a.ncols());
    out.rows_mut(0, a.nrows()).copy_from(a);
    out.rows_mut(a.nrows(), b.nrows()).copy_from(b);
    out
}

/// Fits `classifier` on labeled `(x, y)` plus unlabeled `xu`; the oracle
/// also sees `yu_true`. Semi-supervised failures fall back to the
/// supervised fit and are reported as failed.
fn fit_classifier(
    classifier: Classifier,
    x: &Matrix,
    y: &SoftLabels,
    xu: &Matrix,
    yu_true: &SoftLabels,
    cfg: &FitConfig,
) -> (Option<ModelParams>, bool) {
    match classifier {
        Classifier::Lda => (semisup::fit_supervised(x, y, cfg).ok(), false),
        Classifier::LdaOracle => {
            let xe = stack_rows(x, xu);
            (semisup::fit_supervised(&xe, &y.concat(yu_true), cfg).ok(), false)
        }
        _ => match semisup::fit_method(classifier.method(), x, y, xu, cfg) {
            Ok((theta, trace)) => {
                let fell_back = trace.is_some_and(|t| t.fell_back);
                (Some(theta), fell_back)
            }
            Err(_) => (semisup::fit_supervised(x, y, cfg).ok(), true),
        },
    }
}

fn evaluate(theta: &ModelParams, test: &Dataset) -> Option<Evaluation> {
    let truth = test.classes().ok()?;
    let pred = crate::lda::predict(theta, &test.x).ok()?;
    let error = error_rate(&pred, &truth).ok()?;
    let loss = test_loss(theta, test).ok()?;
    loss.is_finite().then_some(Evaluation { error, loss })
}

fn run_all(
    classifiers: &[Classifier],
    labeled: &Dataset,
    unlabeled: &Dataset,
    test: &Dataset,
    cfg: &FitConfig,
) -> Result<Vec<Outcome>> {
    let y = labeled.hard_labels()?;
    let yu = unlabeled.hard_labels()?;
    Ok(classifiers
        .iter()
        .map(|&c| {
            let (theta, failed) = fit_classifier(c, &labeled.x, &y, &unlabeled.x, &yu, cfg);
            let eval = theta.as_ref().and_then(|t| evaluate(t, test));
            Outcome {
                eval,
                failed: failed || eval.is_none(),
            }
        })
        .collect())
}

fn in_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if jobs == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn load_datasets(cfg: &ExperimentConfig) -> Result<Vec<Dataset>> {
    cfg.datasets
        .iter()
        .map(|src| {
            let ds = src.load(cfg.seed)?;
            Ok(if cfg.standardize { ds.standardized() } else { ds })
        })
        .collect()
}

/// `(beats_supervised, best_semisupervised)` per classifier.
type Flags = BTreeMap<Classifier, (Option<bool>, Option<bool>)>;

/// Paired-test flags for each classifier over per-repeat values (lower is better).
fn significance_flags(values: &BTreeMap<Classifier, Vec<f64>>, alpha: f64) -> Result<Flags> {
    let mut flags: Flags = values.keys().map(|&c| (c, (None, None))).collect();
    let repeats = values.values().next().map_or(0, Vec::len);
    if repeats < 2 {
        return Ok(flags);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let better = |a: &[f64], b: &[f64]| -> Result<bool> {
        Ok(mean(a) < mean(b) && paired_t_test(a, b, alpha)?.significant)
    };
    let semi: Vec<Classifier> = values.keys().copied().filter(|c| c.is_semisupervised()).collect();
    for &c in &semi {
        if let Some(base) = values.get(&Classifier::Lda) {
            flags.get_mut(&c).unwrap().0 = Some(better(&values[&c], base)?);
        }
    }
    if semi.len() >= 2 {
        let best = *semi
            .iter()
            .min_by(|a, b| mean(&values[a]).total_cmp(&mean(&values[b])))
            .unwrap();
        let mut is_best = true;
        for &other in semi.iter().filter(|&&o| o != best) {
            is_best &= better(&values[&best], &values[&other])?;
        }
        for &c in &semi {
            flags.get_mut(&c).unwrap().1 = Some(c == best && is_best);
        }
    }
    Ok(flags)
}

/// Repeated k-fold cross-validation. In each repeat and fold, the training
/// folds are split into a labeled part (`n_labeled` objects, both classes
/// present) and an unlabeled part; every classifier is fit and scored on the
/// held-out fold. Fold scores are averaged within a repeat, then summarized
/// over repeats.
pub fn run_cross_validation(cfg: &ExperimentConfig) -> Result<BenchResult> {
    cfg.validate()?;
    let datasets = load_datasets(cfg)?;
    let mut result = BenchResult::default();
    for ds in &datasets {
        if ds.n_rows() < cfg.folds {
            return Err(Error::Config(format!(
                "{}: {} rows cannot form {} folds",
                ds.name,
                ds.n_rows(),
                cfg.folds
            )));
        }
        let min_train = ds.n_rows() - ds.n_rows().div_ceil(cfg.folds);
        let wanted = cfg.n_labeled.size(ds.dim());
        let n_labeled = wanted.min(min_train.saturating_sub(1));
        if n_labeled < 2 {
            return Err(Error::Config(format!(
                "{}: training folds too small to label two objects",
                ds.name
            )));
        }
        if n_labeled < wanted {
            result.warnings.push(format!(
                "{}: labeled size reduced from {wanted} to {n_labeled} to leave unlabeled objects",
                ds.name
            ));
        }
        let ds_tag = rng::tag_str(&ds.name);

        let per_repeat: Vec<Vec<Vec<Outcome>>> = in_pool(cfg.jobs, || {
            (0..cfg.repeats)
                .into_par_iter()
                .map(|r| -> Result<Vec<Vec<Outcome>>> {
                    let seed = rng::derive_seed(cfg.seed, &[ds_tag, r as u64]);
                    let folds = data::kfold(ds.n_rows(), cfg.folds, rng::derive_seed(seed, &[0]))?;
                    folds
                        .iter()
                        .enumerate()
                        .map(|(f, (train_idx, val_idx))| {
                            let train = ds.subset(train_idx);
                            let test = ds.subset(val_idx);
                            let plan = SplitPlan {
                                n_labeled,
                                seed: rng::derive_seed(seed, &[1, f as u64]),
                                fold_count: cfg.folds,
                            };
                            let (labeled, unlabeled) = data::split_labeled(&train, &plan)?;
                            run_all(&cfg.classifiers, &labeled, &unlabeled, &test, &cfg.fit)
                        })
                        .collect()
                })
                .collect::<Result<Vec<_>>>()
        })??;

        for metric in Metric::ALL {
            let mut values: BTreeMap<Classifier, Vec<f64>> = BTreeMap::new();
            let mut failures: BTreeMap<Classifier, (usize, usize)> = BTreeMap::new();
            for (ci, &c) in cfg.classifiers.iter().enumerate() {
                let mut repeat_values = Vec::with_capacity(cfg.repeats);
                let (mut failed, mut total) = (0, 0);
                for folds in &per_repeat {
                    let scores: Vec<f64> = folds
                        .iter()
                        .filter_map(|outcomes| outcomes[ci].eval)
                        .map(|e| match metric {
                            Metric::Error => e.error,
                            Metric::Loss => e.loss,
                        })
                        .collect();
                    failed += folds.iter().filter(|o| o[ci].failed).count();
                    total += folds.len();
                    if scores.is_empty() {
                        return Err(Error::InvalidInput(format!(
                            "{}: {c} produced no usable fit in a repeat",
                            ds.name
                        )));
                    }
                    repeat_values.push(scores.iter().sum::<f64>() / scores.len() as f64);
                }
                values.insert(c, repeat_values);
                failures.insert(c, (failed, total));
            }
            let flags = significance_flags(&values, cfg.alpha)?;
            for &c in &cfg.classifiers {
                let (mean, std) = stats::mean_std(&values[&c]);
                let (beats_supervised, best_semisupervised) = flags[&c];
                let (failed_fits, total_fits) = failures[&c];
                result.rows.push(BenchRow {
                    dataset: ds.name.clone(),
                    classifier: c,
                    metric,
                    mean,
                    std,
                    repeats: cfg.repeats,
                    beats_supervised,
                    best_semisupervised,
                    failed_fits,
                    total_fits,
                });
            }
        }
        for c in &cfg.classifiers {
            if let Some(row) = result.row(&ds.name, *c, Metric::Error) {
                if row.unreliable() {
                    result.warnings.push(format!(
                        "{}: {c} failed {} of {} fits",
                        ds.name, row.failed_fits, row.total_fits
                    ));
                }
            }
        }
    }
    Ok(result)
}

/// Per-repeat data for a learning curve: labeled set, unlabeled candidates in
/// the order they are added, and the test set.
struct CurveDraw {
    labeled: Dataset,
    pool: Dataset,
    test: Dataset,
}

fn curve_draw(src: &DatasetSource, ds: &Dataset, cfg: &ExperimentConfig, seed: u64) -> Result<CurveDraw> {
    let n_labeled = cfg.n_labeled.size(ds.dim());
    match src {
        DatasetSource::Toy { spec, n, n_test, .. } => {
            let mut pool = data::generate_gaussian_toy(*n, spec, rng::derive_seed(seed, &[0]))?;
            let mut test = data::generate_gaussian_toy(*n_test, spec, rng::derive_seed(seed, &[1]))?;
            if cfg.standardize {
                pool = pool.standardized();
                test = test.standardized();
            }
            if n_labeled >= pool.n_rows() {
                return Err(Error::Config(format!(
                    "{}: labeled size exceeds the toy sample",
                    src.name()
                )));
            }
            let (lab, rest) =
                data::split_indices_shuffled(&pool.classes()?, n_labeled, rng::derive_seed(seed, &[2]))?;
            Ok(CurveDraw {
                labeled: pool.subset(&lab),
                pool: pool.subset(&rest),
                test,
            })
        }
        DatasetSource::File { .. } => {
            let n_test = ((cfg.test_fraction * ds.n_rows() as f64).round() as usize).max(1);
            if n_labeled + n_test >= ds.n_rows() {
                return Err(Error::Config(format!(
                    "{}: {} rows cannot hold {n_labeled} labeled and {n_test} test objects",
                    ds.name,
                    ds.n_rows()
                )));
            }
            let (lab, rest) =
                data::split_indices_shuffled(&ds.classes()?, n_labeled, rng::derive_seed(seed, &[2]))?;
            let split = rest.len() - n_test;
            Ok(CurveDraw {
                labeled: ds.subset(&lab),
                pool: ds.subset(&rest[..split]),
                test: ds.subset(&rest[split..]),
            })
        }
    }
}

/// Learning curves over the unlabeled-size grid. Within a repeat the labeled
/// set and test set are fixed and the unlabeled sets are nested prefixes of
/// one random ordering.
pub fn run_learning_curve(cfg: &ExperimentConfig) -> Result<CurveResult> {
    cfg.validate()?;
    let datasets = load_datasets(cfg)?;
    let mut result = CurveResult::default();
    for (src, ds) in cfg.datasets.iter().zip(&datasets) {
        let ds_tag = rng::tag_str(&ds.name);
        let draws_available = curve_draw(src, ds, cfg, rng::derive_seed(cfg.seed, &[ds_tag, 0]))?
            .pool
            .n_rows();
        let mut sizes: Vec<usize> = Vec::new();
        for g in &cfg.grid {
            let size = match g {
                GridPoint::Size(s) => *s,
                GridPoint::Max => draws_available,
            };
            if size > draws_available {
                result.warnings.push(format!(
                    "{}: skipped grid point {size} (only {draws_available} unlabeled objects available)",
                    ds.name
                ));
            } else if !sizes.contains(&size) {
                sizes.push(size);
            }
        }

        // [repeat][grid][classifier]
        let per_repeat: Vec<Vec<Vec<Outcome>>> = in_pool(cfg.jobs, || {
            (0..cfg.repeats)
                .into_par_iter()
                .map(|r| -> Result<Vec<Vec<Outcome>>> {
                    let seed = rng::derive_seed(cfg.seed, &[ds_tag, r as u64]);
                    let draw = curve_draw(src, ds, cfg, seed)?;
                    sizes
                        .iter()
                        .map(|&u| {
                            let idx: Vec<usize> = (0..u).collect();
                            let unlabeled = draw.pool.subset(&idx);
                            run_all(&cfg.classifiers, &draw.labeled, &unlabeled, &draw.test, &cfg.fit)
                        })
                        .collect()
                })
                .collect::<Result<Vec<_>>>()
        })??;

        for (gi, &u) in sizes.iter().enumerate() {
            for (ci, &c) in cfg.classifiers.iter().enumerate() {
                let failed = per_repeat.iter().filter(|rep| rep[gi][ci].failed).count();
                if failed > 0 {
                    result
                        .warnings
                        .push(format!("{}: {c} failed {failed} fits at {u} unlabeled", ds.name));
                }
                for metric in Metric::ALL {
                    let values: Vec<f64> = per_repeat
                        .iter()
                        .filter_map(|rep| rep[gi][ci].eval)
                        .map(|e| match metric {
                            Metric::Error => e.error,
                            Metric::Loss => e.loss,
                        })
                        .collect();
                    if values.is_empty() {
                        result
                            .warnings
                            .push(format!("{}: {c} has no usable fits at {u} unlabeled", ds.name));
                        continue;
                    }
                    let (mean, std) = stats::mean_std(&values);
                    result.rows.push(CurveRow {
                        dataset: ds.name.clone(),
                        classifier: c,
                        n_unlabeled: u,
                        metric,
                        mean,
                        stderr: std / (values.len() as f64).sqrt(),
                        repeats: values.len(),
                    });
                }
            }
        }
    }
    Ok(result)
}
