//! Experiment configuration, read from TOML key-value files.
//!
//! Every top-level key can be overridden with [`set_override`] before the
//! table is turned into an [`ExperimentConfig`]; the command-line flags map
//! onto those keys.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use crate::data::{self, BoundaryMode, Dataset, Delimiter, LabelColumn, LoadOptions, ToySpec};
use crate::error::{Error, Result};
use crate::rng;
use crate::semisup::{FitConfig, Method};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Classifier {
    Lda,
    LdaOracle,
    Mclda,
    Emlda,
    Sllda,
    Iclda,
}

impl Classifier {
    /// Column order of the result tables.
    pub const ALL: [Classifier; 6] = [
        Classifier::Lda,
        Classifier::LdaOracle,
        Classifier::Mclda,
        Classifier::Emlda,
        Classifier::Sllda,
        Classifier::Iclda,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Classifier::Lda => "LDA",
            Classifier::LdaOracle => "LDAoracle",
            Classifier::Mclda => "MCLDA",
            Classifier::Emlda => "EMLDA",
            Classifier::Sllda => "SLLDA",
            Classifier::Iclda => "ICLDA",
        }
    }

    /// The fitter used; the oracle is a supervised fit on all labels.
    pub fn method(self) -> Method {
        match self {
            Classifier::Lda | Classifier::LdaOracle => Method::Supervised,
            Classifier::Mclda => Method::MomentConstrained,
            Classifier::Emlda => Method::Em,
            Classifier::Sllda => Method::SelfLearning,
            Classifier::Iclda => Method::ImplicitlyConstrained,
        }
    }

    pub fn is_semisupervised(self) -> bool {
        !matches!(self, Classifier::Lda | Classifier::LdaOracle)
    }
}

impl fmt::Display for Classifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Classifier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Classifier::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown classifier {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    /// Synthetic Gaussian data. `n` objects form the training pool; learning
    /// curves draw a separate test set of `n_test` objects per repeat.
    Toy {
        name: String,
        spec: ToySpec,
        n: usize,
        n_test: usize,
    },
    File {
        name: String,
        path: PathBuf,
        options: LoadOptions,
    },
}

impl DatasetSource {
    pub fn name(&self) -> &str {
        match self {
            DatasetSource::Toy { name, .. } | DatasetSource::File { name, .. } => name,
        }
    }

    /// The dataset itself; toy data is drawn with a seed derived from
    /// `root_seed` and the dataset name.
    pub fn load(&self, root_seed: u64) -> Result<Dataset> {
        match self {
            DatasetSource::Toy { name, spec, n, .. } => {
                let seed = rng::derive_seed(root_seed, &[rng::tag_str(name)]);
                let mut ds = data::generate_gaussian_toy(*n, spec, seed)?;
                ds.name = name.clone();
                Ok(ds)
            }
            DatasetSource::File { name, path, options } => {
                let mut ds = data::load_delimited(path, options)?;
                if !ds.is_fully_labeled() {
                    return Err(Error::Config(format!(
                        "{}: experiment datasets must be fully labeled",
                        path.display()
                    )));
                }
                ds.name = name.clone();
                Ok(ds)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabeledRule {
    Fixed(usize),
    /// `max(2d, 10)`.
    Auto,
}

impl LabeledRule {
    pub fn size(self, dim: usize) -> usize {
        match self {
            LabeledRule::Fixed(n) => n,
            LabeledRule::Auto => data::default_labeled_size(dim),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridPoint {
    Size(usize),
    /// All unlabeled objects available to the repeat.
    Max,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub datasets: Vec<DatasetSource>,
    pub classifiers: Vec<Classifier>,
    pub repeats: usize,
    pub folds: usize,
    pub n_labeled: LabeledRule,
    /// Unlabeled sizes for learning curves.
    pub grid: Vec<GridPoint>,
    /// Fraction of a file dataset held out as the learning-curve test set.
    pub test_fraction: f64,
    pub seed: u64,
    /// Worker threads; 0 uses all cores.
    pub jobs: usize,
    pub alpha: f64,
    pub standardize: bool,
    pub fit: FitConfig,
    pub out: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "experiment".into(),
            datasets: Vec::new(),
            classifiers: Classifier::ALL.to_vec(),
            repeats: 20,
            folds: 10,
            n_labeled: LabeledRule::Auto,
            grid: [0, 10, 20, 50, 100, 200, 500]
                .into_iter()
                .map(GridPoint::Size)
                .chain([GridPoint::Max])
                .collect(),
            test_fraction: 0.25,
            seed: 1,
            jobs: 0,
            alpha: 0.05,
            standardize: false,
            fit: FitConfig::default(),
            out: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repeats < 1 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        if self.classifiers.is_empty() {
            return Err(Error::Config("classifier set is empty".into()));
        }
        if self.datasets.is_empty() {
            return Err(Error::Config("no datasets configured".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config("folds must be at least 2".into()));
        }
        if self.grid.is_empty() {
            return Err(Error::Config("unlabeled-size grid is empty".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config("test_fraction must be in (0, 1)".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config("alpha must be in (0, 1)".into()));
        }
        if let LabeledRule::Fixed(n) = self.n_labeled {
            if n < 2 {
                return Err(Error::Config("n_labeled must be at least 2".into()));
            }
        }
        self.fit.validate()
    }

    /// Reads a configuration file, applying `overrides` (`key=value`) first.
    /// Relative dataset paths resolve against `data_dir` when given.
    pub fn from_file(path: &Path, overrides: &[(String, String)], data_dir: Option<&Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut table: toml::Table = text
            .parse()
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        for (k, v) in overrides {
            set_override(&mut table, k, v)?;
        }
        Self::from_table(table, data_dir)
    }

    pub fn from_table(table: toml::Table, data_dir: Option<&Path>) -> Result<Self> {
        let raw: RawConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let cfg = raw.into_config(data_dir)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Sets top-level `key` to `value`, parsed as a TOML value when possible and
/// as a string otherwise.
pub fn set_override(table: &mut toml::Table, key: &str, value: &str) -> Result<()> {
    if key.is_empty() || key == "datasets" {
        return Err(Error::Config(format!("cannot override key {key:?}")));
    }
    let parsed = format!("v = {value}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    table.insert(key.to_string(), parsed);
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum IntOrString {
    Int(u64),
    Str(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDataset {
    name: Option<String>,
    toy: Option<String>,
    n: Option<usize>,
    n_test: Option<usize>,
    path: Option<String>,
    label_col: Option<IntOrString>,
    delimiter: Option<String>,
    #[serde(default)]
    skip_cols: Vec<IntOrString>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    name: Option<String>,
    #[serde(default)]
    datasets: Vec<RawDataset>,
    classifiers: Option<Vec<String>>,
    repeats: Option<usize>,
    folds: Option<usize>,
    n_labeled: Option<IntOrString>,
    grid: Option<Vec<IntOrString>>,
    test_fraction: Option<f64>,
    seed: Option<u64>,
    jobs: Option<usize>,
    alpha: Option<f64>,
    standardize: Option<bool>,
    max_iter: Option<usize>,
    tol: Option<f64>,
    step_init: Option<f64>,
    ridge: Option<f64>,
    data_dir: Option<String>,
    out: Option<String>,
}

fn column_ref(v: &IntOrString) -> Result<LabelColumn> {
    match v {
        IntOrString::Int(i) => Ok(LabelColumn::Index(*i as usize)),
        IntOrString::Str(s) => s.parse(),
    }
}

impl RawDataset {
    fn into_source(self, index: usize, data_dir: Option<&Path>) -> Result<DatasetSource> {
        match (self.toy, self.path) {
            (Some(mode), None) => {
                let mode: BoundaryMode = mode.parse()?;
                Ok(DatasetSource::Toy {
                    name: self.name.unwrap_or_else(|| format!("toy-{mode}")),
                    spec: ToySpec::standard(mode),
                    n: self.n.unwrap_or(1000),
                    n_test: self.n_test.unwrap_or(10_000),
                })
            }
            (None, Some(path)) => {
                let mut path = PathBuf::from(path);
                if path.is_relative() {
                    if let Some(dir) = data_dir {
                        path = dir.join(path);
                    }
                }
                let options = LoadOptions {
                    label_column: self
                        .label_col
                        .as_ref()
                        .map(column_ref)
                        .transpose()?
                        .unwrap_or(LabelColumn::Last),
                    delimiter: self
                        .delimiter
                        .as_deref()
                        .map(Delimiter::from_str)
                        .transpose()?
                        .unwrap_or(Delimiter::Comma),
                    skip_columns: self.skip_cols.iter().map(column_ref).collect::<Result<_>>()?,
                };
                let name = self.name.unwrap_or_else(|| {
                    path.file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| format!("dataset{index}"))
                });
                Ok(DatasetSource::File { name, path, options })
            }
            _ => Err(Error::Config(format!(
                "dataset #{} needs exactly one of `toy` or `path`",
                index + 1
            ))),
        }
    }
}

impl RawConfig {
    fn into_config(self, data_dir: Option<&Path>) -> Result<ExperimentConfig> {
        let d = ExperimentConfig::default();
        let dir = self.data_dir.as_deref().map(Path::new).or(data_dir);
        let datasets = self
            .datasets
            .into_iter()
            .enumerate()
            .map(|(i, r)| r.into_source(i, dir))
            .collect::<Result<_>>()?;
        let classifiers = match self.classifiers {
            Some(list) => list
                .iter()
                .map(|s| s.parse())
                .collect::<Result<Vec<Classifier>>>()?,
            None => d.classifiers,
        };
        let n_labeled = match self.n_labeled {
            None => d.n_labeled,
            Some(IntOrString::Int(n)) => LabeledRule::Fixed(n as usize),
            Some(IntOrString::Str(s)) if s == "auto" => LabeledRule::Auto,
            Some(IntOrString::Str(s)) => {
                return Err(Error::Config(format!(
                    "n_labeled must be an integer or \"auto\", got {s:?}"
                )))
            }
        };
        let grid = match self.grid {
            None => d.grid,
            Some(g) => g
                .into_iter()
                .map(|v| match v {
                    IntOrString::Int(n) => Ok(GridPoint::Size(n as usize)),
                    IntOrString::Str(s) if s == "max" => Ok(GridPoint::Max),
                    IntOrString::Str(s) => Err(Error::Config(format!("bad grid entry {s:?}"))),
                })
                .collect::<Result<_>>()?,
        };
        let fit = FitConfig {
            max_iter: self.max_iter.unwrap_or(d.fit.max_iter),
            tol: self.tol.unwrap_or(d.fit.tol),
            step_init: self.step_init.unwrap_or(d.fit.step_init),
            ridge: self.ridge.unwrap_or(d.fit.ridge),
            ..d.fit
        };
        Ok(ExperimentConfig {
            name: self.name.unwrap_or(d.name),
            datasets,
            classifiers,
            repeats: self.repeats.unwrap_or(d.repeats),
            folds: self.folds.unwrap_or(d.folds),
            n_labeled,
            grid,
            test_fraction: self.test_fraction.unwrap_or(d.test_fraction),
            seed: self.seed.unwrap_or(d.seed),
            jobs: self.jobs.unwrap_or(d.jobs),
            alpha: self.alpha.unwrap_or(d.alpha),
            standardize: self.standardize.unwrap_or(d.standardize),
            fit,
            out: self.out,
        })
    }
}
