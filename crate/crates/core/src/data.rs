//! Datasets: synthetic Gaussian toy problems, delimited-text ingestion and
//! the random split protocols used by the experiments.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::lda::{Class, SoftLabels};
use crate::numkit::{Matrix, Vector};
use crate::rng;

/// Maximum number of redraws when looking for a labeled subset with both classes.
pub const MAX_SPLIT_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    /// One object per row.
    pub x: Matrix,
    pub labels: Vec<Option<Class>>,
    /// Raw label values mapped to class 1 and class 2, when loaded from text.
    pub label_names: Option<Vec<String>>,
    pub feature_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, x: Matrix, labels: Vec<Option<Class>>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::InvalidInput(format!(
                "dataset needs at least one row and one feature, got {}x{}",
                x.nrows(),
                x.ncols()
            )));
        }
        if labels.len() != x.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} rows",
                labels.len(),
                x.nrows()
            )));
        }
        if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
            // nalgebra storage is column-major
            return Err(Error::NonFiniteValue {
                row: pos % x.nrows() + 1,
                column: pos / x.nrows() + 1,
            });
        }
        Ok(Dataset {
            name: name.into(),
            x,
            labels,
            label_names: None,
            feature_names: None,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.labels.iter().all(Option::is_some)
    }

    /// Labels of a fully labeled dataset.
    pub fn classes(&self) -> Result<Vec<Class>> {
        self.labels
            .iter()
            .enumerate()
            .map(|(i, l)| {
                l.ok_or_else(|| Error::InvalidInput(format!("row {} of {} has no label", i + 1, self.name)))
            })
            .collect()
    }

    pub fn hard_labels(&self) -> Result<SoftLabels> {
        Ok(SoftLabels::from_classes(&self.classes()?))
    }

    /// Rows with the given indices, in that order. May be empty.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            x: self.x.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            label_names: self.label_names.clone(),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Splits into labeled rows `(x, y)` and the feature rows of unlabeled objects.
    pub fn partition_by_label(&self) -> (Matrix, SoftLabels, Matrix) {
        let (lab, unl): (Vec<usize>, Vec<usize>) =
            (0..self.n_rows()).partition(|&i| self.labels[i].is_some());
        let classes: Vec<Class> = lab.iter().map(|&i| self.labels[i].unwrap()).collect();
        (
            self.x.select_rows(&lab),
            SoftLabels::from_classes(&classes),
            self.x.select_rows(&unl),
        )
    }

    /// Column-wise z-scores (population standard deviation). Constant columns
    /// are only centered.
    pub fn standardized(&self) -> Dataset {
        let mut out = self.clone();
        for mut col in out.x.column_iter_mut() {
            let n = col.len() as f64;
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            for v in col.iter_mut() {
                *v -= mean;
                if sd > 0.0 {
                    *v /= sd;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryMode {
    /// The class of each draw is its generating component.
    BetweenClusters,
    /// Classes are split by a boundary through the midpoint of the two means,
    /// perpendicular to the between-cluster boundary, so each class holds
    /// draws from both components.
    WithinClusters,
}

impl FromStr for BoundaryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "between" | "between-clusters" => Ok(BoundaryMode::BetweenClusters),
            "within" | "within-clusters" => Ok(BoundaryMode::WithinClusters),
            _ => Err(Error::InvalidInput(format!(
                "unknown boundary mode {s:?}; expected between-clusters or within-clusters"
            ))),
        }
    }
}

impl fmt::Display for BoundaryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundaryMode::BetweenClusters => "between-clusters",
            BoundaryMode::WithinClusters => "within-clusters",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToySpec {
    pub mu1: Vector,
    pub mu2: Vector,
    /// Both components have covariance `sigma_scale · I`.
    pub sigma_scale: f64,
    pub boundary_mode: BoundaryMode,
}

impl ToySpec {
    /// Components at `(1, 1)` and `(−1, −1)` with covariance `0.6·I`.
    pub fn standard(boundary_mode: BoundaryMode) -> Self {
        ToySpec {
            mu1: Vector::from_column_slice(&[1.0, 1.0]),
            mu2: Vector::from_column_slice(&[-1.0, -1.0]),
            sigma_scale: 0.6,
            boundary_mode,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.mu1.len() != self.mu2.len() || self.mu1.is_empty() {
            return Err(Error::DimensionMismatch(
                "toy means must have equal, nonzero length".into(),
            ));
        }
        if self.mu1 == self.mu2 {
            return Err(Error::InvalidInput("toy means must differ".into()));
        }
        if !(self.sigma_scale > 0.0) {
            return Err(Error::InvalidInput("toy sigma_scale must be positive".into()));
        }
        if self.boundary_mode == BoundaryMode::WithinClusters && self.mu1.len() < 2 {
            return Err(Error::InvalidInput(
                "within-clusters mode needs at least two dimensions".into(),
            ));
        }
        Ok(())
    }

    /// Unit direction perpendicular to `mu1 − mu2`: the coordinate axis least
    /// aligned with the mean difference, orthogonalized against it.
    fn perpendicular(&self) -> Vector {
        let delta = (&self.mu1 - &self.mu2).normalize();
        let axis = (0..delta.len())
            .min_by(|&a, &b| delta[a].abs().total_cmp(&delta[b].abs()))
            .unwrap();
        let mut v = Vector::zeros(delta.len());
        v[axis] = 1.0;
        let v = &v - &delta * delta[axis];
        v.normalize()
    }

    /// Class assigned to a point: component identity in between-clusters
    /// mode, side of the perpendicular boundary through the midpoint otherwise.
    fn classify(&self, x: &Vector, component: Class) -> Class {
        match self.boundary_mode {
            BoundaryMode::BetweenClusters => component,
            BoundaryMode::WithinClusters => {
                let mid = (&self.mu1 + &self.mu2) * 0.5;
                if (x - mid).dot(&self.perpendicular()) >= 0.0 {
                    Class::One
                } else {
                    Class::Two
                }
            }
        }
    }
}

/// `n` draws: `⌈n/2⌉` from the first component followed by `⌊n/2⌋` from the second.
pub fn generate_gaussian_toy(n: usize, spec: &ToySpec, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "toy sample size must be at least 2, got {n}"
        )));
    }
    spec.validate()?;
    let d = spec.mu1.len();
    let sd = spec.sigma_scale.sqrt();
    let mut rng = rng::from_seed(seed);
    let n1 = n.div_ceil(2);
    let mut x = Matrix::zeros(n, d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let component = if i < n1 { Class::One } else { Class::Two };
        let mu = if component == Class::One {
            &spec.mu1
        } else {
            &spec.mu2
        };
        let row = Vector::from_fn(d, |j, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            mu[j] + sd * z
        });
        labels.push(Some(spec.classify(&row, component)));
        x.set_row(i, &row.transpose());
    }
    Dataset::new(format!("toy-{}", spec.boundary_mode), x, labels)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    /// Zero-based column index.
    Index(usize),
    /// Header name.
    Name(String),
    Last,
}

impl FromStr for LabelColumn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "last" | "-1" => Ok(LabelColumn::Last),
            "first" => Ok(LabelColumn::Index(0)),
            _ => Ok(s
                .parse::<usize>()
                .map(LabelColumn::Index)
                .unwrap_or_else(|_| LabelColumn::Name(s.to_string()))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delimiter {
    Comma,
    Whitespace,
    Char(char),
}

impl Delimiter {
    fn split<'a>(&self, line: &'a str) -> Vec<&'a str> {
        let fields: Vec<&str> = match self {
            Delimiter::Comma => line.split(',').collect(),
            Delimiter::Whitespace => line.split_whitespace().collect(),
            Delimiter::Char(c) => line.split(*c).collect(),
        };
        fields
            .into_iter()
            .map(|f| f.trim().trim_matches('"').trim())
            .collect()
    }

    fn separator(&self) -> String {
        match self {
            Delimiter::Comma => ",".into(),
            Delimiter::Whitespace => " ".into(),
            Delimiter::Char(c) => c.to_string(),
        }
    }
}

impl FromStr for Delimiter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "," | "comma" => Ok(Delimiter::Comma),
            "whitespace" | "space" | " " => Ok(Delimiter::Whitespace),
            "tab" | "\t" => Ok(Delimiter::Char('\t')),
            _ => {
                let mut chars = s.chars();
                match (chars.next(), chars.next()) {
                    (Some(c), None) => Ok(Delimiter::Char(c)),
                    _ => Err(Error::InvalidInput(format!("unsupported delimiter {s:?}"))),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadOptions {
    pub label_column: LabelColumn,
    pub delimiter: Delimiter,
    /// Columns dropped before parsing features (indices or header names).
    pub skip_columns: Vec<LabelColumn>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            label_column: LabelColumn::Last,
            delimiter: Delimiter::Comma,
            skip_columns: Vec::new(),
        }
    }
}

/// Label fields treated as "no label".
fn is_missing_label(s: &str) -> bool {
    matches!(s, "" | "?" | "NA" | "na" | "NaN")
}

fn resolve_column(col: &LabelColumn, header: Option<&[&str]>, width: usize) -> Result<usize> {
    let idx = match col {
        LabelColumn::Last => width.checked_sub(1),
        LabelColumn::Index(i) => Some(*i).filter(|&i| i < width),
        LabelColumn::Name(name) => {
            let header = header.ok_or_else(|| {
                Error::InvalidInput(format!("column {name:?} named but the file has no header"))
            })?;
            header.iter().position(|h| h == name)
        }
    };
    idx.ok_or_else(|| Error::InvalidInput(format!("column {col:?} not found among {width} columns")))
}

pub fn load_delimited(path: impl AsRef<Path>, options: &LoadOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    parse_delimited(&text, &name, options)
}

/// Parses delimited text. The first line is a header when any of its
/// feature fields is not a number. Raw labels map to classes 1 and 2 in
/// sorted order (numeric order when every label is a number).
pub fn parse_delimited(text: &str, name: &str, options: &LoadOptions) -> Result<Dataset> {
    let lines: Vec<(usize, Vec<&str>)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| (i + 1, options.delimiter.split(l)))
        .collect();
    let Some((_, first)) = lines.first() else {
        return Err(Error::InvalidInput(format!("{name}: no data rows")));
    };
    let width = first.len();
    let first_label = resolve_column(&options.label_column, Some(first), width).ok();
    let skip_probe: Vec<usize> = options
        .skip_columns
        .iter()
        .filter_map(|c| resolve_column(c, Some(first), width).ok())
        .collect();
    let has_header = first
        .iter()
        .enumerate()
        .any(|(j, f)| Some(j) != first_label && !skip_probe.contains(&j) && f.parse::<f64>().is_err());
    let header = has_header.then(|| first.clone());
    let label_col = resolve_column(&options.label_column, header.as_deref(), width)?;
    let skipped: Vec<usize> = options
        .skip_columns
        .iter()
        .map(|c| resolve_column(c, header.as_deref(), width))
        .collect::<Result<_>>()?;
    let feature_cols: Vec<usize> = (0..width)
        .filter(|j| *j != label_col && !skipped.contains(j))
        .collect();
    if feature_cols.is_empty() {
        return Err(Error::InvalidInput(format!("{name}: no feature columns")));
    }

    let body = if has_header { &lines[1..] } else { &lines[..] };
    if body.is_empty() {
        return Err(Error::InvalidInput(format!("{name}: no data rows")));
    }
    let mut values = Vec::with_capacity(body.len() * feature_cols.len());
    let mut raw_labels = Vec::with_capacity(body.len());
    for (line_no, fields) in body {
        if fields.len() != width {
            return Err(Error::Parse {
                row: *line_no,
                column: fields.len().min(width) + 1,
                message: format!("expected {width} fields, found {}", fields.len()),
            });
        }
        for &j in &feature_cols {
            let v: f64 = fields[j].parse().map_err(|_| Error::Parse {
                row: *line_no,
                column: j + 1,
                message: format!("not a number: {:?}", fields[j]),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFiniteValue {
                    row: *line_no,
                    column: j + 1,
                });
            }
            values.push(v);
        }
        let raw = fields[label_col];
        raw_labels.push((!is_missing_label(raw)).then(|| raw.to_string()));
    }

    let mut distinct: Vec<String> = raw_labels.iter().flatten().cloned().collect();
    distinct.sort();
    distinct.dedup();
    if distinct.len() > 2 {
        return Err(Error::MoreThanTwoClasses { values: distinct });
    }
    if distinct.iter().all(|v| v.parse::<f64>().is_ok()) {
        distinct.sort_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap()));
    }
    let labels = raw_labels
        .iter()
        .map(|l| {
            l.as_ref()
                .map(|v| if *v == distinct[0] { Class::One } else { Class::Two })
        })
        .collect();

    let x = Matrix::from_row_slice(body.len(), feature_cols.len(), &values);
    let mut ds = Dataset::new(name, x, labels)?;
    ds.label_names = Some(distinct);
    ds.feature_names = header.map(|h| feature_cols.iter().map(|&j| h[j].to_string()).collect());
    Ok(ds)
}

/// Writes features followed by the label as the last column. Unlabeled rows
/// get `?` as label. A header is written when feature names are known.
pub fn write_delimited<W: Write>(ds: &Dataset, mut out: W, delimiter: Delimiter) -> Result<()> {
    let sep = delimiter.separator();
    let io = |e| Error::io("<output>", e);
    if let Some(names) = &ds.feature_names {
        writeln!(out, "{}{sep}label", names.join(&sep)).map_err(io)?;
    }
    for i in 0..ds.n_rows() {
        let mut fields: Vec<String> = ds.x.row(i).iter().map(|v| v.to_string()).collect();
        let label = match (ds.labels[i], &ds.label_names) {
            (None, _) => "?".to_string(),
            (Some(c), Some(names)) if names.len() >= c.as_u8() as usize => {
                names[c.as_u8() as usize - 1].clone()
            }
            (Some(c), _) => c.to_string(),
        };
        fields.push(label);
        writeln!(out, "{}", fields.join(&sep)).map_err(io)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitPlan {
    pub n_labeled: usize,
    pub seed: u64,
    pub fold_count: usize,
}

/// `max(2d, 10)`.
pub fn default_labeled_size(dim: usize) -> usize {
    (2 * dim).max(10)
}

fn draw_stratified(classes: &[Class], n_labeled: usize, rng: &mut rng::Rng) -> Result<Vec<usize>> {
    for _ in 0..MAX_SPLIT_ATTEMPTS {
        let mut idx = rand::seq::index::sample(rng, classes.len(), n_labeled).into_vec();
        let has_one = idx.iter().any(|&i| classes[i] == Class::One);
        let has_two = idx.iter().any(|&i| classes[i] == Class::Two);
        if has_one && has_two {
            idx.sort_unstable();
            return Ok(idx);
        }
    }
    Err(Error::CannotStratify {
        attempts: MAX_SPLIT_ATTEMPTS,
    })
}

/// Uniformly random labeled subset of size `plan.n_labeled` containing both
/// classes; the rest forms the unlabeled part. Labels stay attached to the
/// unlabeled part for evaluation.
pub fn split_labeled(ds: &Dataset, plan: &SplitPlan) -> Result<(Dataset, Dataset)> {
    let classes = ds.classes()?;
    if plan.n_labeled < 2 || plan.n_labeled >= ds.n_rows() {
        return Err(Error::InvalidInput(format!(
            "labeled size {} must be in [2, {})",
            plan.n_labeled,
            ds.n_rows()
        )));
    }
    let mut rng = rng::from_seed(plan.seed);
    let labeled = draw_stratified(&classes, plan.n_labeled, &mut rng)?;
    let mut is_labeled = vec![false; ds.n_rows()];
    for &i in &labeled {
        is_labeled[i] = true;
    }
    let rest: Vec<usize> = (0..ds.n_rows()).filter(|&i| !is_labeled[i]).collect();
    Ok((ds.subset(&labeled), ds.subset(&rest)))
}

/// Labeled indices plus the remaining indices in random order.
pub(crate) fn split_indices_shuffled(
    classes: &[Class],
    n_labeled: usize,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut rng = rng::from_seed(seed);
    let labeled = draw_stratified(classes, n_labeled, &mut rng)?;
    let mut is_labeled = vec![false; classes.len()];
    for &i in &labeled {
        is_labeled[i] = true;
    }
    let mut rest: Vec<usize> = (0..classes.len()).filter(|&i| !is_labeled[i]).collect();
    rest.shuffle(&mut rng);
    Ok((labeled, rest))
}

/// `(train, validation)` index pairs for `k` folds over `n` rows. Fold sizes
/// differ by at most one; indices within each part are sorted.
pub fn kfold(n: usize, k: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k == 0 || k > n {
        return Err(Error::InvalidInput(format!("fold count {k} must be in [1, {n}]")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng::from_seed(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let mut val = perm[start..start + size].to_vec();
        val.sort_unstable();
        let mut train: Vec<usize> = perm[..start]
            .iter()
            .chain(&perm[start + size..])
            .copied()
            .collect();
        train.sort_unstable();
        folds.push((train, val));
        start += size;
    }
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy(n: usize, mode: BoundaryMode, seed: u64) -> Dataset {
        generate_gaussian_toy(n, &ToySpec::standard(mode), seed).unwrap()
    }

    #[test]
    fn toy_moments_match_parameters() {
        let ds = toy(100_000, BoundaryMode::BetweenClusters, 1);
        let (x, y, _) = ds.partition_by_label();
        let t = crate::lda::fit(&x, &y).unwrap();
        for j in 0..2 {
            assert!((t.mu1[j] - 1.0).abs() < 0.02);
            assert!((t.mu2[j] + 1.0).abs() < 0.02);
        }
        let expected = Matrix::identity(2, 2) * 0.6;
        assert!((t.sigma.as_matrix() - expected).amax() < 0.02);
    }

    #[test]
    fn toy_bayes_error() {
        let ds = toy(100_000, BoundaryMode::BetweenClusters, 2);
        let truth = crate::lda::ModelParams::new(
            0.5,
            Vector::from_column_slice(&[1.0, 1.0]),
            Vector::from_column_slice(&[-1.0, -1.0]),
            crate::SymMatrix::identity(2).scale(0.6),
        )
        .unwrap();
        let pred = crate::lda::predict(&truth, &ds.x).unwrap();
        let classes = ds.classes().unwrap();
        let err = pred.iter().zip(&classes).filter(|(a, b)| a != b).count() as f64 / 1e5;
        let bayes = 0.5 * statrs::function::erf::erfc((8.0f64 / 0.6).sqrt() / 2.0 / std::f64::consts::SQRT_2);
        assert!((err - bayes).abs() < 0.005, "{err}");
    }

    #[test]
    fn toy_small_and_deterministic() {
        let ds = toy(2, BoundaryMode::BetweenClusters, 3);
        assert_eq!(ds.labels, vec![Some(Class::One), Some(Class::Two)]);
        assert_eq!(
            toy(50, BoundaryMode::WithinClusters, 4),
            toy(50, BoundaryMode::WithinClusters, 4)
        );
        assert_ne!(
            toy(50, BoundaryMode::WithinClusters, 4).x,
            toy(50, BoundaryMode::WithinClusters, 5).x
        );
        assert!(generate_gaussian_toy(1, &ToySpec::standard(BoundaryMode::BetweenClusters), 0).is_err());
    }

    #[test]
    fn within_clusters_classes_mix_components() {
        let ds = toy(1000, BoundaryMode::WithinClusters, 6);
        let n1 = 500;
        for class in [Class::One, Class::Two] {
            let from_first = (0..n1).filter(|&i| ds.labels[i] == Some(class)).count();
            let from_second = (n1..1000).filter(|&i| ds.labels[i] == Some(class)).count();
            assert!(from_first > 100 && from_second > 100);
        }
        // boundary is the line x0 = x1
        for i in 0..1000 {
            let expected = if ds.x[(i, 0)] >= ds.x[(i, 1)] {
                Class::One
            } else {
                Class::Two
            };
            assert_eq!(ds.labels[i], Some(expected));
        }
    }

    #[test]
    fn load_maps_sorted_labels() {
        let text = "1.0,2.0,a\n3.0,4.0,a\n5.0,6.0,b\n";
        let ds = parse_delimited(text, "t", &LoadOptions::default()).unwrap();
        assert_eq!(
            ds.labels,
            vec![Some(Class::One), Some(Class::One), Some(Class::Two)]
        );
        assert_eq!(
            ds.label_names.as_deref(),
            Some(&["a".to_string(), "b".to_string()][..])
        );
        assert_eq!(ds.dim(), 2);
    }

    #[test]
    fn load_numeric_labels_sort_numerically() {
        let text = "1,10\n2,9\n";
        let ds = parse_delimited(text, "t", &LoadOptions::default()).unwrap();
        assert_eq!(ds.labels, vec![Some(Class::Two), Some(Class::One)]);
    }

    #[test]
    fn load_errors() {
        let three = "1,a\n2,b\n3,c\n";
        assert!(matches!(
            parse_delimited(three, "t", &LoadOptions::default()),
            Err(Error::MoreThanTwoClasses { .. })
        ));
        let bad = "1,2,a\n3,x,b\n";
        match parse_delimited(bad, "t", &LoadOptions::default()) {
            Err(Error::Parse { row, column, .. }) => assert_eq!((row, column), (2, 2)),
            other => panic!("{other:?}"),
        }
        let ragged = "1,2,a\n3,b\n";
        assert!(matches!(
            parse_delimited(ragged, "t", &LoadOptions::default()),
            Err(Error::Parse { row: 2, .. })
        ));
        let inf = "1,inf,a\n3,4,b\n";
        assert!(matches!(
            parse_delimited(inf, "t", &LoadOptions::default()),
            Err(Error::NonFiniteValue { row: 1, column: 2 })
        ));
        assert!(matches!(
            load_delimited("/nonexistent/file.csv", &LoadOptions::default()),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn load_header_names_skip_and_unlabeled() {
        let text = "id class f1 f2\nx1 pos 1.5 2\nx2 neg 3 4\nx3 ? 5 6\n";
        let opts = LoadOptions {
            label_column: LabelColumn::Name("class".into()),
            delimiter: Delimiter::Whitespace,
            skip_columns: vec![LabelColumn::Index(0)],
        };
        let ds = parse_delimited(text, "t", &opts).unwrap();
        assert_eq!(
            ds.feature_names.as_deref(),
            Some(&["f1".to_string(), "f2".to_string()][..])
        );
        assert_eq!(ds.labels, vec![Some(Class::Two), Some(Class::One), None]);
        assert_eq!(ds.x[(0, 0)], 1.5);
        let (x, y, xu) = ds.partition_by_label();
        assert_eq!((x.nrows(), y.len(), xu.nrows()), (2, 2, 1));
    }

    #[test]
    fn write_then_load_is_identity() {
        let mut ds = toy(40, BoundaryMode::WithinClusters, 9);
        ds.labels[3] = None;
        for (feature_names, delim) in [
            (None, Delimiter::Comma),
            (Some(vec!["a".into(), "b".into()]), Delimiter::Whitespace),
        ] {
            ds.feature_names = feature_names;
            let mut buf = Vec::new();
            write_delimited(&ds, &mut buf, delim).unwrap();
            let opts = LoadOptions {
                delimiter: delim,
                ..LoadOptions::default()
            };
            let back = parse_delimited(std::str::from_utf8(&buf).unwrap(), "t", &opts).unwrap();
            assert_eq!(back.x, ds.x);
            assert_eq!(back.labels, ds.labels);
        }
    }

    #[test]
    fn split_examples() {
        let ds = toy(30, BoundaryMode::BetweenClusters, 1);
        let plan = SplitPlan {
            n_labeled: 29,
            seed: 4,
            fold_count: 10,
        };
        let (l, u) = split_labeled(&ds, &plan).unwrap();
        assert_eq!((l.n_rows(), u.n_rows()), (29, 1));
        let again = split_labeled(&ds, &plan).unwrap();
        assert_eq!(again.0, l);
        assert!(split_labeled(
            &ds,
            &SplitPlan {
                n_labeled: 30,
                ..plan
            }
        )
        .is_err());
    }

    #[test]
    fn split_cannot_stratify_single_class() {
        let x = Matrix::from_fn(5, 1, |i, _| i as f64);
        let ds = Dataset::new("one", x, vec![Some(Class::One); 5]).unwrap();
        let plan = SplitPlan {
            n_labeled: 2,
            seed: 0,
            fold_count: 2,
        };
        assert!(matches!(
            split_labeled(&ds, &plan),
            Err(Error::CannotStratify { attempts: 1000 })
        ));
    }

    #[test]
    fn split_class_balance_over_seeds() {
        // balanced 100 rows, 10 labeled: E[#class 1 | both classes present] = 5
        let x = Matrix::from_fn(100, 1, |i, _| i as f64);
        let labels = (0..100)
            .map(|i| Some(if i < 50 { Class::One } else { Class::Two }))
            .collect();
        let ds = Dataset::new("bal", x, labels).unwrap();
        let mut total = 0usize;
        for seed in 0..1000 {
            let (l, _) = split_labeled(
                &ds,
                &SplitPlan {
                    n_labeled: 10,
                    seed,
                    fold_count: 10,
                },
            )
            .unwrap();
            total += l.labels.iter().filter(|c| **c == Some(Class::One)).count();
        }
        let mean = total as f64 / 1000.0;
        assert!((mean - 5.0).abs() < 0.3, "{mean}");
    }

    #[test]
    fn kfold_examples() {
        let folds = kfold(10, 10, 1).unwrap();
        assert!(folds.iter().all(|(t, v)| v.len() == 1 && t.len() == 9));
        let folds = kfold(305, 10, 2).unwrap();
        let sizes: Vec<usize> = folds.iter().map(|(_, v)| v.len()).collect();
        assert!(sizes.iter().all(|s| *s == 30 || *s == 31));
        assert_eq!(sizes.iter().filter(|s| **s == 31).count(), 5);
        assert!(kfold(3, 4, 0).is_err());
        assert_eq!(kfold(50, 5, 7).unwrap(), kfold(50, 5, 7).unwrap());
    }

    proptest! {
        #[test]
        fn kfold_partitions_rows(n in 1usize..200, k in 1usize..20, seed in any::<u64>()) {
            prop_assume!(k <= n);
            let folds = kfold(n, k, seed).unwrap();
            let mut seen = vec![0usize; n];
            for (train, val) in &folds {
                prop_assert_eq!(train.len() + val.len(), n);
                for &i in val { seen[i] += 1; }
                for &i in train { prop_assert!(!val.contains(&i)); }
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
            let sizes: Vec<usize> = folds.iter().map(|(_, v)| v.len()).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }

        #[test]
        fn split_preserves_rows(n_labeled in 2usize..40, seed in any::<u64>()) {
            let ds = toy(41, BoundaryMode::BetweenClusters, 8);
            let (l, u) = split_labeled(&ds, &SplitPlan { n_labeled, seed, fold_count: 10 }).unwrap();
            prop_assert_eq!(l.n_rows() + u.n_rows(), 41);
            let mut rows: Vec<Vec<u64>> = (0..l.n_rows()).map(|i| l.x.row(i).iter().map(|v| v.to_bits()).collect())
                .chain((0..u.n_rows()).map(|i| u.x.row(i).iter().map(|v| v.to_bits()).collect()))
                .collect();
            let mut orig: Vec<Vec<u64>> = (0..41).map(|i| ds.x.row(i).iter().map(|v| v.to_bits()).collect()).collect();
            rows.sort();
            orig.sort();
            prop_assert_eq!(rows, orig);
        }
    }
}
