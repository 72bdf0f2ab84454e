//! Two-class linear discriminant analysis with a shared covariance matrix.
//!
//! Fitting accepts soft labels: `r[i]` is the weight of object `i` in class 1
//! and `1 - r[i]` its weight in class 2. Hard labels are the `{0, 1}` case.

use std::fmt;

use crate::error::{Error, Result};
use crate::numkit::{log_add_exp, weighted_mean_and_scatter, CovarianceFactor, Matrix, SymMatrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Class {
    One,
    Two,
}

impl Class {
    pub fn from_u8(v: u8) -> Option<Class> {
        match v {
            1 => Some(Class::One),
            2 => Some(Class::Two),
            _ => None,
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            Class::One => 1,
            Class::Two => 2,
        }
    }

    /// Class-1 membership weight.
    pub fn weight(self) -> f64 {
        match self {
            Class::One => 1.0,
            Class::Two => 0.0,
        }
    }

    pub fn other(self) -> Class {
        match self {
            Class::One => Class::Two,
            Class::Two => Class::One,
        }
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

/// Per-object class-1 membership in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SoftLabels(Vec<f64>);

impl SoftLabels {
    pub fn new(r: Vec<f64>) -> Result<Self> {
        if let Some(bad) = r.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidInput(format!("soft label {bad} outside [0, 1]")));
        }
        Ok(SoftLabels(r))
    }

    pub fn from_classes(classes: &[Class]) -> Self {
        SoftLabels(classes.iter().map(|c| c.weight()).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `r → 1 - r`.
    pub fn flipped(&self) -> Self {
        SoftLabels(self.0.iter().map(|r| 1.0 - r).collect())
    }

    pub fn concat(&self, other: &SoftLabels) -> Self {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        SoftLabels(v)
    }

    /// Rounds to hard classes; `r >= 0.5` maps to class 1.
    pub fn to_classes(&self) -> Vec<Class> {
        self.0
            .iter()
            .map(|&r| if r >= 0.5 { Class::One } else { Class::Two })
            .collect()
    }

    pub fn class_weights(&self) -> (f64, f64) {
        let s1: f64 = self.0.iter().sum();
        let s2: f64 = self.0.iter().map(|r| 1.0 - r).sum();
        (s1, s2)
    }
}

/// Parameters of the two-class shared-covariance Gaussian model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub pi1: f64,
    pub pi2: f64,
    pub mu1: Vector,
    pub mu2: Vector,
    pub sigma: SymMatrix,
}

impl ModelParams {
    pub fn new(pi1: f64, mu1: Vector, mu2: Vector, sigma: SymMatrix) -> Result<Self> {
        if !(0.0..=1.0).contains(&pi1) {
            return Err(Error::InvalidInput(format!("prior {pi1} outside [0, 1]")));
        }
        if mu1.len() != mu2.len() || mu1.len() != sigma.dim() {
            return Err(Error::DimensionMismatch(format!(
                "means have {} and {} entries, covariance is {}x{}",
                mu1.len(),
                mu2.len(),
                sigma.dim(),
                sigma.dim()
            )));
        }
        Ok(ModelParams {
            pi1,
            pi2: 1.0 - pi1,
            mu1,
            mu2,
            sigma,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu1.len()
    }

    /// Same model with the class roles exchanged.
    pub fn swapped(&self) -> Self {
        ModelParams {
            pi1: self.pi2,
            pi2: self.pi1,
            mu1: self.mu2.clone(),
            mu2: self.mu1.clone(),
            sigma: self.sigma.clone(),
        }
    }

    pub fn prepare(&self) -> Result<PreparedModel> {
        Ok(PreparedModel {
            log_pi1: self.pi1.ln(),
            log_pi2: self.pi2.ln(),
            mu1: self.mu1.clone(),
            mu2: self.mu2.clone(),
            factor: CovarianceFactor::new(&self.sigma)?,
        })
    }

    /// Largest absolute difference over all parameters.
    pub fn max_abs_diff(&self, other: &ModelParams) -> f64 {
        let d = [
            (self.pi1 - other.pi1).abs(),
            (self.pi2 - other.pi2).abs(),
            (&self.mu1 - &other.mu1).amax(),
            (&self.mu2 - &other.mu2).amax(),
            (self.sigma.as_matrix() - other.sigma.as_matrix()).amax(),
        ];
        d.into_iter().fold(0.0, f64::max)
    }
}

/// A model with its covariance factored, ready for repeated evaluation.
#[derive(Debug, Clone)]
pub struct PreparedModel {
    log_pi1: f64,
    log_pi2: f64,
    mu1: Vector,
    mu2: Vector,
    factor: CovarianceFactor,
}

impl PreparedModel {
    pub fn factor(&self) -> &CovarianceFactor {
        &self.factor
    }

    /// Per-row `ln π_c + ln N(x | μ_c, Σ)` for both classes.
    pub fn log_joint(&self, x: &Matrix) -> Result<(Vec<f64>, Vec<f64>)> {
        check_dim(x, self.mu1.len())?;
        let l1 = self
            .factor
            .log_density_rows(x, &self.mu1)
            .into_iter()
            .map(|v| v + self.log_pi1)
            .collect();
        let l2 = self
            .factor
            .log_density_rows(x, &self.mu2)
            .into_iter()
            .map(|v| v + self.log_pi2)
            .collect();
        Ok((l1, l2))
    }

    pub fn log_likelihood(&self, x: &Matrix, r: &SoftLabels) -> Result<f64> {
        check_rows(x, r)?;
        let (l1, l2) = self.log_joint(x)?;
        Ok(r.as_slice()
            .iter()
            .zip(l1.iter().zip(&l2))
            .map(|(&ri, (&a, &b))| weighted(ri, a) + weighted(1.0 - ri, b))
            .sum())
    }

    pub fn posterior(&self, x: &Matrix) -> Result<Vec<f64>> {
        let (l1, l2) = self.log_joint(x)?;
        Ok(l1
            .iter()
            .zip(&l2)
            .map(|(&a, &b)| posterior_from_logs(a, b))
            .collect())
    }

    /// `Σ ln(π₁N₁ + π₂N₂)` over the rows of `x`.
    pub fn mixture_log_likelihood(&self, x: &Matrix) -> Result<f64> {
        let (l1, l2) = self.log_joint(x)?;
        Ok(l1.iter().zip(&l2).map(|(&a, &b)| log_add_exp(a, b)).sum())
    }
}

/// `w · l` with the convention `0 · (−∞) = 0`.
fn weighted(w: f64, l: f64) -> f64 {
    if w == 0.0 {
        0.0
    } else {
        w * l
    }
}

fn posterior_from_logs(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY && b == f64::NEG_INFINITY {
        return 0.5;
    }
    // logistic of the log-odds, evaluated on the stable branch
    let t = a - b;
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn check_dim(x: &Matrix, d: usize) -> Result<()> {
    if x.ncols() != d {
        return Err(Error::DimensionMismatch(format!(
            "data has {} features, model has {d}",
            x.ncols()
        )));
    }
    Ok(())
}

fn check_rows(x: &Matrix, r: &SoftLabels) -> Result<()> {
    if x.nrows() != r.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} rows but {} labels",
            x.nrows(),
            r.len()
        )));
    }
    Ok(())
}

/// Closed-form maximum-likelihood fit from (soft) labels.
pub fn fit(x: &Matrix, r: &SoftLabels) -> Result<ModelParams> {
    fit_with_ridge(x, r, 0.0)
}

/// [`fit`] followed by adding `ridge * trace(Σ)/d` to the covariance diagonal.
pub fn fit_with_ridge(x: &Matrix, r: &SoftLabels, ridge: f64) -> Result<ModelParams> {
    check_rows(x, r)?;
    if x.ncols() == 0 {
        return Err(Error::InvalidInput("data has no features".into()));
    }
    let n = x.nrows() as f64;
    let w2: Vec<f64> = r.as_slice().iter().map(|v| 1.0 - v).collect();
    let (mu1, s1, n1) = weighted_mean_and_scatter(x, r.as_slice())?;
    let (mu2, s2, n2) = weighted_mean_and_scatter(x, &w2)?;
    let sigma = SymMatrix::new((s1.into_matrix() + s2.into_matrix()) / n)?.with_ridge(ridge);
    Ok(ModelParams {
        pi1: n1 / n,
        pi2: n2 / n,
        mu1,
        mu2,
        sigma,
    })
}

pub fn log_likelihood(theta: &ModelParams, x: &Matrix, r: &SoftLabels) -> Result<f64> {
    theta.prepare()?.log_likelihood(x, r)
}

/// Class-1 posterior probability for each row.
pub fn posterior(theta: &ModelParams, x: &Matrix) -> Result<Vec<f64>> {
    theta.prepare()?.posterior(x)
}

/// Class 1 iff its posterior is at least 0.5.
pub fn predict(theta: &ModelParams, x: &Matrix) -> Result<Vec<Class>> {
    Ok(posterior(theta, x)?
        .into_iter()
        .map(|p| if p >= 0.5 { Class::One } else { Class::Two })
        .collect())
}

/// Labeled log-likelihood plus the mixture log-likelihood of `xu`.
pub fn marginal_log_likelihood(theta: &ModelParams, x: &Matrix, r: &SoftLabels, xu: &Matrix) -> Result<f64> {
    let prepared = theta.prepare()?;
    let labeled = prepared.log_likelihood(x, r)?;
    if xu.nrows() == 0 {
        return Ok(labeled);
    }
    Ok(labeled + prepared.mixture_log_likelihood(xu)?)
}
