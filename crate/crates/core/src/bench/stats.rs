use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::lda::{self, Class, ModelParams};

/// Fraction of mismatched labels.
pub fn error_rate(pred: &[Class], truth: &[Class]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions for {} labels",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::InvalidInput("error rate of an empty set".into()));
    }
    let wrong = pred.iter().zip(truth).filter(|(p, t)| p != t).count();
    Ok(wrong as f64 / pred.len() as f64)
}

/// Negative log-likelihood of a fully labeled test set, summed over objects.
pub fn test_loss(theta: &ModelParams, test: &Dataset) -> Result<f64> {
    Ok(-lda::log_likelihood(theta, &test.x, &test.hard_labels()?)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    /// Statistic for `mean(a − b)`; infinite when the differences have zero
    /// variance and nonzero mean.
    pub t: f64,
    pub df: usize,
    pub significant: bool,
}

/// Two-sided paired t-test on `a − b` at level `alpha`.
pub fn paired_t_test(a: &[f64], b: &[f64], alpha: f64) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} vs {} samples",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::InvalidInput(
            "paired t-test needs at least two pairs".into(),
        ));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha {alpha} outside (0, 1)")));
    }
    let n = a.len() as f64;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let df = a.len() - 1;
    if var == 0.0 {
        let t = if mean == 0.0 {
            0.0
        } else {
            mean.signum() * f64::INFINITY
        };
        return Ok(TTest {
            t,
            df,
            significant: mean != 0.0,
        });
    }
    let t = mean / (var / n).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df as f64)
        .map_err(|e| Error::InvalidInput(format!("t distribution: {e}")))?;
    let critical = dist.inverse_cdf(1.0 - alpha / 2.0);
    Ok(TTest {
        t,
        df,
        significant: t.abs() > critical,
    })
}

/// Mean and sample standard deviation (zero for a single value).
pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
