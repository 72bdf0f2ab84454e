//! Fast invariant suite shared by the `selfcheck` command and the tests:
//! gradient against finite differences, EM monotonicity, moment-constraint
//! residuals and equivalence with supervised LDA when there is no unlabeled
//! data.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{self, BoundaryMode, ToySpec};
use crate::error::Result;
use crate::lda::{self, SoftLabels};
use crate::numkit::Matrix;
use crate::rng;
use crate::semisup::{self, FitConfig, ImplicitObjective, Method};

pub const GRADIENT_STEP: f64 = 1e-5;
pub const GRADIENT_TOL: f64 = 1e-5;
pub const MONOTONE_SLACK: f64 = 1e-9;
pub const MEAN_RESIDUAL_TOL: f64 = 1e-10;
pub const COVARIANCE_TOL: f64 = 1e-8;
pub const EQUIVALENCE_TOL: f64 = 1e-12;

/// Names accepted by [`run_checks`]' `corrupt` argument.
pub const CHECK_NAMES: [&str; 4] = ["gradient", "em-monotone", "mc-constraints", "xu-empty"];

/// Added to the checked quantity of a corrupted check; large enough to trip
/// every tolerance above.
const CORRUPTION: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed deviation, against the check's tolerance.
    pub worst: f64,
    pub tolerance: f64,
    pub instances: usize,
}

/// Labeled rows alternate classes (class 1 first); every coordinate is
/// standard normal shifted by `+sep` for class 1 and `-sep` for class 2.
/// Unlabeled rows alternate the same way.
pub fn random_instance(seed: u64, nl: usize, nu: usize, d: usize, sep: f64) -> (Matrix, SoftLabels, Matrix) {
    let mut r = rng::from_seed(seed);
    let mut draw = |first: bool| -> Vec<f64> {
        (0..d)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut r);
                z + if first { sep } else { -sep }
            })
            .collect()
    };
    let mut xl = Vec::with_capacity(nl * d);
    let mut yl = Vec::with_capacity(nl);
    for i in 0..nl {
        let c = i % 2 == 0;
        xl.extend(draw(c));
        yl.push(if c { 1.0 } else { 0.0 });
    }
    let mut xu = Vec::with_capacity(nu * d);
    for j in 0..nu {
        xu.extend(draw(j % 2 == 0));
    }
    (
        Matrix::from_row_slice(nl, d, &xl),
        SoftLabels::new(yl).expect("labels are 0/1"),
        Matrix::from_row_slice(nu, d, &xu),
    )
}

/// Largest `|analytic − central difference| / max(1, |central difference|)`
/// over all coordinates, at a random interior point.
pub fn gradient_error(x: &Matrix, y: &SoftLabels, xu: &Matrix, ridge: f64, seed: u64) -> Result<f64> {
    let obj = ImplicitObjective::new(x, y, xu, ridge)?;
    let mut r = rng::from_seed(seed);
    let yu: Vec<f64> = (0..xu.nrows()).map(|_| r.random_range(0.05..0.95)).collect();
    let (_, grad) = obj.value_and_gradient(&SoftLabels::new(yu.clone())?)?;
    let mut worst = 0.0f64;
    for j in 0..yu.len() {
        let mut plus = yu.clone();
        let mut minus = yu.clone();
        plus[j] += GRADIENT_STEP;
        minus[j] -= GRADIENT_STEP;
        let fd = (obj.value(&SoftLabels::new(plus)?)? - obj.value(&SoftLabels::new(minus)?)?)
            / (2.0 * GRADIENT_STEP);
        worst = worst.max((grad[j] - fd).abs() / fd.abs().max(1.0));
    }
    Ok(worst)
}

/// Largest decrease between consecutive EM objective values.
pub fn em_worst_decrease(x: &Matrix, y: &SoftLabels, xu: &Matrix) -> Result<f64> {
    let (_, trace) = semisup::fit_em(x, y, xu, &FitConfig::default())?;
    Ok(trace
        .objective_per_iter
        .windows(2)
        .map(|w| w[0] - w[1])
        .fold(0.0, f64::max))
}

/// `(mean residual, covariance residual)` of a moment-constrained fit: the
/// prior-weighted class means against the all-data mean, and the transform
/// of the labeled total covariance against the all-data covariance.
pub fn moment_residuals(x: &Matrix, y: &SoftLabels, xu: &Matrix) -> Result<(f64, f64)> {
    let theta = semisup::fit_moment_constrained(x, y, xu, &FitConfig::default())?;
    let stats = semisup::moment_stats(x, xu)?;
    let mean = (&theta.mu1 * theta.pi1 + &theta.mu2 * theta.pi2 - &stats.mu_t).amax();
    let mapped = semisup::moment_covariance_transform(&stats.sigma_t_labeled, &stats)?;
    let cov = (mapped.as_matrix() - stats.theta_cov.as_matrix()).amax();
    Ok((mean, cov))
}

/// Largest parameter difference between each fitter and supervised LDA
/// when the unlabeled set is empty.
pub fn empty_unlabeled_deviation(x: &Matrix, y: &SoftLabels) -> Result<f64> {
    let cfg = FitConfig::default();
    let xu = Matrix::zeros(0, x.ncols());
    let sup = lda::fit(x, y)?;
    let mut worst = 0.0f64;
    for m in Method::ALL {
        let (theta, _) = semisup::fit_method(m, x, y, &xu, &cfg)?;
        worst = worst.max(theta.max_abs_diff(&sup));
    }
    Ok(worst)
}

fn outcome(
    name: &'static str,
    worst: f64,
    tolerance: f64,
    instances: usize,
    corrupt: Option<&str>,
) -> CheckOutcome {
    let worst = if corrupt == Some(name) {
        worst + CORRUPTION
    } else {
        worst
    };
    CheckOutcome {
        name,
        passed: worst <= tolerance,
        worst,
        tolerance,
        instances,
    }
}

/// Runs every check. `corrupt` names a check whose measured deviation is
/// deliberately inflated, to exercise the failure path.
pub fn run_checks(seed: u64, corrupt: Option<&str>) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();

    let mut worst = 0.0f64;
    let mut count = 0;
    for i in 0..20u64 {
        let s = rng::derive_seed(seed, &[1, i]);
        let d = 1 + (i as usize % 3);
        let nl = 6 + (i as usize % 5);
        let nu = 1 + (i as usize % 5);
        let (x, y, xu) = random_instance(s, nl, nu, d, 1.0);
        let ridge = if i % 2 == 0 { 0.0 } else { 1e-3 };
        worst = worst.max(gradient_error(&x, &y, &xu, ridge, rng::derive_seed(s, &[0]))?);
        count += 1;
    }
    out.push(outcome("gradient", worst, GRADIENT_TOL, count, corrupt));

    let mut worst = 0.0f64;
    for i in 0..20u64 {
        let (x, y, xu) = random_instance(rng::derive_seed(seed, &[2, i]), 10, 40, 2, 0.8);
        worst = worst.max(em_worst_decrease(&x, &y, &xu)?);
    }
    let toy = data::generate_gaussian_toy(200, &ToySpec::standard(BoundaryMode::BetweenClusters), seed)?;
    let (lab, rest) = data::split_indices_shuffled(&toy.classes()?, 10, rng::derive_seed(seed, &[3]))?;
    let labeled = toy.subset(&lab);
    worst = worst.max(em_worst_decrease(
        &labeled.x,
        &labeled.hard_labels()?,
        &toy.subset(&rest).x,
    )?);
    out.push(outcome("em-monotone", worst, MONOTONE_SLACK, 21, corrupt));

    let (mut mean_worst, mut cov_worst) = (0.0f64, 0.0f64);
    for i in 0..20u64 {
        let d = 1 + (i as usize % 3);
        let (x, y, xu) = random_instance(rng::derive_seed(seed, &[4, i]), 12, 30, d, 1.0);
        let (m, c) = moment_residuals(&x, &y, &xu)?;
        mean_worst = mean_worst.max(m);
        cov_worst = cov_worst.max(c);
    }
    // One outcome covering both residuals, each against its own tolerance.
    let scaled = (mean_worst / MEAN_RESIDUAL_TOL).max(cov_worst / COVARIANCE_TOL) * MEAN_RESIDUAL_TOL;
    out.push(outcome("mc-constraints", scaled, MEAN_RESIDUAL_TOL, 20, corrupt));

    let mut worst = 0.0f64;
    for i in 0..10u64 {
        let (x, y, _) = random_instance(rng::derive_seed(seed, &[5, i]), 10, 0, 1 + (i as usize % 3), 1.0);
        worst = worst.max(empty_unlabeled_deviation(&x, &y)?);
    }
    out.push(outcome("xu-empty", worst, EQUIVALENCE_TOL, 10, corrupt));

    Ok(out)
}
