//! Semi-supervised fitters for two-class LDA.
//!
//! All fitters take labeled data `(x, y)` with hard labels and unlabeled rows
//! `xu`, and return a [`ModelParams`]. With no unlabeled rows every fitter
//! returns the supervised fit unchanged.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::lda::{self, ModelParams, SoftLabels};
use crate::numkit::{sym_eig, sym_pow_floored, weighted_mean_and_scatter, Matrix, SymMatrix, Vector};

/// Total class weight below which an iterative fit counts as collapsed.
pub const COLLAPSE_WEIGHT: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub max_iter: usize,
    /// Objective-gain tolerance for EM and the implicitly constrained fitter.
    pub tol: f64,
    /// Initial step of the backtracking line search.
    pub step_init: f64,
    /// Smallest step tried before the line search gives up.
    pub min_step: f64,
    /// Covariance ridge `ε`; adds `ε·trace(Σ)/d` to the diagonal.
    pub ridge: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iter: 1000,
            tol: 1e-8,
            step_init: 1.0,
            min_step: 1e-12,
            ridge: 0.0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter < 1 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if !(self.step_init > 0.0) || !(self.min_step > 0.0) {
            return Err(Error::Config("line-search steps must be positive".into()));
        }
        if !(self.ridge >= 0.0) {
            return Err(Error::Config(format!(
                "ridge must be nonnegative, got {}",
                self.ridge
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitTrace {
    pub objective_per_iter: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Class-1 responsibilities of the unlabeled rows at termination.
    pub final_responsibilities: Option<SoftLabels>,
    /// The iterative fit collapsed onto one class and the supervised
    /// solution was returned instead.
    pub fell_back: bool,
}

impl FitTrace {
    fn single(objective: f64) -> Self {
        FitTrace {
            objective_per_iter: vec![objective],
            iterations: 1,
            converged: true,
            final_responsibilities: Some(SoftLabels::default()),
            fell_back: false,
        }
    }

    fn finish(mut self) -> Self {
        self.iterations = self.objective_per_iter.len();
        self
    }

    pub fn final_objective(&self) -> Option<f64> {
        self.objective_per_iter.last().copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Supervised,
    SelfLearning,
    Em,
    MomentConstrained,
    ImplicitlyConstrained,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Supervised,
        Method::SelfLearning,
        Method::Em,
        Method::MomentConstrained,
        Method::ImplicitlyConstrained,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Supervised => "lda",
            Method::SelfLearning => "sllda",
            Method::Em => "emlda",
            Method::MomentConstrained => "mclda",
            Method::ImplicitlyConstrained => "iclda",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::InvalidInput(format!(
                    "unknown method {s:?}; expected one of lda, sllda, emlda, mclda, iclda"
                ))
            })
    }
}

/// Fits with `method`. The trace is `None` for the non-iterative methods.
pub fn fit_method(
    method: Method,
    x: &Matrix,
    y: &SoftLabels,
    xu: &Matrix,
    cfg: &FitConfig,
) -> Result<(ModelParams, Option<FitTrace>)> {
    match method {
        Method::Supervised => fit_supervised(x, y, cfg).map(|t| (t, None)),
        Method::SelfLearning => fit_self_learning(x, y, xu, cfg).map(|(t, tr)| (t, Some(tr))),
        Method::Em => fit_em(x, y, xu, cfg).map(|(t, tr)| (t, Some(tr))),
        Method::MomentConstrained => fit_moment_constrained(x, y, xu, cfg).map(|t| (t, None)),
        Method::ImplicitlyConstrained => {
            fit_implicitly_constrained(x, y, xu, cfg).map(|(t, tr)| (t, Some(tr)))
        }
    }
}

fn check_inputs(x: &Matrix, y: &SoftLabels, xu: &Matrix) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} labeled rows but {} labels",
            x.nrows(),
            y.len()
        )));
    }
    if xu.nrows() > 0 && xu.ncols() != x.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "labeled data has {} features, unlabeled data {}",
            x.ncols(),
            xu.ncols()
        )));
    }
    if y.as_slice().iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidInput("labeled objects need hard labels".into()));
    }
    let (s1, s2) = y.class_weights();
    if s1 == 0.0 || s2 == 0.0 {
        return Err(Error::EmptyClass);
    }
    Ok(())
}

fn stack_rows(a: &Matrix, b: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(a.nrows() + b.nrows(), a.ncols());
    out.rows_mut(0, a.nrows()).copy_from(a);
    out.rows_mut(a.nrows(), b.nrows()).copy_from(b);
    out
}

fn collapsed(r: &SoftLabels) -> bool {
    let (s1, s2) = r.class_weights();
    s1 < COLLAPSE_WEIGHT || s2 < COLLAPSE_WEIGHT
}

fn fallback(x: &Matrix, y: &SoftLabels, sup: ModelParams) -> Result<(ModelParams, FitTrace)> {
    let ll = lda::log_likelihood(&sup, x, y)?;
    let trace = FitTrace {
        objective_per_iter: vec![ll],
        iterations: 1,
        converged: false,
        final_responsibilities: None,
        fell_back: true,
    };
    Ok((sup, trace))
}

pub fn fit_supervised(x: &Matrix, y: &SoftLabels, cfg: &FitConfig) -> Result<ModelParams> {
    check_inputs(x, y, &Matrix::zeros(0, x.ncols()))?;
    lda::fit_with_ridge(x, y, cfg.ridge)
}

/// Self-learning: impute hard labels with the current model, refit on
/// labeled plus imputed data, repeat until the imputed labels stop changing.
/// The objective recorded per iteration is the log-likelihood on labeled
/// plus imputed data.
pub fn fit_self_learning(
    x: &Matrix,
    y: &SoftLabels,
    xu: &Matrix,
    cfg: &FitConfig,
) -> Result<(ModelParams, FitTrace)> {
    check_inputs(x, y, xu)?;
    let sup = lda::fit_with_ridge(x, y, cfg.ridge)?;
    if xu.nrows() == 0 {
        let ll = lda::log_likelihood(&sup, x, y)?;
        return Ok((sup, FitTrace::single(ll)));
    }
    let xe = stack_rows(x, xu);
    let mut labels = lda::predict(&sup, xu)?;
    let mut theta = sup.clone();
    let mut trace = FitTrace::default();
    while trace.objective_per_iter.len() < cfg.max_iter {
        let ye = y.concat(&SoftLabels::from_classes(&labels));
        if collapsed(&ye) {
            return fallback(x, y, sup);
        }
        theta = lda::fit_with_ridge(&xe, &ye, cfg.ridge)?;
        let prepared = theta.prepare()?;
        trace.objective_per_iter.push(prepared.log_likelihood(&xe, &ye)?);
        let next: Vec<_> = prepared
            .posterior(xu)?
            .into_iter()
            .map(|p| {
                if p >= 0.5 {
                    lda::Class::One
                } else {
                    lda::Class::Two
                }
            })
            .collect();
        if next == labels {
            trace.converged = true;
            break;
        }
        labels = next;
    }
    trace.final_responsibilities = Some(SoftLabels::from_classes(&labels));
    Ok((theta, trace.finish()))
}

/// Expectation maximization on the marginal likelihood, starting from the
/// supervised fit. Labeled rows keep their hard labels throughout; only
/// unlabeled rows get soft responsibilities.
pub fn fit_em(x: &Matrix, y: &SoftLabels, xu: &Matrix, cfg: &FitConfig) -> Result<(ModelParams, FitTrace)> {
    check_inputs(x, y, xu)?;
    let sup = lda::fit_with_ridge(x, y, cfg.ridge)?;
    if xu.nrows() == 0 {
        let ll = lda::log_likelihood(&sup, x, y)?;
        return Ok((sup, FitTrace::single(ll)));
    }
    let xe = stack_rows(x, xu);
    let mut theta = sup.clone();
    let mut prev = lda::marginal_log_likelihood(&theta, x, y, xu)?;
    let mut trace = FitTrace {
        objective_per_iter: vec![prev],
        ..FitTrace::default()
    };
    let mut resp = SoftLabels::default();
    while trace.objective_per_iter.len() < cfg.max_iter {
        resp = SoftLabels::new(lda::posterior(&theta, xu)?)?;
        let ye = y.concat(&resp);
        if collapsed(&ye) {
            return fallback(x, y, sup);
        }
        theta = lda::fit_with_ridge(&xe, &ye, cfg.ridge)?;
        let cur = lda::marginal_log_likelihood(&theta, x, y, xu)?;
        trace.objective_per_iter.push(cur);
        if cur - prev < cfg.tol {
            trace.converged = true;
            break;
        }
        prev = cur;
    }
    trace.final_responsibilities = Some(resp);
    Ok((theta, trace.finish()))
}

/// Label-free statistics used by the moment-constrained fitter.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentStats {
    /// Mean over labeled and unlabeled rows.
    pub mu_t: Vector,
    /// Covariance over labeled and unlabeled rows (1/N).
    pub theta_cov: SymMatrix,
    /// Covariance over labeled rows only (1/N).
    pub sigma_t_labeled: SymMatrix,
}

fn mean_and_covariance(x: &Matrix) -> Result<(Vector, SymMatrix)> {
    let (mean, scatter, n) = weighted_mean_and_scatter(x, &vec![1.0; x.nrows()])?;
    Ok((mean, scatter.scale(1.0 / n)))
}

pub fn moment_stats(x: &Matrix, xu: &Matrix) -> Result<MomentStats> {
    if x.nrows() == 0 {
        return Err(Error::InvalidInput(
            "moment statistics need at least one labeled row".into(),
        ));
    }
    if xu.nrows() > 0 && xu.ncols() != x.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "labeled data has {} features, unlabeled data {}",
            x.ncols(),
            xu.ncols()
        )));
    }
    let (_, sigma_t_labeled) = mean_and_covariance(x)?;
    let (mu_t, theta_cov) = if xu.nrows() == 0 {
        mean_and_covariance(x)?
    } else {
        mean_and_covariance(&stack_rows(x, xu))?
    };
    Ok(MomentStats {
        mu_t,
        theta_cov,
        sigma_t_labeled,
    })
}

/// `Θ^{1/2} Σ_t^{-1/2} Σ Σ_t^{-1/2} Θ^{1/2}`: maps the labeled total
/// covariance onto the all-data total covariance and carries `sigma` along.
pub fn moment_covariance_transform(sigma: &SymMatrix, stats: &MomentStats) -> Result<SymMatrix> {
    if !(sym_eig(&stats.sigma_t_labeled)?.max_eigenvalue() > 0.0) {
        return Err(Error::SingularCovariance);
    }
    let theta_half = sym_pow_floored(&stats.theta_cov, 0.5)?;
    let st_inv_half = sym_pow_floored(&stats.sigma_t_labeled, -0.5)?;
    let m = theta_half.as_matrix() * st_inv_half.as_matrix();
    SymMatrix::new(&m * sigma.as_matrix() * m.transpose())
}

/// Moment-constrained fit: supervised estimates shifted so the prior-weighted
/// class means equal the all-data mean, and the covariance transformed by
/// [`moment_covariance_transform`]. Priors are unchanged.
pub fn fit_moment_constrained(
    x: &Matrix,
    y: &SoftLabels,
    xu: &Matrix,
    cfg: &FitConfig,
) -> Result<ModelParams> {
    check_inputs(x, y, xu)?;
    let sup = lda::fit_with_ridge(x, y, cfg.ridge)?;
    if xu.nrows() == 0 {
        return Ok(sup);
    }
    let stats = moment_stats(x, xu)?;
    let shift = &sup.mu1 * sup.pi1 + &sup.mu2 * sup.pi2 - &stats.mu_t;
    let sigma = moment_covariance_transform(&sup.sigma, &stats)?;
    Ok(ModelParams {
        pi1: sup.pi1,
        pi2: sup.pi2,
        mu1: &sup.mu1 - &shift,
        mu2: &sup.mu2 - &shift,
        sigma,
    })
}

/// The implicitly constrained objective as a function of the unlabeled
/// responsibilities: refit on all rows with responsibilities `yu`, then score
/// the labeled rows only.
#[derive(Debug, Clone)]
pub struct ImplicitObjective<'a> {
    x: &'a Matrix,
    y: &'a SoftLabels,
    xu: &'a Matrix,
    xe: Matrix,
    ridge: f64,
}

impl<'a> ImplicitObjective<'a> {
    pub fn new(x: &'a Matrix, y: &'a SoftLabels, xu: &'a Matrix, ridge: f64) -> Result<Self> {
        check_inputs(x, y, xu)?;
        Ok(ImplicitObjective {
            x,
            y,
            xu,
            xe: stack_rows(x, xu),
            ridge,
        })
    }

    fn check(&self, yu: &SoftLabels) -> Result<()> {
        if yu.len() != self.xu.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} responsibilities for {} unlabeled rows",
                yu.len(),
                self.xu.nrows()
            )));
        }
        Ok(())
    }

    pub fn params(&self, yu: &SoftLabels) -> Result<ModelParams> {
        self.check(yu)?;
        lda::fit_with_ridge(&self.xe, &self.y.concat(yu), self.ridge)
    }

    pub fn value(&self, yu: &SoftLabels) -> Result<f64> {
        lda::log_likelihood(&self.params(yu)?, self.x, self.y)
    }

    /// Objective and its exact gradient with respect to `yu`.
    pub fn value_and_gradient(&self, yu: &SoftLabels) -> Result<(f64, Vec<f64>)> {
        let theta = self.params(yu)?;
        let prepared = theta.prepare()?;
        let value = prepared.log_likelihood(self.x, self.y)?;

        let d = self.x.ncols();
        let n = self.xe.nrows() as f64;
        let s1 = theta.pi1 * n;
        let s2 = theta.pi2 * n;
        let precision = prepared.factor().precision();

        // ∂L/∂μ_c and ∂L/∂Σ on the labeled rows
        let mut resid1 = Vector::zeros(d);
        let mut resid2 = Vector::zeros(d);
        let mut scatter = Matrix::zeros(d, d);
        let (mut n1, mut n2) = (0.0, 0.0);
        for (i, &yi) in self.y.as_slice().iter().enumerate() {
            let xi = self.x.row(i).transpose();
            let a1 = &xi - &theta.mu1;
            let a2 = &xi - &theta.mu2;
            scatter += &a1 * a1.transpose() * yi + &a2 * a2.transpose() * (1.0 - yi);
            resid1 += a1 * yi;
            resid2 += a2 * (1.0 - yi);
            n1 += yi;
            n2 += 1.0 - yi;
        }
        let g_mu1 = &precision * resid1;
        let g_mu2 = &precision * resid2;
        let mut g_sigma = (&precision * scatter * &precision - &precision * (n1 + n2)) * 0.5;
        if self.ridge != 0.0 {
            let shift = self.ridge * g_sigma.trace() / d as f64;
            for k in 0..d {
                g_sigma[(k, k)] += shift;
            }
        }

        let prior_term = n1 / s1 - n2 / s2;
        let grad = (0..self.xu.nrows())
            .map(|j| {
                let xj = self.xu.row(j).transpose();
                let a1 = &xj - &theta.mu1;
                let a2 = &xj - &theta.mu2;
                let mean_term = g_mu1.dot(&a1) / s1 - g_mu2.dot(&a2) / s2;
                let cov_term = (a1.dot(&(&g_sigma * &a1)) - a2.dot(&(&g_sigma * &a2))) / n;
                prior_term + mean_term + cov_term
            })
            .collect();
        Ok((value, grad))
    }
}

/// Objective and gradient of the implicitly constrained problem at `yu`.
pub fn icl_objective_and_gradient(
    yu: &SoftLabels,
    x: &Matrix,
    y: &SoftLabels,
    xu: &Matrix,
) -> Result<(f64, Vec<f64>)> {
    ImplicitObjective::new(x, y, xu, 0.0)?.value_and_gradient(yu)
}

fn project_unit_box(v: &mut [f64]) {
    for r in v {
        *r = r.clamp(0.0, 1.0);
    }
}

/// Projected gradient ascent on the implicitly constrained objective over
/// `yu ∈ [0,1]^{N_u}`, initialized at the supervised posterior. Each step
/// starts at `step_init` and halves until the projected candidate strictly
/// improves the objective.
pub fn fit_implicitly_constrained(
    x: &Matrix,
    y: &SoftLabels,
    xu: &Matrix,
    cfg: &FitConfig,
) -> Result<(ModelParams, FitTrace)> {
    check_inputs(x, y, xu)?;
    let sup = lda::fit_with_ridge(x, y, cfg.ridge)?;
    if xu.nrows() == 0 {
        let ll = lda::log_likelihood(&sup, x, y)?;
        return Ok((sup, FitTrace::single(ll)));
    }
    let objective = ImplicitObjective::new(x, y, xu, cfg.ridge)?;
    let mut yu = SoftLabels::new(lda::posterior(&sup, xu)?)?;
    let (mut value, mut grad) = objective.value_and_gradient(&yu)?;
    let mut trace = FitTrace {
        objective_per_iter: vec![value],
        ..FitTrace::default()
    };
    while trace.objective_per_iter.len() < cfg.max_iter {
        let mut step = cfg.step_init;
        let mut accepted = None;
        while step >= cfg.min_step {
            let mut cand: Vec<f64> = yu
                .as_slice()
                .iter()
                .zip(&grad)
                .map(|(r, g)| r + step * g)
                .collect();
            project_unit_box(&mut cand);
            if cand.as_slice() == yu.as_slice() {
                break;
            }
            let cand = SoftLabels::new(cand)?;
            let v = objective.value(&cand)?;
            if v > value {
                accepted = Some((cand, v));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, v)) = accepted else {
            trace.converged = true;
            break;
        };
        let gain = v - value;
        yu = cand;
        value = v;
        trace.objective_per_iter.push(value);
        if gain < cfg.tol {
            trace.converged = true;
            break;
        }
        grad = objective.value_and_gradient(&yu)?.1;
    }
    let theta = objective.params(&yu)?;
    trace.final_responsibilities = Some(yu);
    Ok((theta, trace.finish()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, StandardNormal};

    fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
        rand_chacha::ChaCha8Rng::seed_from_u64(seed)
    }

    /// Labeled rows alternate classes, class 1 shifted by `+sep` in every coordinate.
    fn instance(seed: u64, nl: usize, nu: usize, d: usize, sep: f64) -> (Matrix, SoftLabels, Matrix) {
        let mut r = rng(seed);
        let mut draw = |c: bool| -> Vec<f64> {
            (0..d)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut r);
                    z + if c { sep } else { -sep }
                })
                .collect()
        };
        let mut xl = Vec::new();
        let mut yl = Vec::new();
        for i in 0..nl {
            let c = i % 2 == 0;
            xl.extend(draw(c));
            yl.push(if c { 1.0 } else { 0.0 });
        }
        let mut xu = Vec::new();
        for j in 0..nu {
            xu.extend(draw(j % 2 == 0));
        }
        (
            Matrix::from_row_slice(nl, d, &xl),
            SoftLabels::new(yl).unwrap(),
            Matrix::from_row_slice(nu, d, &xu),
        )
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("qda".parse::<Method>().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(FitConfig::default().validate().is_ok());
        let bad = FitConfig {
            max_iter: 0,
            ..FitConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = FitConfig {
            tol: 0.0,
            ..FitConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn rejects_missing_class_and_soft_labeled() {
        let x = Matrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let xu = Matrix::zeros(0, 1);
        let cfg = FitConfig::default();
        let y = SoftLabels::new(vec![1.0, 1.0]).unwrap();
        assert!(matches!(fit_em(&x, &y, &xu, &cfg), Err(Error::EmptyClass)));
        let y = SoftLabels::new(vec![1.0, 0.5]).unwrap();
        assert!(fit_self_learning(&x, &y, &xu, &cfg).is_err());
    }

    #[test]
    fn empty_unlabeled_gives_supervised() {
        let (x, y, _) = instance(1, 8, 0, 2, 1.0);
        let xu = Matrix::zeros(0, 2);
        let cfg = FitConfig::default();
        let sup = lda::fit(&x, &y).unwrap();
        for m in Method::ALL {
            let (t, trace) = fit_method(m, &x, &y, &xu, &cfg).unwrap();
            assert!(t.max_abs_diff(&sup) <= 1e-12, "{m}");
            if let Some(tr) = trace {
                assert_eq!(tr.iterations, 1);
                assert_eq!(tr.objective_per_iter.len(), 1);
                assert!(tr.converged);
            }
        }
    }

    #[test]
    fn self_learning_wide_margin_fixpoint() {
        let x = Matrix::from_row_slice(4, 1, &[5.0, 6.0, -5.0, -6.0]);
        let y = SoftLabels::new(vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        let xu = Matrix::from_row_slice(2, 1, &[4.0, -4.0]);
        let sup = lda::fit(&x, &y).unwrap();
        let initial = lda::predict(&sup, &xu).unwrap();
        let (_, trace) = fit_self_learning(&x, &y, &xu, &FitConfig::default()).unwrap();
        assert!(trace.converged);
        assert!(trace.iterations <= 2);
        assert_eq!(trace.final_responsibilities.unwrap().to_classes(), initial);
    }

    #[test]
    fn self_learning_terminates_at_fixpoint() {
        for seed in 0..20 {
            let (x, y, xu) = instance(seed, 6, 30, 2, 0.5);
            let (theta, trace) = fit_self_learning(&x, &y, &xu, &FitConfig::default()).unwrap();
            assert_eq!(trace.iterations, trace.objective_per_iter.len());
            if trace.converged {
                let labels = trace.final_responsibilities.unwrap().to_classes();
                assert_eq!(lda::predict(&theta, &xu).unwrap(), labels);
            }
        }
    }

    #[test]
    fn em_is_monotone_on_random_instances() {
        for seed in 0..50 {
            let mut r = rng(1000 + seed);
            let d = r.random_range(1..=3);
            let nl = r.random_range(4..=10);
            let nu = r.random_range(1..=20);
            let (x, y, xu) = instance(seed, nl, nu, d, 0.8);
            let (_, trace) = fit_em(&x, &y, &xu, &FitConfig::default()).unwrap();
            assert_eq!(trace.iterations, trace.objective_per_iter.len());
            for w in trace.objective_per_iter.windows(2) {
                assert!(w[1] >= w[0] - 1e-9, "seed {seed}: {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn em_separates_well_separated_clusters() {
        let (x, y, xu) = instance(4, 4, 40, 2, 4.0);
        let (_, trace) = fit_em(&x, &y, &xu, &FitConfig::default()).unwrap();
        assert!(trace.converged);
        let resp = trace.final_responsibilities.unwrap();
        for (j, r) in resp.as_slice().iter().enumerate() {
            let truth = if j % 2 == 0 { 1.0 } else { 0.0 };
            assert!((r - truth).abs() < 1e-3, "row {j}: {r}");
        }
    }

    #[test]
    fn moment_stats_examples() {
        let (x, _, xu) = instance(2, 3, 3, 2, 1.0);
        let s = moment_stats(&x, &Matrix::zeros(0, 2)).unwrap();
        assert_eq!(s.theta_cov, s.sigma_t_labeled);

        let s = moment_stats(&x, &x).unwrap();
        assert!((s.theta_cov.as_matrix() - s.sigma_t_labeled.as_matrix()).amax() < 1e-14);

        // naive recomputation over the six stacked rows
        let s = moment_stats(&x, &xu).unwrap();
        let rows: Vec<Vector> = (0..3)
            .map(|i| x.row(i).transpose())
            .chain((0..3).map(|i| xu.row(i).transpose()))
            .collect();
        let mut mean = Vector::zeros(2);
        for r in &rows {
            mean += r;
        }
        mean /= 6.0;
        let mut cov = Matrix::zeros(2, 2);
        for r in &rows {
            cov += (r - &mean) * (r - &mean).transpose();
        }
        cov /= 6.0;
        assert!((&s.mu_t - mean).amax() < 1e-12);
        assert!((s.theta_cov.as_matrix() - cov).amax() < 1e-12);
    }

    #[test]
    fn moment_constrained_properties() {
        let cfg = FitConfig::default();
        for seed in 0..20 {
            let (x, y, xu) = instance(seed, 8, 25, 3, 1.0);
            let stats = moment_stats(&x, &xu).unwrap();
            let t = fit_moment_constrained(&x, &y, &xu, &cfg).unwrap();
            let resid = &t.mu1 * t.pi1 + &t.mu2 * t.pi2 - &stats.mu_t;
            assert!(resid.norm() < 1e-10);
            let mapped = moment_covariance_transform(&stats.sigma_t_labeled, &stats).unwrap();
            assert!((mapped.as_matrix() - stats.theta_cov.as_matrix()).amax() < 1e-8);
            let sup = lda::fit(&x, &y).unwrap();
            assert_eq!((t.pi1, t.pi2), (sup.pi1, sup.pi2));
        }
    }

    #[test]
    fn moment_constrained_fixed_point_without_unlabeled() {
        let (x, y, _) = instance(3, 10, 0, 2, 1.0);
        let sup = lda::fit(&x, &y).unwrap();
        let stats = moment_stats(&x, &Matrix::zeros(0, 2)).unwrap();
        let mapped = moment_covariance_transform(&sup.sigma, &stats).unwrap();
        assert!((mapped.as_matrix() - sup.sigma.as_matrix()).amax() < 1e-10);
    }

    /// Central finite differences of the objective, independent of the analytic route.
    fn fd_gradient(obj: &ImplicitObjective, yu: &[f64], h: f64) -> Vec<f64> {
        (0..yu.len())
            .map(|j| {
                let mut up = yu.to_vec();
                let mut dn = yu.to_vec();
                up[j] += h;
                dn[j] -= h;
                let fu = obj.value(&SoftLabels::new(up).unwrap()).unwrap();
                let fd = obj.value(&SoftLabels::new(dn).unwrap()).unwrap();
                (fu - fd) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..20 {
            let mut r = rng(500 + seed);
            let d = r.random_range(1..=3);
            let nl = r.random_range(4..=10);
            let nu = r.random_range(1..=5);
            let (x, y, xu) = instance(seed, nl, nu, d, 0.7);
            let yu: Vec<f64> = (0..nu).map(|_| r.random_range(0.05..0.95)).collect();
            for ridge in [0.0, 0.1] {
                let obj = ImplicitObjective::new(&x, &y, &xu, ridge).unwrap();
                let (_, g) = obj
                    .value_and_gradient(&SoftLabels::new(yu.clone()).unwrap())
                    .unwrap();
                let fd = fd_gradient(&obj, &yu, 1e-5);
                for (a, b) in g.iter().zip(&fd) {
                    let rel = (a - b).abs() / a.abs().max(b.abs()).max(1e-8);
                    assert!(rel < 1e-5, "seed {seed} ridge {ridge}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn implicit_ascent_never_decreases() {
        for seed in 0..10 {
            let (x, y, xu) = instance(seed, 6, 40, 2, 0.6);
            let (theta, trace) = fit_implicitly_constrained(&x, &y, &xu, &FitConfig::default()).unwrap();
            let objs = &trace.objective_per_iter;
            assert!(objs.windows(2).all(|w| w[1] > w[0]));
            let sup = lda::fit(&x, &y).unwrap();
            let start = lda::log_likelihood(
                &lda::fit(
                    &stack_rows(&x, &xu),
                    &y.concat(&SoftLabels::new(lda::posterior(&sup, &xu).unwrap()).unwrap()),
                )
                .unwrap(),
                &x,
                &y,
            )
            .unwrap();
            assert_relative_eq!(objs[0], start, epsilon = 1e-10);
            let fin = lda::log_likelihood(&theta, &x, &y).unwrap();
            assert_relative_eq!(fin, *objs.last().unwrap(), epsilon = 1e-10);
            assert!(fin >= start);
        }
    }

    #[test]
    fn label_swap_equivariance() {
        let cfg = FitConfig::default();
        let (x, y, xu) = instance(12, 8, 30, 2, 0.7);
        let yf = y.flipped();
        for m in Method::ALL {
            let (a, ta) = fit_method(m, &x, &y, &xu, &cfg).unwrap();
            let (b, tb) = fit_method(m, &x, &yf, &xu, &cfg).unwrap();
            assert!(a.swapped().max_abs_diff(&b) < 1e-6, "{m}");
            if m == Method::ImplicitlyConstrained {
                let fa = ta.unwrap().final_objective().unwrap();
                let fb = tb.unwrap().final_objective().unwrap();
                assert!((fa - fb).abs() < 1e-6);
            }
        }
    }
}
