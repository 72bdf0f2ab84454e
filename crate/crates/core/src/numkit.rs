//! Dense symmetric-matrix numerics and Gaussian log densities.
//!
//! Every routine that inverts or takes powers of a covariance matrix goes
//! through an eigendecomposition whose eigenvalues are floored at
//! `max(1e-8 * max_eigenvalue, 1e-12)`. Small labeled samples in high
//! dimension routinely produce rank-deficient covariance estimates, and the
//! floor keeps densities and matrix roots finite in that regime.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub const RELATIVE_EIGEN_FLOOR: f64 = 1e-8;
pub const ABSOLUTE_EIGEN_FLOOR: f64 = 1e-12;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Square symmetric matrix. Construction symmetrizes the input as `(M + Mᵀ)/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(Matrix);

impl SymMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "expected a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(Error::InvalidInput("matrix dimension must be at least 1".into()));
        }
        let sym = (&m + m.transpose()) * 0.5;
        Ok(SymMatrix(sym))
    }

    pub fn identity(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be at least 1");
        SymMatrix(Matrix::identity(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        assert!(!diag.is_empty(), "dimension must be at least 1");
        SymMatrix(Matrix::from_diagonal(&Vector::from_column_slice(diag)))
    }

    /// Builds from row-major entries.
    pub fn from_row_slice(dim: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                entries.len()
            )));
        }
        Self::new(Matrix::from_row_slice(dim, dim, entries))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn scale(&self, s: f64) -> Self {
        SymMatrix(&self.0 * s)
    }

    /// Adds `eps * trace / dim` to the diagonal.
    pub fn with_ridge(&self, eps: f64) -> Self {
        if eps == 0.0 {
            return self.clone();
        }
        let shift = eps * self.trace() / self.dim() as f64;
        let mut m = self.0.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += shift;
        }
        SymMatrix(m)
    }

    /// Congruence `A · self · Aᵀ` for symmetric `A`.
    pub fn sandwich(&self, a: &SymMatrix) -> SymMatrix {
        let m = &a.0 * &self.0 * &a.0;
        SymMatrix((&m + m.transpose()) * 0.5)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Spectral decomposition with eigenvalues in ascending order.
#[derive(Debug, Clone)]
pub struct EigDecomp {
    pub eigenvalues: Vector,
    /// Orthonormal eigenvectors stored as columns, in the order of `eigenvalues`.
    pub eigenvectors: Matrix,
}

impl EigDecomp {
    pub fn reconstruct(&self) -> Matrix {
        let v = &self.eigenvectors;
        v * Matrix::from_diagonal(&self.eigenvalues) * v.transpose()
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }

    /// `V · diag(f(λ)) · Vᵀ`.
    fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for (j, &l) in self.eigenvalues.iter().enumerate() {
            let s = f(l);
            scaled.column_mut(j).scale_mut(s);
        }
        let m = scaled * v.transpose();
        SymMatrix((&m + m.transpose()) * 0.5)
    }
}

pub fn sym_eig(m: &SymMatrix) -> Result<EigDecomp> {
    if !m.is_finite() {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let eig = SymmetricEigen::new(m.0.clone());
    let mut order: Vec<usize> = (0..m.dim()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = Vector::from_iterator(m.dim(), order.iter().map(|&i| eig.eigenvalues[i]));
    let eigenvectors = Matrix::from_columns(
        &order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    Ok(EigDecomp {
        eigenvalues,
        eigenvectors,
    })
}

/// Floor applied to eigenvalues: `max(1e-8 * max_eigenvalue, 1e-12)`.
pub fn eigen_floor(max_eigenvalue: f64) -> f64 {
    (RELATIVE_EIGEN_FLOOR * max_eigenvalue).max(ABSOLUTE_EIGEN_FLOOR)
}

/// `V · diag(max(λ, floor)^p) · Vᵀ`.
pub fn sym_pow(m: &SymMatrix, p: f64, floor: f64) -> Result<SymMatrix> {
    if !(floor > 0.0) {
        return Err(Error::InvalidInput(format!(
            "floor must be positive, got {floor}"
        )));
    }
    if !p.is_finite() {
        return Err(Error::InvalidInput(format!("exponent must be finite, got {p}")));
    }
    let eig = sym_eig(m)?;
    Ok(eig.map_spectrum(|l| l.max(floor).powf(p)))
}

/// [`sym_pow`] with the default relative eigenvalue floor.
pub fn sym_pow_floored(m: &SymMatrix, p: f64) -> Result<SymMatrix> {
    let eig = sym_eig(m)?;
    let floor = eigen_floor(eig.max_eigenvalue());
    Ok(eig.map_spectrum(|l| l.max(floor).powf(p)))
}

/// Whitening transform of a covariance matrix, reused across many density
/// evaluations with the same covariance.
#[derive(Debug, Clone)]
pub struct CovarianceFactor {
    eig: EigDecomp,
    /// `diag(λ^{-1/2}) · Vᵀ`
    whitener: Matrix,
    log_det: f64,
}

impl CovarianceFactor {
    pub fn new(sigma: &SymMatrix) -> Result<Self> {
        let mut eig = sym_eig(sigma).map_err(|_| Error::SingularCovariance)?;
        let max = eig.max_eigenvalue();
        if !(max > 0.0) {
            return Err(Error::SingularCovariance);
        }
        let floor = eigen_floor(max);
        eig.eigenvalues.apply(|l| *l = l.max(floor));
        let mut whitener = eig.eigenvectors.transpose();
        for (i, &l) in eig.eigenvalues.iter().enumerate() {
            whitener.row_mut(i).scale_mut(1.0 / l.sqrt());
        }
        let log_det = eig.eigenvalues.iter().map(|l| l.ln()).sum();
        Ok(CovarianceFactor {
            eig,
            whitener,
            log_det,
        })
    }

    pub fn dim(&self) -> usize {
        self.whitener.nrows()
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Floored inverse covariance.
    pub fn precision(&self) -> Matrix {
        self.whitener.transpose() * &self.whitener
    }

    pub fn floored_eigenvalues(&self) -> &Vector {
        &self.eig.eigenvalues
    }

    fn log_norm(&self) -> f64 {
        -0.5 * (self.dim() as f64 * LN_2PI + self.log_det)
    }

    pub fn log_density(&self, x: &Vector, mu: &Vector) -> f64 {
        let z = &self.whitener * (x - mu);
        self.log_norm() - 0.5 * z.norm_squared()
    }

    /// Log density of every row of `x` under `N(mu, Σ)`.
    pub fn log_density_rows(&self, x: &Matrix, mu: &Vector) -> Vec<f64> {
        let mut centered = x.clone();
        for mut row in centered.row_iter_mut() {
            row -= mu.transpose();
        }
        let z = centered * self.whitener.transpose();
        let norm = self.log_norm();
        z.row_iter().map(|r| norm - 0.5 * r.norm_squared()).collect()
    }
}

pub fn log_mvn_density(x: &Vector, mu: &Vector, sigma: &SymMatrix) -> Result<f64> {
    if x.len() != mu.len() || x.len() != sigma.dim() {
        return Err(Error::DimensionMismatch(format!(
            "x has {} entries, mu {}, sigma is {}x{}",
            x.len(),
            mu.len(),
            sigma.dim(),
            sigma.dim()
        )));
    }
    Ok(CovarianceFactor::new(sigma)?.log_density(x, mu))
}

/// `ln(e^a + e^b)` without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Weighted mean, unnormalized weighted scatter `Σ wᵢ(xᵢ−m)(xᵢ−m)ᵀ`, and
/// the weight sum.
pub fn weighted_mean_and_scatter(x: &Matrix, w: &[f64]) -> Result<(Vector, SymMatrix, f64)> {
    if w.len() != x.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} rows",
            w.len(),
            x.nrows()
        )));
    }
    if let Some(bad) = w.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "weights must be finite and nonnegative, got {bad}"
        )));
    }
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(Error::EmptyClass);
    }
    let wv = Vector::from_column_slice(w);
    let mean = x.tr_mul(&wv) / total;
    let mut b = x.clone();
    for (i, mut row) in b.row_iter_mut().enumerate() {
        row -= mean.transpose();
        row *= w[i].sqrt();
    }
    let scatter = SymMatrix::new(b.tr_mul(&b))?;
    Ok((mean, scatter, total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn frob_rel(a: &Matrix, b: &Matrix) -> f64 {
        (a - b).norm() / b.norm().max(1e-300)
    }

    #[test]
    fn eig_identity_and_diagonal() {
        let e = sym_eig(&SymMatrix::identity(2)).unwrap();
        assert_eq!(e.eigenvalues.as_slice(), &[1.0, 1.0]);
        let e = sym_eig(&SymMatrix::from_diagonal(&[3.0, 2.0])).unwrap();
        assert_relative_eq!(e.eigenvalues[0], 2.0, epsilon = 1e-14);
        assert_relative_eq!(e.eigenvalues[1], 3.0, epsilon = 1e-14);
    }

    #[test]
    fn eig_two_by_two_char_poly() {
        // (2-λ)² - 1 = 0 → λ ∈ {1, 3}
        let m = SymMatrix::from_row_slice(2, &[2.0, 1.0, 1.0, 2.0]).unwrap();
        let e = sym_eig(&m).unwrap();
        assert_relative_eq!(e.eigenvalues[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(e.eigenvalues[1], 3.0, epsilon = 1e-12);
        assert!(frob_rel(&e.reconstruct(), m.as_matrix()) < 1e-8);
        let vtv = e.eigenvectors.transpose() * &e.eigenvectors;
        assert!((vtv - Matrix::identity(2, 2)).norm() < 1e-8);
    }

    #[test]
    fn eig_rejects_non_finite() {
        let m = SymMatrix::from_row_slice(2, &[1.0, f64::NAN, f64::NAN, 1.0]).unwrap();
        assert!(matches!(sym_eig(&m), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn construction_symmetrizes() {
        let m = SymMatrix::from_row_slice(2, &[1.0, 2.0, 0.0, 1.0]).unwrap();
        assert_eq!(m.as_matrix()[(0, 1)], 1.0);
        assert_eq!(m.as_matrix()[(1, 0)], 1.0);
        assert!(SymMatrix::new(Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn pow_examples() {
        let id = SymMatrix::identity(3);
        let r = sym_pow(&id, 0.5, 1e-12).unwrap();
        assert!((r.as_matrix() - Matrix::identity(3, 3)).norm() < 1e-14);

        let m = SymMatrix::from_diagonal(&[4.0, 9.0]);
        let r = sym_pow(&m, 0.5, 1e-12).unwrap();
        assert_relative_eq!(r.as_matrix()[(0, 0)], 2.0, epsilon = 1e-12);
        assert_relative_eq!(r.as_matrix()[(1, 1)], 3.0, epsilon = 1e-12);
        assert_relative_eq!(r.as_matrix()[(0, 1)], 0.0, epsilon = 1e-12);

        let r = sym_pow(&m, -0.5, 1e-12).unwrap();
        assert_relative_eq!(r.as_matrix()[(0, 0)], 0.5, epsilon = 1e-12);
        assert_relative_eq!(r.as_matrix()[(1, 1)], 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn pow_rejects_bad_floor() {
        assert!(sym_pow(&SymMatrix::identity(2), 0.5, 0.0).is_err());
    }

    #[test]
    fn pow_floors_rank_deficient() {
        let m = SymMatrix::from_row_slice(2, &[1.0, 1.0, 1.0, 1.0]).unwrap();
        let r = sym_pow_floored(&m, -0.5).unwrap();
        assert!(r.is_finite());
    }

    #[test]
    fn density_examples() {
        let d = log_mvn_density(
            &Vector::from_vec(vec![0.0]),
            &Vector::from_vec(vec![0.0]),
            &SymMatrix::identity(1),
        )
        .unwrap();
        assert_relative_eq!(d, -0.5 * (2.0 * std::f64::consts::PI).ln(), epsilon = 1e-14);
        assert_relative_eq!(d, -0.918_938_533_204_672_7, epsilon = 1e-12);

        for dim in 1..6 {
            let x = Vector::from_element(dim, 0.3);
            let d = log_mvn_density(&x, &x, &SymMatrix::identity(dim)).unwrap();
            assert_relative_eq!(d, -(dim as f64 / 2.0) * LN_2PI, epsilon = 1e-12);
        }

        let x = Vector::from_vec(vec![1.0, 1.0]);
        let d = log_mvn_density(&x, &x, &SymMatrix::identity(2).scale(0.6)).unwrap();
        assert_relative_eq!(d, -(2.0 * std::f64::consts::PI * 0.6).ln(), epsilon = 1e-12);
        assert_relative_eq!(d, -1.327, epsilon = 1e-3);
    }

    #[test]
    fn density_matches_closed_form_off_mode() {
        // 1-d: N(x | m, s²) = exp(-(x-m)²/(2s²)) / sqrt(2π s²)
        let (x, m, s2) = (1.7, -0.4, 2.5);
        let expected = -0.5 * (2.0 * std::f64::consts::PI * s2).ln() - (x - m) * (x - m) / (2.0 * s2);
        let got = log_mvn_density(
            &Vector::from_vec(vec![x]),
            &Vector::from_vec(vec![m]),
            &SymMatrix::from_diagonal(&[s2]),
        )
        .unwrap();
        assert_relative_eq!(got, expected, epsilon = 1e-12);
    }

    #[test]
    fn density_singular_and_mismatch() {
        let zero = SymMatrix::new(Matrix::zeros(2, 2)).unwrap();
        let x = Vector::zeros(2);
        assert!(matches!(
            log_mvn_density(&x, &x, &zero),
            Err(Error::SingularCovariance)
        ));
        assert!(matches!(
            log_mvn_density(&Vector::zeros(3), &x, &SymMatrix::identity(2)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn batch_density_matches_single() {
        let sigma = SymMatrix::from_row_slice(2, &[2.0, 0.3, 0.3, 0.5]).unwrap();
        let f = CovarianceFactor::new(&sigma).unwrap();
        let x = Matrix::from_row_slice(3, 2, &[0.0, 1.0, -1.0, 2.0, 0.5, 0.5]);
        let mu = Vector::from_vec(vec![0.2, -0.1]);
        let rows = f.log_density_rows(&x, &mu);
        for (i, v) in rows.iter().enumerate() {
            let single = log_mvn_density(&x.row(i).transpose(), &mu, &sigma).unwrap();
            assert_relative_eq!(*v, single, epsilon = 1e-12);
        }
    }

    #[test]
    fn log_add_exp_is_stable() {
        assert_relative_eq!(
            log_add_exp(-1000.0, -1000.0),
            -1000.0 + 2f64.ln(),
            epsilon = 1e-12
        );
        assert_eq!(log_add_exp(f64::NEG_INFINITY, 3.0), 3.0);
        assert_eq!(
            log_add_exp(f64::NEG_INFINITY, f64::NEG_INFINITY),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn scatter_examples() {
        let x = Matrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 0.0]);
        let (m, s, w) = weighted_mean_and_scatter(&x, &[1.0, 1.0]).unwrap();
        assert_eq!(w, 2.0);
        assert!(m.norm() < 1e-15);
        assert_eq!(
            s.as_matrix(),
            &Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0])
        );

        assert!(matches!(
            weighted_mean_and_scatter(&x, &[0.0, 0.0]),
            Err(Error::EmptyClass)
        ));

        let x = Matrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, -1.0]);
        let (m, s, _) = weighted_mean_and_scatter(&x, &[1.0, 1.0]).unwrap();
        assert_eq!(m.as_slice(), &[1.0, 0.0]);
        assert!((s.as_matrix() - Matrix::from_element(2, 2, 2.0)).norm() < 1e-14);
    }

    #[test]
    fn density_integrates_to_one() {
        // Importance sampling from a wider isotropic Gaussian proposal.
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for dim in 1..=3usize {
            let sigma = match dim {
                1 => SymMatrix::from_diagonal(&[0.7]),
                2 => SymMatrix::from_row_slice(2, &[1.0, 0.4, 0.4, 0.8]).unwrap(),
                _ => SymMatrix::from_row_slice(3, &[1.0, 0.2, 0.1, 0.2, 0.6, -0.1, 0.1, -0.1, 0.9]).unwrap(),
            };
            let mu = Vector::from_element(dim, 0.5);
            let f = CovarianceFactor::new(&sigma).unwrap();
            let scale = 2.0f64;
            let n = 1_000_000;
            let mut acc = 0.0;
            for _ in 0..n {
                let z = Vector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
                let x = &mu + &z * scale;
                let log_q = -0.5 * (dim as f64 * LN_2PI) - dim as f64 * scale.ln() - 0.5 * z.norm_squared();
                acc += (f.log_density(&x, &mu) - log_q).exp();
            }
            let integral = acc / n as f64;
            assert!((integral - 1.0).abs() < 1e-2, "d={dim}: {integral}");
        }
    }

    fn spd_strategy() -> impl Strategy<Value = SymMatrix> {
        (1usize..=5)
            .prop_flat_map(|d| (Just(d), prop::collection::vec(-2.0f64..2.0, d * d)))
            .prop_map(|(d, a)| {
                let a = Matrix::from_row_slice(d, d, &a);
                SymMatrix::new(&a * a.transpose() + Matrix::identity(d, d) * 0.1).unwrap()
            })
    }

    proptest! {
        #[test]
        fn sqrt_squares_back(m in spd_strategy()) {
            let r = sym_pow_floored(&m, 0.5).unwrap();
            let back = r.as_matrix() * r.as_matrix();
            prop_assert!(frob_rel(&back, m.as_matrix()) < 1e-8);
        }

        #[test]
        fn inverse_sqrt_whitens(m in spd_strategy()) {
            let r = sym_pow_floored(&m, -0.5).unwrap();
            let w = r.as_matrix() * m.as_matrix() * r.as_matrix();
            prop_assert!((w - Matrix::identity(m.dim(), m.dim())).norm() < 1e-8);
        }

        #[test]
        fn eig_reconstructs(m in spd_strategy()) {
            let e = sym_eig(&m).unwrap();
            prop_assert!(frob_rel(&e.reconstruct(), m.as_matrix()) < 1e-8);
            prop_assert!(e.eigenvalues.as_slice().windows(2).all(|w| w[0] <= w[1]));
        }

        #[test]
        fn integer_weights_equal_replication(
            rows in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..8),
            reps in prop::collection::vec(1usize..4, 8),
        ) {
            let n = rows.len();
            let x = Matrix::from_fn(n, 2, |i, j| if j == 0 { rows[i].0 } else { rows[i].1 });
            let w: Vec<f64> = reps[..n].iter().map(|&r| r as f64).collect();
            let mut replicated = Vec::new();
            for (i, &r) in reps[..n].iter().enumerate() {
                for _ in 0..r {
                    replicated.push(rows[i].0);
                    replicated.push(rows[i].1);
                }
            }
            let xr = Matrix::from_row_slice(replicated.len() / 2, 2, &replicated);
            let (m1, s1, w1) = weighted_mean_and_scatter(&x, &w).unwrap();
            let (m2, s2, w2) = weighted_mean_and_scatter(&xr, &vec![1.0; xr.nrows()]).unwrap();
            prop_assert!((w1 - w2).abs() < 1e-12);
            prop_assert!((m1 - m2).norm() < 1e-10);
            prop_assert!((s1.as_matrix() - s2.as_matrix()).norm() < 1e-8 * (1.0 + s2.as_matrix().norm()));
        }
    }
}
