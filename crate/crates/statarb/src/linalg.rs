//! Dense linear-algebra helpers shared across the crate: symmetric-eigen
//! utilities, a Schur-based Lyapunov solver, plain OLS, and row-major
//! (de)serialization for matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Maximum QR iterations handed to the Schur decomposition.
const SCHUR_MAX_ITER: usize = 20_000;

/// 0.5 (M + Mᵀ).
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (m + m.transpose())
}

/// (min, max) eigenvalue of a symmetric matrix.
pub fn sym_eig_range(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = m.clone().symmetric_eigenvalues();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &l in eig.iter() {
        lo = lo.min(l);
        hi = hi.max(l);
    }
    (lo, hi)
}

/// Strict positive definiteness via Cholesky.
pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    nalgebra::Cholesky::new(m.clone()).is_some()
}

/// Square-root factor E of a symmetric PSD matrix M, with EᵀE = M.
///
/// Eigenvalues in [-clip, 0) are treated as roundoff and zeroed; anything
/// more negative is an error. This tolerates the rank-deficient -P of the
/// constrained Riccati variant.
pub fn psd_sqrt_factor(m: &DMatrix<f64>, clip: f64) -> Result<DMatrix<f64>> {
    let eig = nalgebra::SymmetricEigen::new(symmetrize(m));
    let scale = eig.eigenvalues.iter().fold(0.0f64, |a, &l| a.max(l.abs()));
    let mut d = DVector::zeros(eig.eigenvalues.len());
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if l < -clip * (1.0 + scale) {
            return Err(Error::Numeric(format!(
                "matrix is not positive semi-definite: eigenvalue {l:.3e}"
            )));
        }
        d[i] = l.max(0.0).sqrt();
    }
    // E = diag(sqrt λ) Oᵀ so that EᵀE = O diag(λ) Oᵀ = M.
    let mut e = eig.eigenvectors.transpose();
    for (i, mut row) in e.row_iter_mut().enumerate() {
        row *= d[i];
    }
    Ok(e)
}

/// Numerical rank from singular values, relative tolerance on the largest.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().singular_values();
    let smax = sv.max();
    if smax <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Numerical rank against an absolute singular-value threshold. Needed when
/// the matrix is a product that may be zero up to roundoff, where a relative
/// tolerance on its own largest singular value would count noise as rank.
pub fn numerical_rank_abs(m: &DMatrix<f64>, abs_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    m.clone()
        .singular_values()
        .iter()
        .filter(|&&s| s > abs_tol)
        .count()
}

/// Complex eigenvalues as (re, im) pairs.
pub fn complex_eigs(m: &DMatrix<f64>) -> Vec<(f64, f64)> {
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|c| (c.re, c.im))
        .collect()
}

/// All eigenvalues have strictly negative real part.
pub fn is_hurwitz(m: &DMatrix<f64>) -> bool {
    complex_eigs(m).iter().all(|&(re, _)| re < 0.0)
}

/// Solve the Lyapunov equation AᵀX + XA = W by Bartels-Stewart: one real
/// Schur decomposition of A, then block back-substitution on the
/// quasi-triangular system.
pub fn solve_lyapunov(a: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || w.nrows() != n || w.ncols() != n {
        return Err(Error::Dimension(format!(
            "lyapunov: A is {}x{}, W is {}x{}",
            a.nrows(),
            a.ncols(),
            w.nrows(),
            w.ncols()
        )));
    }
    let schur = nalgebra::Schur::try_new(a.clone(), f64::EPSILON, SCHUR_MAX_ITER)
        .ok_or_else(|| Error::Numeric("Schur decomposition did not converge".into()))?;
    let (u, t) = schur.unpack();

    // Transformed system TᵀY + YT = G with G = Uᵀ W U.
    let g = u.transpose() * w * &u;
    let tt = t.transpose();
    let mut y = DMatrix::<f64>::zeros(n, n);

    let block_tol = 1e-12 * (1.0 + t.amax());
    let mut j = 0;
    while j < n {
        let size = if j + 1 < n && t[(j + 1, j)].abs() > block_tol {
            2
        } else {
            1
        };
        // rhs = G[:, J] - Y[:, :j] T[:j, J]
        let mut rhs = g.columns(j, size).into_owned();
        if j > 0 {
            rhs -= y.columns(0, j) * t.view((0, j), (j, size));
        }
        if size == 1 {
            let lhs = &tt + DMatrix::identity(n, n) * t[(j, j)];
            let col = lhs
                .lu()
                .solve(&rhs.column(0).into_owned())
                .ok_or_else(|| Error::Numeric("singular Lyapunov system".into()))?;
            y.set_column(j, &col);
        } else {
            // 2x2 diagonal block: stack the two coupled columns.
            let mut k = DMatrix::<f64>::zeros(2 * n, 2 * n);
            k.view_mut((0, 0), (n, n)).copy_from(&tt);
            k.view_mut((n, n), (n, n)).copy_from(&tt);
            for i in 0..n {
                k[(i, i)] += t[(j, j)];
                k[(i, n + i)] += t[(j + 1, j)];
                k[(n + i, i)] += t[(j, j + 1)];
                k[(n + i, n + i)] += t[(j + 1, j + 1)];
            }
            let mut stacked = DVector::<f64>::zeros(2 * n);
            stacked.rows_mut(0, n).copy_from(&rhs.column(0));
            stacked.rows_mut(n, n).copy_from(&rhs.column(1));
            let sol = k
                .lu()
                .solve(&stacked)
                .ok_or_else(|| Error::Numeric("singular Lyapunov system".into()))?;
            y.set_column(j, &sol.rows(0, n).into_owned());
            y.set_column(j + 1, &sol.rows(n, n).into_owned());
        }
        j += size;
    }

    Ok(&u * y * u.transpose())
}

/// Ordinary least squares fit of y on the columns of x.
#[derive(Debug, Clone)]
pub struct Ols {
    pub coef: DVector<f64>,
    pub residuals: DVector<f64>,
    pub ssr: f64,
    /// Residual variance SSR / (n - k).
    pub sigma2: f64,
    /// Standard errors of the coefficients.
    pub se: DVector<f64>,
    pub dof: usize,
}

pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Ols> {
    let n = x.nrows();
    let k = x.ncols();
    if y.len() != n {
        return Err(Error::Dimension(format!(
            "ols: {} rows in X but {} observations",
            n,
            y.len()
        )));
    }
    if n <= k {
        return Err(Error::InsufficientData { needed: k + 1, got: n });
    }
    let xtx = x.transpose() * x;
    let xty = x.transpose() * y;
    let chol = nalgebra::Cholesky::new(xtx.clone())
        .ok_or_else(|| Error::Collinear("design matrix is rank deficient".into()))?;
    let coef = chol.solve(&xty);
    let residuals = y - x * &coef;
    let ssr = residuals.dot(&residuals);
    let dof = n - k;
    let sigma2 = ssr / dof as f64;
    let xtx_inv = chol.inverse();
    let se = DVector::from_iterator(k, (0..k).map(|i| (sigma2 * xtx_inv[(i, i)]).max(0.0).sqrt()));
    Ok(Ols {
        coef,
        residuals,
        ssr,
        sigma2,
        se,
        dof,
    })
}

/// Centered sample cross-covariance (1/(n - ddof)) Σ (a_t - ā)(b_t - b̄)ᵀ
/// between the columns of two row-aligned observation matrices.
pub fn cross_covariance(a: &DMatrix<f64>, b: &DMatrix<f64>, ddof: usize) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if b.nrows() != n {
        return Err(Error::Dimension(format!(
            "covariance: {} vs {} observations",
            n,
            b.nrows()
        )));
    }
    if n <= ddof {
        return Err(Error::InsufficientData { needed: ddof + 1, got: n });
    }
    let ca = center_columns(a);
    let cb = center_columns(b);
    Ok(ca.transpose() * cb / (n - ddof) as f64)
}

/// Subtract the column means.
pub fn center_columns(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows() as f64;
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
    }
    out
}

/// Row-major serde representation for `DMatrix<f64>` with explicit dimensions.
pub mod serde_matrix {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Repr {
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    }

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(m[(i, j)]);
            }
        }
        Repr {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<DMatrix<f64>, D::Error> {
        let repr = Repr::deserialize(d)?;
        if repr.data.len() != repr.rows * repr.cols {
            return Err(serde::de::Error::custom(format!(
                "matrix payload has {} entries for a {}x{} shape",
                repr.data.len(),
                repr.rows,
                repr.cols
            )));
        }
        Ok(DMatrix::from_row_iterator(repr.rows, repr.cols, repr.data))
    }
}

/// Serde representation for `DVector<f64>` as a plain JSON array.
pub mod serde_vector {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<DVector<f64>, D::Error> {
        let data = Vec::<f64>::deserialize(d)?;
        Ok(DVector::from_vec(data))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5)
    }

    #[test]
    fn lyapunov_residual_small_on_random_stable_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [1usize, 2, 3, 5, 8, 12] {
            // A - (n + 1) I is comfortably Hurwitz.
            let a = random_matrix(&mut rng, n) - DMatrix::identity(n, n) * (n as f64 + 1.0);
            let w = symmetrize(&random_matrix(&mut rng, n));
            let x = solve_lyapunov(&a, &w).unwrap();
            let resid = (a.transpose() * &x + &x * &a - &w).norm();
            assert!(resid < 1e-10 * (1.0 + w.norm()), "n={n}, resid={resid:.3e}");
        }
    }

    #[test]
    fn lyapunov_handles_complex_eigenvalue_blocks() {
        // Rotation plus strong damping gives a complex pair, exercising the
        // 2x2 Schur block path.
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 5.0, -5.0, -1.0]);
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 2.0]);
        let x = solve_lyapunov(&a, &w).unwrap();
        let resid = (a.transpose() * &x + &x * &a - &w).norm();
        assert!(resid < 1e-12);
    }

    #[test]
    fn psd_sqrt_factor_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = random_matrix(&mut rng, 4);
        let m = &b * b.transpose();
        let e = psd_sqrt_factor(&m, 1e-12).unwrap();
        assert_relative_eq!((e.transpose() * &e - &m).norm(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn psd_sqrt_factor_rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(psd_sqrt_factor(&m, 1e-12).is_err());
    }

    #[test]
    fn ols_recovers_exact_linear_relation() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 1.0, 2.0, 1.0, 3.0, 1.0, 4.0]);
        let y = DVector::from_vec(vec![3.0, 5.0, 7.0, 9.0]);
        let fit = ols(&x, &y).unwrap();
        assert_relative_eq!(fit.coef[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(fit.coef[1], 2.0, epsilon = 1e-12);
        assert!(fit.ssr < 1e-20);
    }

    #[test]
    fn ols_rejects_collinear_design() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        assert!(matches!(ols(&x, &y), Err(Error::Collinear(_))));
    }

    #[test]
    fn numerical_rank_detects_deficiency() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 0.0, 1.0]);
        assert_eq!(numerical_rank(&m, 1e-10), 2);
        assert_eq!(numerical_rank(&DMatrix::<f64>::identity(3, 3), 1e-10), 3);
    }
}
