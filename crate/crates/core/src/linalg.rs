//! Dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Extreme singular values `(sigma_min, sigma_max)` of a tall matrix.
pub fn singular_value_range(a: &DMatrix<f64>) -> (f64, f64) {
    let sv = a.clone().svd(false, false).singular_values;
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    (min, max)
}

/// Spectral (operator 2-) norm of any matrix.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    DVector::from_vec(ev)
}

/// `(lambda_min, lambda_max)` of a symmetric matrix.
pub fn sym_eig_range(m: &DMatrix<f64>) -> (f64, f64) {
    let ev = sym_eigenvalues(m);
    (ev[0], ev[ev.len() - 1])
}

/// Spectral norm of a symmetric matrix (largest absolute eigenvalue).
pub fn sym_spectral_norm(m: &DMatrix<f64>) -> f64 {
    let (lo, hi) = sym_eig_range(m);
    lo.abs().max(hi.abs())
}

/// Eigenvalues `lambda` of the pencil `X v = lambda Y v` for symmetric `X` and
/// positive definite `Y`, ascending. Computed as the spectrum of
/// `L^-1 X L^-T` where `Y = L L^T`.
pub fn generalized_eigenvalues(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DVector<f64>> {
    let chol = Cholesky::new(y.clone()).ok_or(Error::Singular("pencil matrix is not positive definite"))?;
    let l = chol.l();
    let left = l
        .solve_lower_triangular(x)
        .ok_or(Error::Singular("triangular factor"))?;
    let mut c = l
        .solve_lower_triangular(&left.transpose())
        .ok_or(Error::Singular("triangular factor"))?;
    symmetrize(&mut c);
    Ok(sym_eigenvalues(&c))
}

/// `A^T diag(weights) A`, symmetrized.
pub fn weighted_gram(a: &DMatrix<f64>, weights: &DVector<f64>) -> DMatrix<f64> {
    let mut scaled = a.clone();
    for (mut row, &w) in scaled.row_iter_mut().zip(weights.iter()) {
        row *= w;
    }
    let mut g = a.tr_mul(&scaled);
    symmetrize(&mut g);
    g
}

/// `A^T diag(weights) A` for a weight vector given as `(row, weight)` pairs.
pub fn weighted_gram_rows(a: &DMatrix<f64>, entries: &[(usize, f64)]) -> DMatrix<f64> {
    let d = a.ncols();
    let mut rows = DMatrix::zeros(entries.len(), d);
    let mut scaled = DMatrix::zeros(entries.len(), d);
    for (k, &(i, w)) in entries.iter().enumerate() {
        for j in 0..d {
            rows[(k, j)] = a[(i, j)];
            scaled[(k, j)] = w * a[(i, j)];
        }
    }
    let mut g = rows.tr_mul(&scaled);
    symmetrize(&mut g);
    g
}

/// Solves `H x = g` for symmetric positive definite `H` with a Cholesky
/// factorization followed by one pass of iterative refinement.
pub fn spd_solve(h: &DMatrix<f64>, g: &DVector<f64>) -> Result<DVector<f64>> {
    let Some(chol) = Cholesky::new(h.clone()) else {
        let (lambda_min, _) = sym_eig_range(h);
        return Err(Error::NotPositiveDefinite { lambda_min });
    };
    let mut x = chol.solve(g);
    let residual = g - h * &x;
    x += chol.solve(&residual);
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn generalized_eigs_of_scaled_pencil() {
        let y = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let x = &y * 1.5;
        let ev = generalized_eigenvalues(&x, &y).unwrap();
        assert_relative_eq!(ev[0], 1.5, epsilon = 1e-12);
        assert_relative_eq!(ev[1], 1.5, epsilon = 1e-12);
    }

    #[test]
    fn generalized_eigs_diagonal() {
        let x = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 6.0]));
        let y = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]));
        let ev = generalized_eigenvalues(&x, &y).unwrap();
        assert_relative_eq!(ev[0], 0.5, epsilon = 1e-14);
        assert_relative_eq!(ev[1], 2.0, epsilon = 1e-14);
        assert!(generalized_eigenvalues(&x, &DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn gram_variants_agree() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, -1.0, 0.5, 3.0, 1.0]);
        let w = DVector::from_vec(vec![2.0, 0.0, 0.5]);
        let dense = weighted_gram(&a, &w);
        let sparse = weighted_gram_rows(&a, &[(0, 2.0), (2, 0.5)]);
        let expect = a.transpose() * DMatrix::from_diagonal(&w) * &a;
        assert_relative_eq!(dense, expect, epsilon = 1e-12);
        assert_relative_eq!(sparse, expect, epsilon = 1e-12);
    }

    #[test]
    fn spd_solve_reports_lambda_min() {
        let h = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let g = DVector::from_vec(vec![1.0, 2.0]);
        let x = spd_solve(&h, &g).unwrap();
        assert_relative_eq!(&h * x, g, epsilon = 1e-14);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -2.0]);
        match spd_solve(&bad, &g) {
            Err(Error::NotPositiveDefinite { lambda_min }) => assert_relative_eq!(lambda_min, -2.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn singular_values_of_identity() {
        let (lo, hi) = singular_value_range(&DMatrix::identity(3, 3));
        assert_eq!((lo, hi), (1.0, 1.0));
        assert_relative_eq!(spectral_norm(&DMatrix::from_row_slice(1, 2, &[3.0, 4.0])), 5.0, epsilon = 1e-14);
    }
}
