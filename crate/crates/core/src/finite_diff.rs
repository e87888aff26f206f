//! Central finite differences. These only evaluate the scalar function, so
//! they serve as an independent check on analytic derivatives.

use nalgebra::{DMatrix, DVector};

/// Gradient step `1e-6 * max(1, ||x||)`.
pub fn gradient_step(x: &DVector<f64>) -> f64 {
    1e-6 * x.norm().max(1.0)
}

/// Hessian step `1e-4 * max(1, ||x||)`.
pub fn hessian_step(x: &DVector<f64>) -> f64 {
    1e-4 * x.norm().max(1.0)
}

/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for each coordinate.
pub fn gradient<F: Fn(&DVector<f64>) -> f64>(f: F, x: &DVector<f64>, h: f64) -> DVector<f64> {
    let mut probe = x.clone();
    DVector::from_fn(x.len(), |i, _| {
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        (up - down) / (2.0 * h)
    })
}

/// Second-order central differences of `f`:
/// `[f(x+he_i+he_j) - f(x+he_i-he_j) - f(x-he_i+he_j) + f(x-he_i-he_j)] / 4h^2`.
pub fn hessian<F: Fn(&DVector<f64>) -> f64>(f: F, x: &DVector<f64>, h: f64) -> DMatrix<f64> {
    let d = x.len();
    let mut probe = x.clone();
    let mut eval = |i: usize, si: f64, j: usize, sj: f64| {
        probe.copy_from(x);
        probe[i] += si * h;
        probe[j] += sj * h;
        f(&probe)
    };
    let mut out = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let v = (eval(i, 1.0, j, 1.0) - eval(i, 1.0, j, -1.0) - eval(i, -1.0, j, 1.0)
                + eval(i, -1.0, j, -1.0))
                / (4.0 * h * h);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// `||a - b|| / ||b||`, or the absolute error when `b` is zero.
pub fn relative_error(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let diff = (a - b).norm();
    let scale = b.norm();
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// Frobenius-norm analogue of [`relative_error`].
pub fn relative_error_mat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let diff = (a - b).norm();
    let scale = b.norm();
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}
