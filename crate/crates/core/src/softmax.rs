//! Softmax loss calculus: `alpha`, `f`, `c`, the losses, the gradient and
//! the structured Hessian.
//!
//! With `f(x) = exp(Ax) / <exp(Ax), 1>` and `c = f - b`, the loss
//! `L_exp = 0.5 ||c||^2` has gradient `A^T (f∘c - <c, f> f)` and Hessian
//! `A^T B(x) A` where
//!
//! ```text
//! B = <3f - 2b, f> f f^T - (u f^T + f u^T) + diag(u) - <f - b, f> diag(f),
//! u = (2f - b)∘f
//! ```
//!
//! i.e. three rank-one terms and two diagonal terms. The regularizer
//! `L_reg = 0.5 ||W A x||^2` adds `A^T W^2 A x` and `A^T W^2 A`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::weighted_gram;
use crate::problem::ProblemInstance;

/// Normalization coefficient `alpha(x) = <exp(Ax), 1>`, kept in log domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alpha {
    pub ln: f64,
}

impl Alpha {
    /// Linear-domain value; `+inf` when not representable.
    pub fn value(&self) -> f64 {
        self.ln.exp()
    }
}

fn check_point(inst: &ProblemInstance, x: &DVector<f64>) -> Result<()> {
    if x.len() != inst.d() {
        return Err(Error::Dimension(format!("x has length {}, expected {}", x.len(), inst.d())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("x"));
    }
    Ok(())
}

/// Returns `(log alpha, f)` for the vector `ax = A x` using the max-shifted
/// exponential.
pub fn log_sum_exp_normalize(ax: &DVector<f64>) -> (f64, DVector<f64>) {
    let m = ax.max();
    let e = ax.map(|v| (v - m).exp());
    let s = e.sum();
    (m + s.ln(), e / s)
}

pub fn alpha(inst: &ProblemInstance, x: &DVector<f64>) -> Result<Alpha> {
    check_point(inst, x)?;
    let ax = inst.a() * x;
    Ok(Alpha { ln: log_sum_exp_normalize(&ax).0 })
}

/// Everything the loss, gradient and Hessian need at one point `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxState {
    x: DVector<f64>,
    ax: DVector<f64>,
    log_alpha: f64,
    f: DVector<f64>,
    c: DVector<f64>,
}

impl SoftmaxState {
    pub fn new(inst: &ProblemInstance, x: &DVector<f64>) -> Result<Self> {
        check_point(inst, x)?;
        let ax = inst.a() * x;
        let (log_alpha, f) = log_sum_exp_normalize(&ax);
        let c = &f - inst.b();
        Ok(Self { x: x.clone(), ax, log_alpha, f, c })
    }

    pub fn x(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn ax(&self) -> &DVector<f64> {
        &self.ax
    }

    pub fn f(&self) -> &DVector<f64> {
        &self.f
    }

    pub fn c(&self) -> &DVector<f64> {
        &self.c
    }

    pub fn alpha(&self) -> Alpha {
        Alpha { ln: self.log_alpha }
    }
}

/// `0.5 ||f(x) - b||^2`.
pub fn loss_exp(state: &SoftmaxState) -> f64 {
    0.5 * state.c.norm_squared()
}

/// `0.5 ||W A x||^2`.
pub fn loss_reg(inst: &ProblemInstance, x: &DVector<f64>) -> f64 {
    reg_from_ax(inst, &(inst.a() * x))
}

fn reg_from_ax(inst: &ProblemInstance, ax: &DVector<f64>) -> f64 {
    0.5 * inst.w().component_mul(ax).norm_squared()
}

pub fn loss_total(state: &SoftmaxState, inst: &ProblemInstance) -> f64 {
    loss_exp(state) + reg_from_ax(inst, &state.ax)
}

/// Gradient of `L_exp`: `A^T (f∘c - <c, f> f)`.
pub fn gradient_exp(state: &SoftmaxState, inst: &ProblemInstance) -> DVector<f64> {
    let cf = state.c.dot(&state.f);
    let v = state.f.component_mul(&state.c) - &state.f * cf;
    inst.a().tr_mul(&v)
}

/// Gradient of `L_exp + L_reg`.
pub fn gradient_total(state: &SoftmaxState, inst: &ProblemInstance) -> DVector<f64> {
    let cf = state.c.dot(&state.f);
    let mut v = state.f.component_mul(&state.c) - &state.f * cf;
    for ((vi, wi), axi) in v.iter_mut().zip(inst.w().iter()).zip(state.ax.iter()) {
        *vi += wi * wi * axi;
    }
    inst.a().tr_mul(&v)
}

/// `B(x)` as `s1 f f^T - (u2 f^T + f u2^T) + diag(d1) + diag(d2)`, plus the
/// regularizer diagonal `w2`.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianDecomposition {
    /// `f(x)`, the vector of the `f f^T` term.
    pub f: DVector<f64>,
    /// `<3f - 2b, f>`.
    pub s1: f64,
    /// `(2f - b)∘f`; enters with a minus sign as the symmetric pair.
    pub u2: DVector<f64>,
    /// `-<f - b, f> f`.
    pub d1: DVector<f64>,
    /// `(2f - b)∘f`.
    pub d2: DVector<f64>,
    /// `w∘w`.
    pub w2: DVector<f64>,
}

impl HessianDecomposition {
    pub fn new(state: &SoftmaxState, inst: &ProblemInstance) -> Self {
        let f = state.f.clone();
        let b = inst.b();
        let s1 = 3.0 * f.norm_squared() - 2.0 * b.dot(&f);
        let two_f_minus_b = &f * 2.0 - b;
        let u2 = two_f_minus_b.component_mul(&f);
        let d1 = &f * (-state.c.dot(&f));
        Self {
            d2: u2.clone(),
            f,
            s1,
            u2,
            d1,
            w2: inst.w_squared(),
        }
    }

    pub fn n(&self) -> usize {
        self.f.len()
    }

    /// Dense `n x n` matrix `B(x)` (without `W^2`).
    pub fn materialize_b(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut m = DMatrix::from_fn(n, n, |i, j| {
            self.s1 * self.f[i] * self.f[j] - self.u2[i] * self.f[j] - self.f[i] * self.u2[j]
        });
        for i in 0..n {
            m[(i, i)] += self.d1[i] + self.d2[i];
        }
        m
    }

    /// Diagonal part of `B(x)`: `d1 + d2`.
    pub fn b_diag(&self) -> DVector<f64> {
        &self.d1 + &self.d2
    }

    /// `B_diag(x) + W^2`, the diagonal the sketched solver sparsifies.
    pub fn diag_weights(&self) -> DVector<f64> {
        &self.d1 + &self.d2 + &self.w2
    }

    /// `(B(x) + W^2) v` without forming `B`.
    pub fn apply_b_plus_w2(&self, v: &DVector<f64>) -> DVector<f64> {
        let fv = self.f.dot(v);
        let uv = self.u2.dot(v);
        let mut out = &self.f * (self.s1 * fv - uv) - &self.u2 * fv;
        for i in 0..self.n() {
            out[i] += (self.d1[i] + self.d2[i] + self.w2[i]) * v[i];
        }
        out
    }
}

pub fn hessian_decomposed(state: &SoftmaxState, inst: &ProblemInstance) -> HessianDecomposition {
    HessianDecomposition::new(state, inst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HessianMode {
    /// `A^T (B + W^2) A`.
    Full,
    /// `A^T (B_diag + W^2) A`.
    DiagOnly,
}

/// `d x d` Hessian assembled in `O(n d^2)` from the structured terms.
pub fn hessian_materialize(
    decomp: &HessianDecomposition,
    inst: &ProblemInstance,
    mode: HessianMode,
) -> DMatrix<f64> {
    let mut h = weighted_gram(inst.a(), &decomp.diag_weights());
    if mode == HessianMode::Full {
        let af = inst.a().tr_mul(&decomp.f);
        let au = inst.a().tr_mul(&decomp.u2);
        h += &af * af.transpose() * decomp.s1;
        h -= &au * af.transpose();
        h -= &af * au.transpose();
    }
    h
}

/// Matrix-free Hessian-vector product `A^T (B + W^2) A v`.
pub fn hessian_apply(decomp: &HessianDecomposition, inst: &ProblemInstance, v: &DVector<f64>) -> DVector<f64> {
    let av = inst.a() * v;
    inst.a().tr_mul(&decomp.apply_b_plus_w2(&av))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finite_diff;
    use crate::linalg::{sym_eig_range, sym_eigenvalues};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_row(b: [f64; 2]) -> ProblemInstance {
        ProblemInstance::new(
            DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
            DVector::from_row_slice(&b),
            DVector::zeros(2),
        )
        .unwrap()
    }

    fn random_instance(seed: u64, n: usize, d: usize) -> (ProblemInstance, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
        let raw = DVector::from_fn(n, |_, _| rng.random::<f64>());
        let b = &raw * (rng.random::<f64>() / raw.sum());
        let w = DVector::from_fn(n, |_, _| rng.random_range(0.0..3.0));
        let x = DVector::from_fn(d, |_, _| rng.random_range(-1.5..1.5));
        (ProblemInstance::new(a, b, w).unwrap(), x)
    }

    #[test]
    fn alpha_examples() {
        let zero = ProblemInstance::new(DMatrix::zeros(5, 2), DVector::zeros(5), DVector::zeros(5)).unwrap();
        let x = DVector::from_vec(vec![3.0, -7.0]);
        assert_relative_eq!(alpha(&zero, &x).unwrap().value(), 5.0, max_relative = 1e-15);

        let inst = two_row([0.5, 0.5]);
        assert_relative_eq!(alpha(&inst, &DVector::from_vec(vec![0.0])).unwrap().value(), 2.0);
        let x = DVector::from_vec(vec![std::f64::consts::LN_2]);
        assert_relative_eq!(alpha(&inst, &x).unwrap().value(), 2.5, max_relative = 1e-15);
    }

    #[test]
    fn alpha_stays_finite_in_log_domain() {
        let inst = two_row([0.5, 0.5]);
        let a = alpha(&inst, &DVector::from_vec(vec![1000.0])).unwrap();
        assert_relative_eq!(a.ln, 1000.0, max_relative = 1e-15);
        assert!(a.value().is_infinite());
        let s = SoftmaxState::new(&inst, &DVector::from_vec(vec![1000.0])).unwrap();
        assert_eq!(s.f()[0], 1.0);
        assert!(alpha(&inst, &DVector::from_vec(vec![f64::NAN])).is_err());
        assert!(alpha(&inst, &DVector::from_vec(vec![1.0, 2.0])).is_err());
    }

    #[test]
    fn softmax_examples() {
        let zero = ProblemInstance::new(DMatrix::zeros(4, 1), DVector::zeros(4), DVector::zeros(4)).unwrap();
        let s = SoftmaxState::new(&zero, &DVector::from_vec(vec![2.0])).unwrap();
        assert_eq!(s.f().as_slice(), &[0.25; 4]);

        let inst = two_row([0.5, 0.5]);
        let s = SoftmaxState::new(&inst, &DVector::from_vec(vec![0.5 * 3f64.ln()])).unwrap();
        assert_relative_eq!(s.f()[0], 0.75, max_relative = 1e-15);
        assert_relative_eq!(s.f()[1], 0.25, max_relative = 1e-15);
        assert_relative_eq!(loss_exp(&s), 0.0625, max_relative = 1e-14);
    }

    #[test]
    fn loss_examples() {
        let inst = two_row([0.0, 0.0]);
        let s = SoftmaxState::new(&inst, &DVector::from_vec(vec![0.0])).unwrap();
        assert_relative_eq!(loss_exp(&s), 0.25);

        let b = s.f().clone();
        let fitted = inst.with_target(b).unwrap();
        let s = SoftmaxState::new(&fitted, &DVector::from_vec(vec![0.0])).unwrap();
        assert_eq!(loss_exp(&s), 0.0);
        assert_eq!(gradient_exp(&s, &fitted).as_slice(), &[0.0]);

        let reg = ProblemInstance::new(DMatrix::identity(2, 2), DVector::zeros(2), DVector::from_element(2, 2.0)).unwrap();
        assert_eq!(loss_reg(&reg, &DVector::zeros(2)), 0.0);
        assert_relative_eq!(loss_reg(&reg, &DVector::from_vec(vec![1.0, 1.0])), 4.0);
    }

    #[test]
    fn gradient_two_row_example() {
        let inst = two_row([1.0, 0.0]);
        let x = DVector::from_vec(vec![0.0]);
        let s = SoftmaxState::new(&inst, &x).unwrap();
        let g = gradient_exp(&s, &inst);
        assert_relative_eq!(g[0], -0.5, max_relative = 1e-15);
        let fd = finite_diff::gradient(|x| loss_exp(&SoftmaxState::new(&inst, x).unwrap()), &x, 1e-6);
        assert_relative_eq!(fd[0], -0.5, max_relative = 1e-8);
    }

    #[test]
    fn gradient_total_with_fitted_softmax_is_regularizer() {
        let base = ProblemInstance::new(DMatrix::identity(2, 2), DVector::zeros(2), DVector::from_element(2, 1.0)).unwrap();
        let x = DVector::from_vec(vec![0.3, -0.7]);
        let b = SoftmaxState::new(&base, &x).unwrap().f().clone();
        let inst = base.with_target(b).unwrap();
        let s = SoftmaxState::new(&inst, &x).unwrap();
        assert_relative_eq!(gradient_total(&s, &inst), x, epsilon = 1e-15);
    }

    #[test]
    fn decomposition_at_zero_residual() {
        let (inst, x) = random_instance(11, 6, 2);
        let f = SoftmaxState::new(&inst, &x).unwrap().f().clone();
        let inst = inst.with_target(f.clone()).unwrap();
        let s = SoftmaxState::new(&inst, &x).unwrap();
        let dec = hessian_decomposed(&s, &inst);
        let ff = f.component_mul(&f);
        assert_relative_eq!(dec.s1, f.norm_squared(), max_relative = 1e-14);
        assert_relative_eq!(dec.d1, DVector::zeros(6), epsilon = 1e-16);
        assert_relative_eq!(dec.d2, ff, max_relative = 1e-14);
        assert_relative_eq!(dec.u2, ff, max_relative = 1e-14);
        // B reduces to (diag(f) - f f^T)^2, which is PSD.
        let j = DMatrix::from_diagonal(&f) - &f * f.transpose();
        assert_relative_eq!(dec.materialize_b(), &j * &j, epsilon = 1e-15);
        assert!(sym_eigenvalues(&dec.materialize_b())[0] >= -1e-12);
    }

    #[test]
    fn exp_hessian_matches_second_differences() {
        for seed in 0..10 {
            let (inst, x) = random_instance(seed, 12, 3);
            let s = SoftmaxState::new(&inst, &x).unwrap();
            let dec = hessian_decomposed(&s, &inst);
            let analytic = inst.a().transpose() * dec.materialize_b() * inst.a();
            let fd = finite_diff::hessian(|x| loss_exp(&SoftmaxState::new(&inst, x).unwrap()), &x, 1e-4);
            let err = finite_diff::relative_error_mat(&analytic, &fd);
            assert!(err <= 1e-5, "seed {seed}: rel err {err:e}");
        }
    }

    #[test]
    fn scalar_hessian_matches_fd() {
        let (inst, x) = random_instance(3, 5, 1);
        let s = SoftmaxState::new(&inst, &x).unwrap();
        let h = hessian_materialize(&hessian_decomposed(&s, &inst), &inst, HessianMode::Full);
        let fd = finite_diff::hessian(|x| loss_total(&SoftmaxState::new(&inst, x).unwrap(), &inst), &x, 1e-4);
        assert_relative_eq!(h[(0, 0)], fd[(0, 0)], max_relative = 1e-5);
    }

    #[test]
    fn full_minus_diag_is_rank_part() {
        let (inst, x) = random_instance(5, 9, 3);
        let s = SoftmaxState::new(&inst, &x).unwrap();
        let dec = hessian_decomposed(&s, &inst);
        let full = hessian_materialize(&dec, &inst, HessianMode::Full);
        let diag = hessian_materialize(&dec, &inst, HessianMode::DiagOnly);
        let rank = &dec.f * dec.f.transpose() * dec.s1 - &dec.u2 * dec.f.transpose() - &dec.f * dec.u2.transpose();
        let expect = inst.a().transpose() * rank * inst.a();
        assert_relative_eq!(full - diag, expect, epsilon = 1e-13);
    }

    #[test]
    fn matrix_free_apply_matches_dense() {
        let (inst, x) = random_instance(6, 10, 4);
        let s = SoftmaxState::new(&inst, &x).unwrap();
        let dec = hessian_decomposed(&s, &inst);
        let h = hessian_materialize(&dec, &inst, HessianMode::Full);
        let v = DVector::from_vec(vec![0.5, -1.0, 2.0, 0.25]);
        assert_relative_eq!(hessian_apply(&dec, &inst, &v), &h * &v, epsilon = 1e-12);
    }

    #[test]
    fn softmax_is_shift_invariant() {
        // Appending a constant column and shifting along it adds kappa to every
        // entry of Ax.
        let (inst, x) = random_instance(7, 8, 2);
        let a = inst.a().clone().insert_column(2, 1.0);
        let shifted = ProblemInstance::new(a, inst.b().clone(), inst.w().clone()).unwrap();
        let base = SoftmaxState::new(&inst, &x).unwrap();
        for kappa in [-30.0, 0.0, 5.0, 400.0] {
            let xs = DVector::from_vec(vec![x[0], x[1], kappa]);
            let s = SoftmaxState::new(&shifted, &xs).unwrap();
            assert_relative_eq!(s.f(), base.f(), max_relative = 1e-12);
            assert_relative_eq!(s.alpha().ln, base.alpha().ln + kappa, epsilon = 1e-12 * (1.0 + kappa.abs()));
        }
    }

    #[test]
    fn exp_lipschitz_fact() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..200 {
            let u = DVector::from_fn(7, |_, _| rng.random_range(-3.0..3.0));
            let v = &u + DVector::from_fn(7, |_, _| rng.random_range(-0.01..0.01));
            let eu = u.map(f64::exp);
            let ev = v.map(f64::exp);
            let lhs = (&eu - &ev).norm();
            let rhs = eu.norm() * 2.0 * (&u - &v).amax();
            assert!(lhs <= rhs, "{lhs} > {rhs}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn softmax_is_a_distribution(seed in any::<u64>(), n in 1usize..40, scale in 0.0f64..30.0) {
            let (inst, x) = random_instance(seed, n, 1);
            let s = SoftmaxState::new(&inst, &(x * scale)).unwrap();
            prop_assert!(s.f().iter().all(|&v| v >= 0.0));
            prop_assert!((s.f().sum() - 1.0).abs() <= 1e-12);
            prop_assert!(s.f().norm() <= 1.0 + 1e-15);
            prop_assert_eq!(s.c(), &(s.f() - inst.b()));
        }

        #[test]
        fn gradient_matches_fd(seed in any::<u64>(), n in 2usize..30, d in 1usize..6) {
            let (inst, x) = random_instance(seed, n.max(d), d);
            let s = SoftmaxState::new(&inst, &x).unwrap();
            let g = gradient_total(&s, &inst);
            let h = 1e-6 * x.norm().max(1.0);
            let fd = finite_diff::gradient(|x| loss_total(&SoftmaxState::new(&inst, x).unwrap(), &inst), &x, h);
            prop_assert!(finite_diff::relative_error(&g, &fd) <= 1e-6);
        }

        #[test]
        fn b_is_symmetric_and_bounded(seed in any::<u64>(), n in 1usize..25, scale in 0.0f64..20.0) {
            let (inst, x) = random_instance(seed, n, 1);
            let s = SoftmaxState::new(&inst, &(x * scale)).unwrap();
            let b = hessian_decomposed(&s, &inst).materialize_b();
            prop_assert!((&b - b.transpose()).amax() <= 1e-14);
            let (lo, hi) = sym_eig_range(&b);
            prop_assert!(lo >= -4.0 - 1e-9 && hi <= 8.0 + 1e-9);
        }
    }
}
