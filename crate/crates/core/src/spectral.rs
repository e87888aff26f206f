//! Certificates for the spectral bounds behind the convergence argument:
//! the `[-4, 8]` range of `B(x)`, strong convexity, the `W^2` sandwich,
//! Lipschitz probes for `exp`, `alpha`, `f`, `g` and the Hessian, and the
//! closed-form `beta`/`M` bounds.
//!
//! Every bound of the form `exp(c R^2)` is compared in log domain, so large-`R`
//! instances stay checkable; such comparisons are marked vacuous when the bound
//! is not representable as an `f64`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{
    generalized_eigenvalues, spectral_norm, sym_eig_range, sym_spectral_norm,
};
use crate::problem::{random_direction, ProblemInstance};
use crate::softmax::{
    gradient_exp, hessian_decomposed, hessian_materialize, HessianDecomposition, HessianMode,
    SoftmaxState,
};

/// Tolerance on the `[-4, 8]` spectrum check of `B(x)`.
pub const B_BOUND_TOL: f64 = 1e-9;
/// Slack, in log units, allowed on log-domain comparisons.
pub const LOG_TOL: f64 = 1e-9;
/// Cap on `||A (x - y)||_inf` in the Lipschitz hypotheses.
pub const PAIR_INF_CAP: f64 = 0.01;
/// Probe pairs are placed at half the cap.
pub const PAIR_INF_STEP: f64 = 0.005;

/// A positive quantity held by its natural logarithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogBound {
    ln: f64,
}

impl LogBound {
    pub fn from_ln(ln: f64) -> Self {
        Self { ln }
    }

    pub fn ln(&self) -> f64 {
        self.ln
    }

    /// Linear value; `+inf` or `0` when out of `f64` range.
    pub fn value(&self) -> f64 {
        self.ln.exp()
    }

    pub fn is_representable(&self) -> bool {
        self.ln < f64::MAX.ln() && self.ln > f64::MIN_POSITIVE.ln()
    }
}

impl fmt::Display for LogBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_representable() {
            write!(f, "{:e}", self.value())
        } else {
            write!(f, "exp({})", self.ln)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaM {
    /// `exp(-R^2)`, lower bound on `alpha(x)` over `||x|| <= R`.
    pub beta_lower: LogBound,
    /// `n^1.5 exp(30 R^2)`, upper bound on the Hessian Lipschitz constant.
    pub m_upper: LogBound,
}

pub fn beta_and_m(n: usize, radius: f64) -> BetaM {
    let r2 = radius * radius;
    BetaM {
        beta_lower: LogBound::from_ln(-r2),
        m_upper: LogBound::from_ln(1.5 * (n as f64).ln() + 30.0 * r2),
    }
}

/// One-sided comparison `measured <= bound` in log domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub measured_ln: f64,
    pub bound_ln: f64,
}

impl Comparison {
    pub fn new(measured_ln: f64, bound_ln: f64) -> Self {
        Self { measured_ln, bound_ln }
    }

    pub fn holds(&self) -> bool {
        self.measured_ln <= self.bound_ln + LOG_TOL * (1.0 + self.bound_ln.abs())
    }

    /// The bound exceeds every finite `f64`, so the comparison says nothing.
    pub fn vacuous(&self) -> bool {
        self.bound_ln >= f64::MAX.ln()
    }

    /// `measured_ln - bound_ln`; larger is tighter.
    pub fn margin(&self) -> f64 {
        self.measured_ln - self.bound_ln
    }

    fn worse(self, other: Self) -> Self {
        if other.margin() > self.margin() || self.margin().is_nan() {
            other
        } else {
            self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBounds {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub pass: bool,
}

/// Eigen-decomposes the materialized `B(x)` and checks it lies in
/// `[-4 - tol, 8 + tol]`. Only meaningful when `||b||_1 <= 1`.
pub fn check_b_bounds(decomp: &HessianDecomposition) -> BBounds {
    let (lambda_min, lambda_max) = sym_eig_range(&decomp.materialize_b());
    BBounds {
        lambda_min,
        lambda_max,
        pass: lambda_min >= -4.0 - B_BOUND_TOL && lambda_max <= 8.0 + B_BOUND_TOL,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdCheck {
    pub lambda_min: f64,
    pub pass: bool,
}

/// `lambda_min(A^T (B + W^2) A) >= l (1 - 1e-9)`.
pub fn check_hessian_pd(inst: &ProblemInstance, x: &DVector<f64>, l: f64) -> Result<PdCheck> {
    let state = SoftmaxState::new(inst, x)?;
    let h = hessian_materialize(&hessian_decomposed(&state, inst), inst, HessianMode::Full);
    let (lambda_min, _) = sym_eig_range(&h);
    Ok(PdCheck {
        lambda_min,
        pass: lambda_min >= l * (1.0 - 1e-9),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenEigRange {
    pub min: f64,
    pub max: f64,
    pub pass: bool,
}

/// Generalized eigenvalues of `(W^2, B + W^2)`; passes when all lie in
/// `[0.9, 1.1]`. A non-positive-definite `B + W^2` is an error.
pub fn check_w2_sandwich(inst: &ProblemInstance, x: &DVector<f64>) -> Result<GenEigRange> {
    let state = SoftmaxState::new(inst, x)?;
    let decomp = hessian_decomposed(&state, inst);
    w2_sandwich_of(&decomp)
}

pub fn w2_sandwich_of(decomp: &HessianDecomposition) -> Result<GenEigRange> {
    let w2 = DMatrix::from_diagonal(&decomp.w2);
    let total = decomp.materialize_b() + &w2;
    let ev = generalized_eigenvalues(&w2, &total)
        .map_err(|_| Error::Singular("B(x) + W^2 is not positive definite"))?;
    let (min, max) = (ev[0], ev[ev.len() - 1]);
    Ok(GenEigRange {
        min,
        max,
        pass: min >= 0.9 && max <= 1.1,
    })
}

/// A pair of points for a Lipschitz probe.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbePair {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
}

/// Draws pairs `y = x + delta u` with `u` uniform on the sphere and `delta`
/// chosen so `||A (x - y)||_inf = 0.005`; `||x||` is uniform in
/// `[0, R - delta]` so both points stay in the radius-`R` ball.
pub fn probe_pairs(inst: &ProblemInstance, radius: f64, count: usize, seed: u64) -> Vec<ProbePair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = inst.d();
    (0..count)
        .map(|_| {
            let u = random_direction(&mut rng, d);
            let au = (inst.a() * &u).amax();
            let delta = if au > 0.0 { PAIR_INF_STEP / au } else { 0.0 };
            let room = (radius - delta).max(0.0);
            let x = random_direction(&mut rng, d) * (room * rng.random::<f64>());
            let y = &x + &u * delta;
            ProbePair { x, y }
        })
        .collect()
}

/// Why a pair was excluded from a probe.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PairTally {
    pub used: usize,
    /// `x == y`.
    pub degenerate: usize,
    /// Outside the radius or the `||A(x - y)||_inf < 0.01` cap.
    pub skipped: usize,
}

fn pair_admissible(inst: &ProblemInstance, p: &ProbePair, radius: f64) -> bool {
    let tol = 1.0 + 1e-12;
    p.x.norm() <= radius * tol
        && p.y.norm() <= radius * tol
        && (inst.a() * (&p.x - &p.y)).amax() < PAIR_INF_CAP
}

#[derive(Debug, Clone, PartialEq)]
pub struct HessianLipschitzProbe {
    pub tally: PairTally,
    /// `max ||H(x) - H(y)|| / ||x - y||`.
    pub ratio_max: f64,
    /// Worst pair against `beta^-2 n^1.5 exp(20 R^2)`.
    pub hessian_bound: Comparison,
    /// `max (||G1|| + sum_i ||Gi||) / ||f(x) - f(y)||`.
    pub g_sum_ratio_max: f64,
    /// Worst pair against `100 R ||f(x) - f(y)||`.
    pub g_sum_bound: Comparison,
    /// Per-term bounds `||Gi|| <= k_i ||f(x) - f(y)|| (||b|| or 1)`, worst
    /// pair for each term.
    pub g_terms: [Comparison; 8],
    /// `||A|| <= R`, `||b||_2 <= R` and `alpha >= beta` at every used point.
    pub hypotheses_ok: bool,
}

impl HessianLipschitzProbe {
    pub fn holds(&self) -> bool {
        self.hessian_bound.holds() && self.g_sum_bound.holds() && self.g_terms.iter().all(Comparison::holds)
    }
}

fn ln(v: f64) -> f64 {
    v.ln()
}

/// Spectral norms of `G1 … G8` for the pair `(f(x), f(y))`.
pub fn g_term_norms(fx: &DVector<f64>, fy: &DVector<f64>, b: &DVector<f64>) -> [f64; 8] {
    let outer = |u: &DVector<f64>, v: &DVector<f64>| u * v.transpose();
    let diag_norm = |v: DVector<f64>| v.amax();
    let (nx, ny) = (fx.norm_squared(), fy.norm_squared());
    let (bx, by) = (fx.dot(b), fy.dot(b));
    let fbx = fx.component_mul(b);
    let fby = fy.component_mul(b);
    let g1 = outer(fx, fx) * nx - outer(fy, fy) * ny;
    let g2 = outer(fx, fx) * bx - outer(fy, fy) * by;
    let g3 = diag_norm(fx * nx - fy * ny);
    let g4 = diag_norm(fx * bx - fy * by);
    let g5 = diag_norm(fx.component_mul(&(fx - b)) - fy.component_mul(&(fy - b)));
    let g6 = diag_norm(fx.component_mul(fx) - fy.component_mul(fy));
    let g7 = outer(fx, &fbx) - outer(fy, &fby);
    let g8 = outer(&fbx, fx) - outer(&fby, fy);
    [
        sym_spectral_norm(&g1),
        sym_spectral_norm(&g2),
        g3,
        g4,
        g5,
        g6,
        spectral_norm(&g7),
        spectral_norm(&g8),
    ]
}

/// Coefficients `k_i(||b||)` with `||Gi|| <= k_i ||f(x) - f(y)||`.
pub fn g_term_coefficients(b_norm: f64) -> [f64; 8] {
    [4.0, 3.0 * b_norm, 3.0, 2.0 * b_norm, 2.0 + b_norm, 2.0, 2.0 * b_norm, 2.0 * b_norm]
}

/// Measures `||H(x) - H(y)|| / ||x - y||` and the `G1 … G8` split on each
/// admissible pair. `beta` is `exp(-R^2)`.
pub fn probe_lipschitz(inst: &ProblemInstance, pairs: &[ProbePair], radius: f64) -> Result<HessianLipschitzProbe> {
    let n = inst.n() as f64;
    let beta = beta_and_m(inst.n(), radius).beta_lower;
    let hess_bound_ln = -2.0 * beta.ln() + 1.5 * n.ln() + 20.0 * radius * radius;
    let b_norm = inst.b().norm();
    let coeffs = g_term_coefficients(b_norm);
    let a_norm = spectral_norm(inst.a());
    let mut hypotheses_ok = a_norm <= radius * (1.0 + 1e-12) && b_norm <= radius;

    let neutral = Comparison::new(f64::NEG_INFINITY, 0.0);
    let mut out = HessianLipschitzProbe {
        tally: PairTally::default(),
        ratio_max: 0.0,
        hessian_bound: neutral,
        g_sum_ratio_max: 0.0,
        g_sum_bound: neutral,
        g_terms: [neutral; 8],
        hypotheses_ok,
    };
    for p in pairs {
        let dx = (&p.x - &p.y).norm();
        if dx == 0.0 {
            out.tally.degenerate += 1;
            continue;
        }
        if !pair_admissible(inst, p, radius) {
            out.tally.skipped += 1;
            continue;
        }
        out.tally.used += 1;
        let sx = SoftmaxState::new(inst, &p.x)?;
        let sy = SoftmaxState::new(inst, &p.y)?;
        hypotheses_ok &= sx.alpha().ln >= beta.ln() && sy.alpha().ln >= beta.ln();
        let hx = hessian_materialize(&hessian_decomposed(&sx, inst), inst, HessianMode::Full);
        let hy = hessian_materialize(&hessian_decomposed(&sy, inst), inst, HessianMode::Full);
        let ratio = sym_spectral_norm(&(hx - hy)) / dx;
        out.ratio_max = out.ratio_max.max(ratio);
        out.hessian_bound = out.hessian_bound.worse(Comparison::new(ln(ratio), hess_bound_ln));

        let df = (sx.f() - sy.f()).norm();
        let norms = g_term_norms(sx.f(), sy.f(), inst.b());
        let g_sum = norms[0] + norms.iter().sum::<f64>();
        if df > 0.0 {
            out.g_sum_ratio_max = out.g_sum_ratio_max.max(g_sum / df);
        }
        out.g_sum_bound = out
            .g_sum_bound
            .worse(Comparison::new(ln(g_sum), ln(100.0 * radius) + ln(df)));
        for i in 0..8 {
            out.g_terms[i] = out.g_terms[i].worse(Comparison::new(ln(norms[i]), ln(coeffs[i]) + ln(df)));
        }
    }
    out.hypotheses_ok = hypotheses_ok;
    Ok(out)
}

/// Names of the chain inequalities checked by [`f_lipschitz_probe`].
pub const CHAIN_NAMES: [&str; 8] = [
    "exp_norm",        // ||exp(Ax)|| <= sqrt(n) exp(R^2)
    "exp_lipschitz",   // ||exp(Ax) - exp(Ay)|| <= 2 sqrt(n) R exp(R^2) ||x - y||
    "alpha_diff",      // |alpha(x) - alpha(y)| <= sqrt(n) ||exp(Ax) - exp(Ay)||
    "alpha_inv_diff",  // |1/alpha(x) - 1/alpha(y)| <= beta^-2 |alpha(x) - alpha(y)|
    "f_lipschitz",     // ||f(x) - f(y)|| <= R_f ||x - y||
    "c_lipschitz",     // ||c(x) - c(y)|| <= R_f ||x - y||
    "g_lipschitz",     // ||g(x) - g(y)|| <= 16 R R_f ||x - y||
    "g_lipschitz_rinf", // ||g(x) - g(y)|| <= 8 ||A|| R_f R_inf ||x - y||
];

#[derive(Debug, Clone, PartialEq)]
pub struct FLipschitzProbe {
    pub tally: PairTally,
    /// `R_f = beta^-2 n^1.5 exp(3 R^2)`.
    pub r_f: LogBound,
    /// `max ||f(x) - f(y)|| / ||x - y||`.
    pub f_ratio_max: f64,
    /// Worst pair for each entry of [`CHAIN_NAMES`].
    pub chain: [Comparison; 8],
    /// `alpha >= beta` at every used point.
    pub alpha_ok: bool,
}

impl FLipschitzProbe {
    pub fn holds(&self) -> bool {
        self.chain.iter().all(Comparison::holds)
    }

    pub fn vacuous(&self) -> bool {
        self.chain.iter().any(Comparison::vacuous)
    }
}

/// `ln ||exp(u) - exp(v)||` and `ln |sum(exp(u) - exp(v))|` without overflow.
fn ln_exp_differences(u: &DVector<f64>, v: &DVector<f64>) -> (f64, f64) {
    let m = u.max().max(v.max());
    let diff = DVector::from_fn(u.len(), |i, _| (u[i] - m).exp() - (v[i] - m).exp());
    (m + diff.norm().ln(), m + diff.sum().abs().ln())
}

/// Checks the chain of Lipschitz inequalities for `exp(Ax)`, `alpha`,
/// `alpha^-1`, `f`, `c` and the softmax gradient `g` on each admissible pair.
pub fn f_lipschitz_probe(
    inst: &ProblemInstance,
    pairs: &[ProbePair],
    radius: f64,
    beta: LogBound,
) -> Result<FLipschitzProbe> {
    let n = inst.n() as f64;
    let r2 = radius * radius;
    let ln_rf = -2.0 * beta.ln() + 1.5 * n.ln() + 3.0 * r2;
    let ln_a = spectral_norm(inst.a()).ln();
    let neutral = Comparison::new(f64::NEG_INFINITY, 0.0);
    let mut out = FLipschitzProbe {
        tally: PairTally::default(),
        r_f: LogBound::from_ln(ln_rf),
        f_ratio_max: 0.0,
        chain: [neutral; 8],
        alpha_ok: true,
    };
    for p in pairs {
        let dx = (&p.x - &p.y).norm();
        if dx == 0.0 {
            out.tally.degenerate += 1;
            continue;
        }
        if !pair_admissible(inst, p, radius) {
            out.tally.skipped += 1;
            continue;
        }
        out.tally.used += 1;
        let ln_dx = dx.ln();
        let sx = SoftmaxState::new(inst, &p.x)?;
        let sy = SoftmaxState::new(inst, &p.y)?;
        let (lax, lay) = (sx.alpha().ln, sy.alpha().ln);
        out.alpha_ok &= lax >= beta.ln() && lay >= beta.ln();

        let ln_exp_norm = 0.5 * crate::softmax::log_sum_exp_normalize(&(sx.ax() * 2.0)).0;
        let (ln_dexp, ln_dalpha) = ln_exp_differences(sx.ax(), sy.ax());
        let ln_dalpha_inv = ln_dalpha - lax - lay;
        let df = (sx.f() - sy.f()).norm();
        let dc = (sx.c() - sy.c()).norm();
        let dg = (gradient_exp(&sx, inst) - gradient_exp(&sy, inst)).norm();
        let r_inf = [sx.f().norm(), sy.f().norm(), sx.c().norm(), sy.c().norm()]
            .into_iter()
            .fold(0.0, f64::max);

        out.f_ratio_max = out.f_ratio_max.max(df / dx);
        let checks = [
            Comparison::new(ln_exp_norm, 0.5 * n.ln() + r2),
            Comparison::new(ln_dexp, 2f64.ln() + 0.5 * n.ln() + radius.ln() + r2 + ln_dx),
            Comparison::new(ln_dalpha, 0.5 * n.ln() + ln_dexp),
            Comparison::new(ln_dalpha_inv, -2.0 * beta.ln() + ln_dalpha),
            Comparison::new(df.ln(), ln_rf + ln_dx),
            Comparison::new(dc.ln(), ln_rf + ln_dx),
            Comparison::new(dg.ln(), 16f64.ln() + radius.ln() + ln_rf + ln_dx),
            Comparison::new(dg.ln(), 8f64.ln() + ln_a + ln_rf + r_inf.ln() + ln_dx),
        ];
        for (slot, c) in out.chain.iter_mut().zip(checks) {
            *slot = slot.worse(c);
        }
    }
    Ok(out)
}

/// Minimum of `ln alpha(x)` over `count` points drawn uniformly from the
/// radius-`R` ball, against `ln beta = -R^2`.
pub fn min_alpha_probe(inst: &ProblemInstance, radius: f64, count: usize, seed: u64) -> Result<Comparison> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = inst.d();
    let mut min_ln = f64::INFINITY;
    for _ in 0..count {
        let r = radius * rng.random::<f64>().powf(1.0 / d as f64);
        let x = random_direction(&mut rng, d) * r;
        min_ln = min_ln.min(SoftmaxState::new(inst, &x)?.alpha().ln);
    }
    // Lower bound: beta <= alpha, i.e. -ln alpha <= -ln beta.
    Ok(Comparison::new(-min_ln, radius * radius))
}

/// Aggregate certificate for one instance and point.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCertificate {
    pub b_bounds: BBounds,
    /// `b >= 0` and `||b||_1 <= 1`; when false the `B` check is informational.
    pub b_bounds_applicable: bool,
    pub hessian_pd: PdCheck,
    pub w2_sandwich: Option<GenEigRange>,
    pub beta_probe: Comparison,
    pub lipschitz: HessianLipschitzProbe,
    pub f_lipschitz: FLipschitzProbe,
    pub bounds: BetaM,
    pub l: f64,
    pub radius: f64,
}

impl SpectralCertificate {
    pub fn passed(&self) -> bool {
        (self.b_bounds.pass || !self.b_bounds_applicable)
            && self.hessian_pd.pass
            && self.w2_sandwich.is_some_and(|s| s.pass)
            && self.beta_probe.holds()
            && self.lipschitz.holds()
            && self.f_lipschitz.holds()
    }
}

/// Runs every certificate check at `x` and on `probes` random pairs.
pub fn certify(
    inst: &ProblemInstance,
    x: &DVector<f64>,
    l: f64,
    radius: f64,
    probes: usize,
    seed: u64,
) -> Result<SpectralCertificate> {
    let state = SoftmaxState::new(inst, x)?;
    let decomp = hessian_decomposed(&state, inst);
    let bounds = beta_and_m(inst.n(), radius);
    let pairs = probe_pairs(inst, radius, probes, seed);
    let b_ok = inst.b().iter().all(|&v| v >= 0.0) && inst.b().iter().sum::<f64>() <= 1.0 + 1e-12;
    Ok(SpectralCertificate {
        b_bounds: check_b_bounds(&decomp),
        b_bounds_applicable: b_ok,
        hessian_pd: check_hessian_pd(inst, x, l)?,
        w2_sandwich: w2_sandwich_of(&decomp).ok(),
        beta_probe: min_alpha_probe(inst, radius, probes, seed ^ 0x9e37_79b9_7f4a_7c15)?,
        lipschitz: probe_lipschitz(inst, &pairs, radius)?,
        f_lipschitz: f_lipschitz_probe(inst, &pairs, radius, bounds.beta_lower)?,
        bounds,
        l,
        radius,
    })
}

fn verdict(c: &Comparison) -> &'static str {
    match (c.holds(), c.vacuous()) {
        (true, true) => "pass(vacuous)",
        (true, false) => "pass",
        (false, _) => "fail",
    }
}

fn ok(b: bool) -> &'static str {
    if b {
        "pass"
    } else {
        "fail"
    }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ln_measured={} ln_bound={} {}", self.measured_ln, self.bound_ln, verdict(self))
    }
}

impl fmt::Display for SpectralCertificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "R={}", self.radius)?;
        writeln!(f, "l={}", self.l)?;
        writeln!(f, "beta_lower={}", self.bounds.beta_lower)?;
        writeln!(f, "M_upper={}", self.bounds.m_upper)?;
        writeln!(f, "lambda_min_B={}", self.b_bounds.lambda_min)?;
        writeln!(f, "lambda_max_B={}", self.b_bounds.lambda_max)?;
        let b_state = if self.b_bounds_applicable { ok(self.b_bounds.pass) } else { "informational" };
        writeln!(f, "B_bounds={b_state}")?;
        writeln!(f, "lambda_min_H={}", self.hessian_pd.lambda_min)?;
        writeln!(f, "hessian_pd={}", ok(self.hessian_pd.pass))?;
        match &self.w2_sandwich {
            Some(s) => {
                writeln!(f, "w2_gen_eig_min={}", s.min)?;
                writeln!(f, "w2_gen_eig_max={}", s.max)?;
                writeln!(f, "w2_sandwich={}", ok(s.pass))?;
            }
            None => writeln!(f, "w2_sandwich=singular")?,
        }
        writeln!(f, "beta_measured=exp({})", -self.beta_probe.measured_ln)?;
        writeln!(f, "beta_bound={}", verdict(&self.beta_probe))?;
        let lp = &self.lipschitz;
        writeln!(f, "probe_pairs_used={}", lp.tally.used)?;
        writeln!(f, "probe_pairs_skipped={}", lp.tally.skipped + lp.tally.degenerate)?;
        writeln!(f, "lipschitz_ratio_max={}", lp.ratio_max)?;
        writeln!(f, "hessian_lipschitz={}", lp.hessian_bound)?;
        writeln!(f, "g_sum_ratio_max={}", lp.g_sum_ratio_max)?;
        writeln!(f, "g_sum_bound={}", lp.g_sum_bound)?;
        for (i, c) in lp.g_terms.iter().enumerate() {
            writeln!(f, "g{}_bound={}", i + 1, verdict(c))?;
        }
        writeln!(f, "lipschitz_hypotheses={}", ok(lp.hypotheses_ok))?;
        writeln!(f, "R_f={}", self.f_lipschitz.r_f)?;
        writeln!(f, "f_ratio_max={}", self.f_lipschitz.f_ratio_max)?;
        for (name, c) in CHAIN_NAMES.iter().zip(self.f_lipschitz.chain.iter()) {
            writeln!(f, "{name}={c}")?;
        }
        writeln!(f, "{}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{generate_trivial, generate_with_reference, validate, ValidationMode};
    use approx::assert_relative_eq;

    #[test]
    fn beta_and_m_closed_forms() {
        let z = beta_and_m(9, 0.0);
        assert_eq!(z.beta_lower.value(), 1.0);
        assert_relative_eq!(z.m_upper.value(), 27.0, max_relative = 1e-14);
        let one = beta_and_m(4, 1.0);
        assert_relative_eq!(one.beta_lower.value(), (-1.0f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(one.m_upper.value(), 8.0 * 30f64.exp(), max_relative = 1e-14);
        let big = beta_and_m(10, 10.0);
        assert!(!big.m_upper.is_representable());
        assert!(big.m_upper.to_string().starts_with("exp("));
    }

    #[test]
    fn scalar_b_is_in_range() {
        // n = 1: f = (1), b = (1) gives c = 0, s1 = 1, u2 = d2 = 1, d1 = 0, so
        // B = 1 - 2 + 1 = 0.
        let inst = ProblemInstance::new(
            DMatrix::from_row_slice(1, 1, &[2.0]),
            DVector::from_vec(vec![1.0]),
            DVector::from_vec(vec![0.0]),
        )
        .unwrap();
        let s = SoftmaxState::new(&inst, &DVector::from_vec(vec![0.3])).unwrap();
        let dec = hessian_decomposed(&s, &inst);
        assert_eq!(dec.materialize_b()[(0, 0)], 0.0);
        assert!(check_b_bounds(&dec).pass);
    }

    #[test]
    fn b_psd_when_target_is_fitted() {
        for seed in 0..20 {
            let (inst, x_ref) =
                generate_with_reference(15, 3, 10.0, 1.0, 0.3, ValidationMode::Sketch, seed).unwrap();
            let s = SoftmaxState::new(&inst, &x_ref).unwrap();
            let bb = check_b_bounds(&hessian_decomposed(&s, &inst));
            assert!(bb.lambda_min >= -1e-12 && bb.pass, "{bb:?}");
        }
    }

    #[test]
    fn identity_design_convexity() {
        let l: f64 = 2.0;
        let d = 3;
        let inst = ProblemInstance::new(
            DMatrix::identity(d, d),
            DVector::from_element(d, 1.0 / 3.0),
            DVector::from_element(d, (4.0 + l).sqrt()),
        )
        .unwrap();
        for x in [DVector::zeros(d), DVector::from_vec(vec![1.0, -2.0, 0.5])] {
            let pd = check_hessian_pd(&inst, &x, l).unwrap();
            assert!(pd.pass, "{pd:?}");
        }
    }

    #[test]
    fn zero_weights_fail_pd_informationally() {
        let g = generate_trivial(8, 2, 10.0, 1.0, 2).unwrap();
        let inst = ProblemInstance::new(g.instance.a().clone(), g.instance.b().clone(), DVector::zeros(8)).unwrap();
        let pd = check_hessian_pd(&inst, &DVector::zeros(2), 1.0).unwrap();
        assert!(!pd.pass);
        assert!(matches!(check_w2_sandwich(&inst, &DVector::zeros(2)), Err(Error::Singular(_))));
    }

    #[test]
    fn w2_sandwich_with_zero_b_is_one() {
        let dec = HessianDecomposition {
            f: DVector::zeros(3),
            s1: 0.0,
            u2: DVector::zeros(3),
            d1: DVector::zeros(3),
            d2: DVector::zeros(3),
            w2: DVector::from_vec(vec![1.0, 4.0, 9.0]),
        };
        let r = w2_sandwich_of(&dec).unwrap();
        assert_relative_eq!(r.min, 1.0, epsilon = 1e-14);
        assert_relative_eq!(r.max, 1.0, epsilon = 1e-14);
        assert!(r.pass);
    }

    #[test]
    fn sandwich_holds_on_sketch_valid_instances() {
        for seed in 0..10 {
            let g = generate_trivial(12, 3, 10.0, 1.0, seed).unwrap();
            let x = DVector::from_vec(vec![0.3, -0.2, 0.1]);
            assert!(check_w2_sandwich(&g.instance, &x).unwrap().pass);
        }
    }

    #[test]
    fn degenerate_pairs_skipped() {
        let g = generate_trivial(6, 2, 2.0, 1.0, 4).unwrap();
        let x = DVector::from_vec(vec![0.1, 0.2]);
        let pairs = vec![ProbePair { x: x.clone(), y: x }];
        let lp = probe_lipschitz(&g.instance, &pairs, 2.0).unwrap();
        assert_eq!(lp.tally, PairTally { used: 0, degenerate: 1, skipped: 0 });
        assert_eq!(lp.ratio_max, 0.0);
        let fp = f_lipschitz_probe(&g.instance, &pairs, 2.0, beta_and_m(6, 2.0).beta_lower).unwrap();
        assert_eq!(fp.tally.degenerate, 1);
        assert!(fp.holds());
    }

    #[test]
    fn far_pairs_skipped() {
        let g = generate_trivial(6, 2, 2.0, 1.0, 4).unwrap();
        let pairs = vec![ProbePair {
            x: DVector::from_vec(vec![0.0, 0.0]),
            y: DVector::from_vec(vec![1.0, 0.0]),
        }];
        assert_eq!(probe_lipschitz(&g.instance, &pairs, 2.0).unwrap().tally.skipped, 1);
    }

    #[test]
    fn probe_pairs_are_admissible() {
        let (inst, _) = generate_with_reference(10, 3, 2.0, 1.0, 0.5, ValidationMode::Sketch, 1).unwrap();
        for p in probe_pairs(&inst, 2.0, 50, 7) {
            assert!(pair_admissible(&inst, &p, 2.0));
            assert_relative_eq!((inst.a() * (&p.x - &p.y)).amax(), PAIR_INF_STEP, max_relative = 1e-12);
        }
    }

    #[test]
    fn small_radius_chain_holds() {
        let (inst, _) = generate_with_reference(10, 3, 2.0, 1.0, 0.5, ValidationMode::Sketch, 3).unwrap();
        let pairs = probe_pairs(&inst, 2.0, 40, 11);
        let beta = beta_and_m(10, 2.0).beta_lower;
        let fp = f_lipschitz_probe(&inst, &pairs, 2.0, beta).unwrap();
        assert_eq!(fp.tally.used, 40);
        assert!(fp.holds() && !fp.vacuous(), "{fp:?}");
        let lp = probe_lipschitz(&inst, &pairs, 2.0).unwrap();
        assert!(lp.holds(), "{lp:?}");
        assert!(!lp.hessian_bound.vacuous());
    }

    #[test]
    fn certificate_report_ends_with_verdict() {
        let g = generate_trivial(10, 3, 10.0, 1.0, 5).unwrap();
        let rep = validate(&g.instance, 1.0, ValidationMode::Sketch, Some(10.0)).unwrap();
        let cert = certify(&g.instance, &DVector::from_vec(vec![0.1, 0.0, -0.1]), 1.0, rep.radius, 10, 1).unwrap();
        let text = cert.to_string();
        assert!(cert.passed(), "{text}");
        assert!(text.trim_end().ends_with("PASS"));
        assert!(text.contains("hessian_lipschitz=") && text.contains("pass(vacuous)"));
    }
}
