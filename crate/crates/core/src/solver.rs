//! Newton iterations on the regularized softmax loss.
//!
//! Three step rules share one loop: the exact Newton step, the step with only
//! the diagonal part `A^T (B_diag + W^2) A` of the Hessian, and the same step
//! with `B_diag + W^2` replaced by a leverage-score sample `D~`.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{spd_solve, weighted_gram};
use crate::problem::{ProblemInstance, DEFAULT_RADIUS};
use crate::sketch::{subsample, SketchConfig, SparseDiagonal};
use crate::softmax::{
    gradient_total, hessian_decomposed, hessian_materialize, loss_total, HessianMode, SoftmaxState,
};
use crate::spectral::{beta_and_m, LogBound};

/// Per-iteration contraction factor the convergence argument guarantees.
pub const CONTRACTION: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverMode {
    ExactFull,
    ExactDiag,
    SketchedDiag,
}

impl SolverMode {
    pub const ALL: [SolverMode; 3] = [SolverMode::ExactFull, SolverMode::ExactDiag, SolverMode::SketchedDiag];
}

impl FromStr for SolverMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact_full" => Ok(Self::ExactFull),
            "exact_diag" => Ok(Self::ExactDiag),
            "sketched_diag" => Ok(Self::SketchedDiag),
            _ => Err(Error::InvalidParameter(format!(
                "unknown mode {s:?} (expected exact_full, exact_diag or sketched_diag)"
            ))),
        }
    }
}

impl fmt::Display for SolverMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverMode::ExactFull => "exact_full",
            SolverMode::ExactDiag => "exact_diag",
            SolverMode::SketchedDiag => "sketched_diag",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopRule {
    /// Run `choose_T(||x0 - x*||, eps)` iterations; needs `x*`.
    FixedT,
    /// Stop once `||g|| <= grad_tol`.
    GradNorm,
}

impl FromStr for StopRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed_T" | "fixed_t" => Ok(Self::FixedT),
            "grad_norm" => Ok(Self::GradNorm),
            _ => Err(Error::InvalidParameter(format!("unknown stop rule {s:?} (expected fixed_T or grad_norm)"))),
        }
    }
}

impl fmt::Display for StopRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopRule::FixedT => "fixed_T",
            StopRule::GradNorm => "grad_norm",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub l: f64,
    pub mode: SolverMode,
    pub max_iters: usize,
    pub stop_rule: StopRule,
    /// `None` means `1e-10 (1 + |loss|)` at the current iterate.
    pub grad_tol: Option<f64>,
    /// Radius used for the closed-form `M` in the shrink-bound diagnostics.
    pub radius: f64,
    pub sketch: SketchConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-8,
            delta: 0.05,
            l: 1.0,
            mode: SolverMode::SketchedDiag,
            max_iters: 100,
            stop_rule: StopRule::GradNorm,
            grad_tol: None,
            radius: DEFAULT_RADIUS,
            sketch: SketchConfig::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 0.1) {
            return Err(Error::InvalidParameter(format!("eps must be in (0, 0.1), got {}", self.epsilon)));
        }
        if !(self.delta > 0.0 && self.delta < 0.1) {
            return Err(Error::InvalidParameter(format!("delta must be in (0, 0.1), got {}", self.delta)));
        }
        if !(self.l.is_finite() && self.l > 0.0) {
            return Err(Error::InvalidParameter(format!("l must be positive, got {}", self.l)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
        }
        if let Some(tol) = self.grad_tol {
            if !(tol.is_finite() && tol > 0.0) {
                return Err(Error::InvalidParameter(format!("grad_tol must be positive, got {tol}")));
            }
        }
        if !(self.radius.is_finite() && self.radius >= 0.0) {
            return Err(Error::InvalidParameter(format!("R must be nonnegative, got {}", self.radius)));
        }
        if self.mode == SolverMode::SketchedDiag && self.sketch.enabled {
            self.sketch.validate()?;
        }
        Ok(())
    }

    fn grad_tol_at(&self, loss: f64) -> f64 {
        self.grad_tol.unwrap_or(1e-10 * (1.0 + loss.abs()))
    }
}

/// State of the iterate `x_t` and of the step that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    pub loss: f64,
    pub grad_norm: f64,
    /// `||x_t - x_{t-1}||`; zero at `t = 0`.
    pub step_norm: f64,
    /// `||x_t - x*||` when `x*` is known.
    pub r: Option<f64>,
    /// `r_t / r_{t-1}`.
    pub contraction: Option<f64>,
    /// Sampled rows of the sketch that produced `x_t`.
    pub nnz: Option<usize>,
    /// Wall time of the step that produced `x_t`.
    pub ms: f64,
    /// The step used `D = W^2` because `B_diag + W^2` had a non-positive entry.
    pub used_fallback: bool,
    /// `r_t <= 2 (eps0 + rbar / (l - rbar)) r_{t-1}` with `rbar = M r_{t-1}`,
    /// evaluated only when `rbar < l`.
    pub shrink_ok: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    Diverged,
    IterationCap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverTrace {
    pub records: Vec<IterRecord>,
    pub status: Status,
    pub mode: SolverMode,
    /// Closed-form `M` at the configured radius.
    pub m_upper: LogBound,
    /// Iteration budget `T` of the fixed-`T` rule.
    pub budget: Option<usize>,
}

pub const TRACE_HEADER: &str = "iter,loss,grad_norm,step_norm,r,contraction,nnz,ms";

impl SolverTrace {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{TRACE_HEADER}\n");
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{:.3}",
                r.iter,
                r.loss,
                r.grad_norm,
                r.step_norm,
                opt(r.r),
                opt(r.contraction),
                r.nnz.map(|n| n.to_string()).unwrap_or_default(),
                r.ms
            )
            .unwrap();
        }
        out
    }

    pub fn last(&self) -> &IterRecord {
        self.records.last().expect("trace has at least the initial record")
    }

    /// Iterations taken, i.e. records after the initial point.
    pub fn iterations(&self) -> usize {
        self.records.len() - 1
    }

    /// Largest `r_t / r_{t-1}` over the trace.
    pub fn max_contraction(&self) -> Option<f64> {
        self.records.iter().filter_map(|r| r.contraction).reduce(f64::max)
    }

    /// Whether `M r_t <= 0.1 l` is preserved from each step to the next,
    /// given the contraction held. `None` when `M` is not representable.
    pub fn good_region_preserved(&self, l: f64) -> Option<bool> {
        if !self.m_upper.is_representable() {
            return None;
        }
        let m = self.m_upper.value();
        let ok = self.records.windows(2).all(|w| match (w[0].r, w[1].r) {
            (Some(prev), Some(cur)) => {
                !(cur <= CONTRACTION * prev && m * prev <= 0.1 * l) || m * cur <= 0.1 * l
            }
            _ => true,
        });
        Some(ok)
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub x: DVector<f64>,
    pub trace: SolverTrace,
}

/// Smallest `T` with `0.4^T r0 <= eps`; zero when `eps >= r0`.
#[allow(non_snake_case)]
pub fn choose_T(r0: f64, epsilon: f64) -> usize {
    if !(r0 > epsilon) {
        return 0;
    }
    let within = |t: usize| CONTRACTION.powi(t as i32) * r0 <= epsilon;
    let mut t = ((r0 / epsilon).ln() / (1.0 / CONTRACTION).ln()).ceil().max(0.0) as usize;
    while !within(t) {
        t += 1;
    }
    while t > 0 && within(t - 1) {
        t -= 1;
    }
    t
}

/// `x - H^-1 g` with the full or diagonal-only Hessian.
pub fn newton_step_exact(inst: &ProblemInstance, state: &SoftmaxState, mode: HessianMode) -> Result<DVector<f64>> {
    let g = gradient_total(state, inst);
    let h = hessian_materialize(&hessian_decomposed(state, inst), inst, mode);
    Ok(state.x() - spd_solve(&h, &g)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SketchedStep {
    pub x_next: DVector<f64>,
    /// `None` when sampling is disabled.
    pub sketch: Option<SparseDiagonal>,
    pub used_fallback: bool,
}

/// `x - (A^T D~ A)^-1 g` with `D~` sampled from `D = B_diag + W^2`.
///
/// When some entry of `D` is not positive, `D = W^2` is used instead. With
/// sampling disabled the step is computed from `D` exactly as in the
/// diagonal-only exact step.
pub fn newton_step_sketched(inst: &ProblemInstance, state: &SoftmaxState, sketch: &SketchConfig) -> Result<SketchedStep> {
    let g = gradient_total(state, inst);
    let decomp = hessian_decomposed(state, inst);
    let mut d = decomp.diag_weights();
    let used_fallback = d.iter().any(|&v| !(v > 0.0));
    if used_fallback {
        d = decomp.w2.clone();
        if let Some(index) = d.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::NonPositiveDiagonal { index, value: d[index] });
        }
    }
    if !sketch.enabled {
        let h = weighted_gram(inst.a(), &d);
        return Ok(SketchedStep {
            x_next: state.x() - spd_solve(&h, &g)?,
            sketch: None,
            used_fallback,
        });
    }
    let d_tilde = subsample(inst.a(), &d, sketch)?;
    let h = d_tilde.gram(inst.a());
    let step = spd_solve(&h, &g).map_err(|e| match e {
        Error::NotPositiveDefinite { .. } => Error::SingularSketch { nnz: d_tilde.nnz() },
        other => other,
    })?;
    Ok(SketchedStep {
        x_next: state.x() - step,
        sketch: Some(d_tilde),
        used_fallback,
    })
}

fn check_vector(name: &'static str, v: &DVector<f64>, d: usize) -> Result<()> {
    if v.len() != d {
        return Err(Error::Dimension(format!("{name} has length {}, expected {d}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(name));
    }
    Ok(())
}

/// Runs the configured Newton iteration from `x0`.
///
/// With [`StopRule::FixedT`] the loop runs at most `choose_T(r0, eps)`
/// iterations and stops early once `||x_t - x*|| <= eps`; reaching the budget
/// without that is an [`Error::IterationCap`].
pub fn solve(
    inst: &ProblemInstance,
    x0: &DVector<f64>,
    cfg: &SolverConfig,
    x_star: Option<&DVector<f64>>,
) -> Result<SolveOutcome> {
    cfg.validate()?;
    check_vector("x0", x0, inst.d())?;
    if let Some(xs) = x_star {
        check_vector("x*", xs, inst.d())?;
    }
    let dist = |x: &DVector<f64>| x_star.map(|xs| (x - xs).norm());
    let budget = match (cfg.stop_rule, x_star) {
        (StopRule::FixedT, None) => {
            return Err(Error::InvalidParameter("the fixed_T stop rule needs x*".into()));
        }
        (StopRule::FixedT, Some(_)) => Some(choose_T(dist(x0).unwrap_or(0.0), cfg.epsilon)),
        (StopRule::GradNorm, _) => None,
    };
    let cap = budget.map_or(cfg.max_iters, |t| t.min(cfg.max_iters));
    // Union bound over the iterations that may sample.
    let t_union = budget.unwrap_or(cfg.max_iters).max(1);
    let m_upper = beta_and_m(inst.n(), cfg.radius).m_upper;
    let eps0 = match cfg.mode {
        SolverMode::ExactFull => Some(0.0),
        SolverMode::SketchedDiag => Some(if cfg.sketch.enabled { cfg.sketch.epsilon0 } else { 0.0 }),
        SolverMode::ExactDiag => None,
    };

    let mut trace = SolverTrace {
        records: Vec::new(),
        status: Status::Converged,
        mode: cfg.mode,
        m_upper,
        budget,
    };
    let mut x = x0.clone();
    let mut state = SoftmaxState::new(inst, &x)?;
    let mut loss0 = 0.0;
    let mut step_info = (0.0, None, 0.0, false);
    for t in 0.. {
        let loss = loss_total(&state, inst);
        let g = gradient_total(&state, inst);
        let r = dist(&x);
        let prev_r = trace.records.last().and_then(|p: &IterRecord| p.r);
        let contraction = match (r, prev_r) {
            (Some(cur), Some(prev)) if prev > 0.0 => Some(cur / prev),
            _ => None,
        };
        let shrink_ok = match (r, prev_r, eps0) {
            (Some(cur), Some(prev), Some(e0)) if m_upper.is_representable() => {
                let rbar = m_upper.value() * prev;
                (rbar < cfg.l).then(|| cur <= 2.0 * (e0 + rbar / (cfg.l - rbar)) * prev * (1.0 + 1e-12))
            }
            _ => None,
        };
        let (step_norm, nnz, ms, used_fallback) = step_info;
        trace.records.push(IterRecord {
            iter: t,
            loss,
            grad_norm: g.norm(),
            step_norm,
            r,
            contraction,
            nnz,
            ms,
            used_fallback,
            shrink_ok,
        });
        if t == 0 {
            loss0 = loss;
        }
        if !loss.is_finite() || loss > 5.0 * loss0 + 1e-12 {
            trace.status = Status::Diverged;
            return Err(Error::Diverged { trace: Box::new(trace) });
        }
        let done = match cfg.stop_rule {
            StopRule::FixedT => r.is_some_and(|r| r <= cfg.epsilon),
            StopRule::GradNorm => g.norm() <= cfg.grad_tol_at(loss),
        };
        if done {
            return Ok(SolveOutcome { x, trace });
        }
        if t == cap {
            trace.status = Status::IterationCap;
            return Err(Error::IterationCap { cap, trace: Box::new(trace) });
        }

        let start = Instant::now();
        let (x_next, nnz, used_fallback) = match cfg.mode {
            SolverMode::ExactFull => (newton_step_exact(inst, &state, HessianMode::Full)?, None, false),
            SolverMode::ExactDiag => (newton_step_exact(inst, &state, HessianMode::DiagOnly)?, None, false),
            SolverMode::SketchedDiag => {
                let sk = SketchConfig {
                    delta: cfg.sketch.delta / t_union as f64,
                    seed: cfg.sketch.seed.wrapping_add(t as u64),
                    ..cfg.sketch
                };
                let step = newton_step_sketched(inst, &state, &sk)?;
                (step.x_next, step.sketch.map(|s| s.nnz()), step.used_fallback)
            }
        };
        let ms = start.elapsed().as_secs_f64() * 1e3;
        if x_next.iter().any(|v| !v.is_finite()) {
            trace.status = Status::Diverged;
            return Err(Error::Diverged { trace: Box::new(trace) });
        }
        step_info = ((&x_next - &x).norm(), nnz, ms, used_fallback);
        x = x_next;
        state = SoftmaxState::new(inst, &x)?;
    }
    unreachable!()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::generate_trivial;

    #[test]
    fn choose_t_examples() {
        assert_eq!(choose_T(1.0, 0.4), 1);
        assert_eq!(choose_T(1.0, 1e-8), 21);
        assert_eq!(choose_T(1.0, 1.0), 0);
        assert_eq!(choose_T(1e-3, 1.0), 0);
        assert_eq!(choose_T(1.0, 0.17), 2);
    }

    #[test]
    fn zero_gradient_step_is_identity() {
        let g = generate_trivial(10, 3, 10.0, 1.0, 1).unwrap();
        let s = SoftmaxState::new(&g.instance, &g.x_star).unwrap();
        let next = newton_step_exact(&g.instance, &s, HessianMode::Full).unwrap();
        assert_eq!(next, g.x_star);
    }

    #[test]
    fn start_at_optimum_returns_immediately() {
        let g = generate_trivial(10, 3, 10.0, 1.0, 1).unwrap();
        let cfg = SolverConfig { stop_rule: StopRule::FixedT, ..SolverConfig::default() };
        let out = solve(&g.instance, &g.x_star, &cfg, Some(&g.x_star)).unwrap();
        assert_eq!(out.trace.iterations(), 0);
        assert_eq!(out.trace.last().r, Some(0.0));
    }

    #[test]
    fn fixed_t_requires_optimum() {
        let g = generate_trivial(10, 3, 10.0, 1.0, 1).unwrap();
        let cfg = SolverConfig { stop_rule: StopRule::FixedT, ..SolverConfig::default() };
        assert!(matches!(solve(&g.instance, &g.x_star, &cfg, None), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn config_ranges() {
        let bad = [
            SolverConfig { epsilon: 0.1, ..SolverConfig::default() },
            SolverConfig { delta: 0.0, ..SolverConfig::default() },
            SolverConfig { l: -1.0, ..SolverConfig::default() },
            SolverConfig { max_iters: 0, ..SolverConfig::default() },
            SolverConfig { grad_tol: Some(0.0), ..SolverConfig::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
        assert!(SolverConfig::default().validate().is_ok());
    }

    #[test]
    fn csv_layout() {
        let g = generate_trivial(10, 3, 10.0, 1.0, 1).unwrap();
        let x0 = DVector::from_vec(vec![1e-3, 0.0, -1e-3]);
        let cfg = SolverConfig { mode: SolverMode::ExactFull, ..SolverConfig::default() };
        let out = solve(&g.instance, &x0, &cfg, Some(&g.x_star)).unwrap();
        let csv = out.trace.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(TRACE_HEADER));
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first.len(), 8);
        assert_eq!(first[0], "0");
        assert_eq!(first[5], "");
        assert_eq!(csv.lines().count(), out.trace.records.len() + 1);
    }

    #[test]
    fn modes_parse_and_print() {
        for m in SolverMode::ALL {
            assert_eq!(m.to_string().parse::<SolverMode>().unwrap(), m);
        }
        assert!("newton".parse::<SolverMode>().is_err());
        assert_eq!("fixed_T".parse::<StopRule>().unwrap(), StopRule::FixedT);
    }
}
