//! Property suites run over many random cases or one instance bundle.
//!
//! Each case is built from its own seed, so results do not depend on the
//! number of worker threads; reports are merged in case order.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::finite_diff;
use crate::problem::{generate_with_reference, random_direction, validate, ProblemInstance, ValidationMode};
use crate::sketch::{certify_sandwich, subsample, SketchConfig};
use crate::softmax::{
    gradient_total, hessian_decomposed, hessian_materialize, loss_total, HessianMode, SoftmaxState,
};
use crate::spectral::{
    beta_and_m, check_b_bounds, check_hessian_pd, f_lipschitz_probe, min_alpha_probe, probe_lipschitz, probe_pairs,
    w2_sandwich_of,
};

pub const GRADIENT_FD_TOL: f64 = 1e-6;
pub const HESSIAN_FD_TOL: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Check {
    Assumptions,
    GradientFd,
    HessianFd,
    BBounds,
    HessianPd,
    W2Sandwich,
    Lipschitz,
    Beta,
    Sandwich,
}

impl Check {
    pub const ALL: [Check; 9] = [
        Check::Assumptions,
        Check::GradientFd,
        Check::HessianFd,
        Check::BBounds,
        Check::HessianPd,
        Check::W2Sandwich,
        Check::Lipschitz,
        Check::Beta,
        Check::Sandwich,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::Assumptions => "assumptions",
            Check::GradientFd => "gradient_fd",
            Check::HessianFd => "hessian_fd",
            Check::BBounds => "B_bounds",
            Check::HessianPd => "hessian_pd",
            Check::W2Sandwich => "w2_sandwich",
            Check::Lipschitz => "lipschitz",
            Check::Beta => "beta",
            Check::Sandwich => "sandwich",
        }
    }
}

impl FromStr for Check {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Check::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Check::ALL.iter().map(|c| c.name()).collect();
                Error::InvalidParameter(format!("unknown check {s:?} (expected one of {})", names.join(", ")))
            })
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub l: f64,
    /// Radius of `||A||` and of the probed points.
    pub radius: f64,
    /// Points or pairs per case for the probe suites.
    pub probes: usize,
    pub epsilon0: f64,
    pub delta: f64,
    pub oversample: f64,
    /// Sampling trials for the sketch suite.
    pub trials: usize,
    pub jobs: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            l: 1.0,
            radius: 2.0,
            probes: 20,
            epsilon0: 0.1,
            delta: 0.05,
            oversample: 8.0,
            trials: 100,
            jobs: 1,
        }
    }
}

/// A random case: dimensions and the seed everything is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CaseSpec {
    pub n: usize,
    pub d: usize,
    pub seed: u64,
}

/// What a suite runs on.
#[derive(Debug, Clone)]
pub enum Cases {
    Random(Vec<CaseSpec>),
    /// One fixed instance probed at `points` seeded random points.
    Instance { instance: ProblemInstance, points: Vec<u64> },
}

impl Cases {
    /// `count` cases of size `n x d` with seeds `0..count`.
    pub fn random(n: usize, d: usize, count: usize) -> Self {
        Cases::Random((0..count as u64).map(|seed| CaseSpec { n, d, seed }).collect())
    }

    fn len(&self) -> usize {
        match self {
            Cases::Random(v) => v.len(),
            Cases::Instance { points, .. } => points.len(),
        }
    }
}

/// Outcome of one case: pass flag plus named measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseOutcome {
    pub pass: bool,
    pub values: Vec<(&'static str, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub check: Check,
    pub cases: usize,
    pub failures: usize,
    /// Failures tolerated before the suite fails; nonzero only for the
    /// randomized sketch suite.
    pub allowed_failures: usize,
    /// `(name, min, max)` of each measurement over all cases.
    pub summary: Vec<(&'static str, f64, f64)>,
    pub outcomes: Vec<CaseOutcome>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.cases > 0 && self.failures <= self.allowed_failures
    }

    pub fn max(&self, key: &str) -> Option<f64> {
        self.summary.iter().find(|(k, _, _)| *k == key).map(|&(_, _, hi)| hi)
    }

    pub fn min(&self, key: &str) -> Option<f64> {
        self.summary.iter().find(|(k, _, _)| *k == key).map(|&(_, lo, _)| lo)
    }

    fn from_outcomes(check: Check, outcomes: Vec<CaseOutcome>, allowed_failures: usize) -> Self {
        let mut summary: Vec<(&'static str, f64, f64)> = Vec::new();
        for o in &outcomes {
            for &(k, v) in &o.values {
                match summary.iter_mut().find(|(name, _, _)| *name == k) {
                    Some(entry) => {
                        entry.1 = entry.1.min(v);
                        entry.2 = entry.2.max(v);
                    }
                    None => summary.push((k, v, v)),
                }
            }
        }
        Self {
            check,
            cases: outcomes.len(),
            failures: outcomes.iter().filter(|o| !o.pass).count(),
            allowed_failures,
            summary,
            outcomes,
        }
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "check={}", self.check)?;
        writeln!(f, "cases={}", self.cases)?;
        writeln!(f, "passed={}", self.cases - self.failures)?;
        writeln!(f, "failures={}", self.failures)?;
        if self.allowed_failures > 0 {
            writeln!(f, "allowed_failures={}", self.allowed_failures)?;
        }
        for (k, lo, hi) in &self.summary {
            writeln!(f, "{k}_min={lo}")?;
            writeln!(f, "{k}_max={hi}")?;
        }
        writeln!(f, "{}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

/// Target regime of a generated case.
fn case_instance(spec: CaseSpec, opts: &VerifyOptions, mode: ValidationMode) -> Result<ProblemInstance> {
    let (inst, _) = generate_with_reference(spec.n, spec.d, opts.radius, opts.l, 0.5 * opts.radius.min(1.0), mode, spec.seed)?;
    Ok(inst)
}

fn ball_point(rng: &mut ChaCha8Rng, d: usize, radius: f64) -> DVector<f64> {
    random_direction(rng, d) * (radius * rng.random::<f64>().powf(1.0 / d as f64))
}

/// Replaces `b` with a random nonnegative vector of 1-norm at most one.
fn random_target(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    let raw = DVector::from_fn(n, |_, _| rng.random::<f64>());
    let scale = rng.random::<f64>() / raw.sum();
    raw * scale
}

fn point_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ 0x5851_f42d_4c95_7f2d)
}

fn outcome(pass: bool, values: Vec<(&'static str, f64)>) -> CaseOutcome {
    CaseOutcome { pass, values }
}

fn run_case(check: Check, inst: &ProblemInstance, seed: u64, opts: &VerifyOptions) -> Result<CaseOutcome> {
    let mut rng = point_rng(seed);
    let x = ball_point(&mut rng, inst.d(), opts.radius);
    Ok(match check {
        Check::Assumptions => {
            let rep = validate(inst, opts.l, ValidationMode::Sketch, Some(opts.radius))?;
            outcome(rep.passed(), vec![("w2_min", rep.w2_min), ("w_threshold", rep.w_threshold), ("a_norm", rep.a_norm)])
        }
        Check::GradientFd => {
            let s = SoftmaxState::new(inst, &x)?;
            let g = gradient_total(&s, inst);
            let fd = finite_diff::gradient(
                |y| SoftmaxState::new(inst, y).map_or(f64::NAN, |s| loss_total(&s, inst)),
                &x,
                finite_diff::gradient_step(&x),
            );
            let err = finite_diff::relative_error(&g, &fd);
            outcome(err <= GRADIENT_FD_TOL, vec![("rel_err", err)])
        }
        Check::HessianFd => {
            let s = SoftmaxState::new(inst, &x)?;
            let h = hessian_materialize(&hessian_decomposed(&s, inst), inst, HessianMode::Full);
            let fd = finite_diff::hessian(
                |y| SoftmaxState::new(inst, y).map_or(f64::NAN, |s| loss_total(&s, inst)),
                &x,
                finite_diff::hessian_step(&x),
            );
            let err = finite_diff::relative_error_mat(&h, &fd);
            outcome(err <= HESSIAN_FD_TOL, vec![("rel_err", err)])
        }
        Check::BBounds => {
            let s = SoftmaxState::new(inst, &x)?;
            let b = check_b_bounds(&hessian_decomposed(&s, inst));
            outcome(b.pass, vec![("lambda_min_B", b.lambda_min), ("lambda_max_B", b.lambda_max)])
        }
        Check::HessianPd => {
            let pd = check_hessian_pd(inst, &x, opts.l)?;
            outcome(pd.pass, vec![("lambda_min_H", pd.lambda_min)])
        }
        Check::W2Sandwich => {
            let s = SoftmaxState::new(inst, &x)?;
            match w2_sandwich_of(&hessian_decomposed(&s, inst)) {
                Ok(r) => outcome(r.pass, vec![("gen_eig", r.min), ("gen_eig", r.max)]),
                Err(_) => outcome(false, vec![]),
            }
        }
        Check::Lipschitz => {
            let pairs = probe_pairs(inst, opts.radius, opts.probes, seed);
            let beta = beta_and_m(inst.n(), opts.radius).beta_lower;
            let fp = f_lipschitz_probe(inst, &pairs, opts.radius, beta)?;
            let lp = probe_lipschitz(inst, &pairs, opts.radius)?;
            outcome(
                fp.holds() && lp.holds(),
                vec![
                    ("hessian_ratio", lp.ratio_max),
                    ("g_sum_ratio", lp.g_sum_ratio_max),
                    ("f_ratio", fp.f_ratio_max),
                    ("pairs_used", lp.tally.used as f64),
                    ("vacuous", f64::from(u8::from(fp.vacuous() || lp.hessian_bound.vacuous()))),
                ],
            )
        }
        Check::Beta => {
            let c = min_alpha_probe(inst, opts.radius, opts.probes, seed)?;
            outcome(c.holds(), vec![("ln_alpha_min", -c.measured_ln), ("ln_beta", -c.bound_ln)])
        }
        Check::Sandwich => {
            let s = SoftmaxState::new(inst, &x)?;
            let d = hessian_decomposed(&s, inst).diag_weights();
            let cfg = SketchConfig {
                epsilon0: opts.epsilon0,
                delta: opts.delta,
                oversample: opts.oversample,
                seed,
                enabled: true,
            };
            let m = cfg.budget(inst.n(), inst.d());
            let dt = subsample(inst.a(), &d, &cfg)?;
            let c = certify_sandwich(inst.a(), &d, &dt, opts.epsilon0)?;
            let nnz_ok = dt.nnz() <= m.min(inst.n());
            outcome(
                c.pass && nnz_ok,
                vec![("gen_eig", c.min), ("gen_eig", c.max), ("nnz", dt.nnz() as f64), ("budget", m as f64)],
            )
        }
    })
}

/// Builds the instance of a random case for `check`.
fn random_case_instance(check: Check, spec: CaseSpec, opts: &VerifyOptions) -> Result<ProblemInstance> {
    match check {
        Check::HessianPd | Check::GradientFd | Check::HessianFd => case_instance(spec, opts, ValidationMode::Convexity),
        Check::BBounds => {
            let inst = case_instance(spec, opts, ValidationMode::Sketch)?;
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x2545_f491_4f6c_dd1d);
            inst.with_target(random_target(&mut rng, spec.n))
        }
        _ => case_instance(spec, opts, ValidationMode::Sketch),
    }
}

/// Runs `check` on every case using `opts.jobs` worker threads.
pub fn run(check: Check, cases: &Cases, opts: &VerifyOptions) -> Result<Report> {
    if opts.jobs == 0 {
        return Err(Error::InvalidParameter("jobs must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let (outcomes, trials): (Result<Vec<CaseOutcome>>, usize) = match (check, cases) {
        (Check::Sandwich, Cases::Random(specs)) => {
            // One instance per spec, `opts.trials` sampling seeds each.
            let jobs: Vec<(CaseSpec, u64)> = specs
                .iter()
                .flat_map(|&s| (0..opts.trials as u64).map(move |t| (s, t)))
                .collect();
            let out = pool.install(|| {
                jobs.par_iter()
                    .map(|&(spec, t)| run_case(check, &random_case_instance(check, spec, opts)?, t, opts))
                    .collect()
            });
            (out, jobs.len())
        }
        (Check::Sandwich, Cases::Instance { instance, .. }) => {
            let out = pool.install(|| {
                (0..opts.trials as u64)
                    .into_par_iter()
                    .map(|t| run_case(check, instance, t, opts))
                    .collect()
            });
            (out, opts.trials)
        }
        (_, Cases::Random(specs)) => (
            pool.install(|| {
                specs
                    .par_iter()
                    .map(|&spec| run_case(check, &random_case_instance(check, spec, opts)?, spec.seed, opts))
                    .collect()
            }),
            cases.len(),
        ),
        (_, Cases::Instance { instance, points }) => (
            pool.install(|| points.par_iter().map(|&seed| run_case(check, instance, seed, opts)).collect()),
            cases.len(),
        ),
    };
    let allowed = if check == Check::Sandwich {
        (trials as f64 * opts.delta).ceil() as usize + 3
    } else {
        0
    };
    Ok(Report::from_outcomes(check, outcomes?, allowed))
}
