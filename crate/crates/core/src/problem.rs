//! Problem instances `(A, b, w)`, assumption checks, and synthetic
//! generators with known optima.

use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::io;
use crate::linalg::singular_value_range;
use crate::softmax::{gradient_total, loss_total, SoftmaxState};
use crate::spectral::{beta_and_m, LogBound};

/// Radius used when the caller does not request one.
pub const DEFAULT_RADIUS: f64 = 10.0;
/// Relative threshold below which `sigma_min(A)` counts as zero.
pub const RANK_TOL: f64 = 1e-12;
/// Slack on `||b||_1 <= 1`, which only holds up to rounding when `b = f(x)`.
pub const B_L1_SLACK: f64 = 1e-12;

/// One regularized softmax regression task.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    a: DMatrix<f64>,
    b: DVector<f64>,
    w: DVector<f64>,
}

impl ProblemInstance {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, w: DVector<f64>) -> Result<Self> {
        let (n, d) = a.shape();
        if n == 0 || d == 0 {
            return Err(Error::Dimension(format!("A is {n}x{d}; need n, d >= 1")));
        }
        if n < d {
            return Err(Error::Dimension(format!("A is {n}x{d}; need n >= d")));
        }
        if b.len() != n {
            return Err(Error::Dimension(format!("b has length {}, expected {n}", b.len())));
        }
        if w.len() != n {
            return Err(Error::Dimension(format!("w has length {}, expected {n}", w.len())));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("A"));
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("b"));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("w"));
        }
        Ok(Self { a, b, w })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn w(&self) -> &DVector<f64> {
        &self.w
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn d(&self) -> usize {
        self.a.ncols()
    }

    /// Diagonal of `W^2`.
    pub fn w_squared(&self) -> DVector<f64> {
        self.w.component_mul(&self.w)
    }

    /// Same `A` and `w`, different target.
    pub fn with_target(&self, b: DVector<f64>) -> Result<Self> {
        Self::new(self.a.clone(), b, self.w.clone())
    }
}

/// Which weight condition to check: `w_i^2 >= 4 + l/sigma_min^2` suffices for
/// strong convexity, `w_i^2 >= 100 + l/sigma_min^2` for the `W^2` sandwich the
/// sketched solver relies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValidationMode {
    Convexity,
    Sketch,
}

impl ValidationMode {
    pub fn weight_floor(self) -> f64 {
        match self {
            ValidationMode::Convexity => 4.0,
            ValidationMode::Sketch => 100.0,
        }
    }
}

impl std::str::FromStr for ValidationMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "convexity" => Ok(Self::Convexity),
            "sketch" => Ok(Self::Sketch),
            _ => Err(Error::InvalidParameter(format!("unknown validation mode {s:?}"))),
        }
    }
}

impl fmt::Display for ValidationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ValidationMode::Convexity => "convexity",
            ValidationMode::Sketch => "sketch",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub mode: ValidationMode,
    pub l: f64,
    /// `max(||A||, requested radius)`.
    pub radius: f64,
    pub a_norm: f64,
    pub sigma_min: f64,
    pub beta_lower: LogBound,
    pub m_upper: LogBound,
    pub w_threshold: f64,
    pub w2_min: f64,
    pub b_l1: f64,
    pub b_l2: f64,
    pub b_nonneg: bool,
    pub b_l1_ok: bool,
    pub w_ok: bool,
    pub a_norm_ok: bool,
    /// `||b||_2 <= R`, the target condition of the Hessian-Lipschitz regime.
    pub b_l2_ok: bool,
    /// `R >= 10`, the floor of the convergence theorem.
    pub radius_floor_ok: bool,
}

impl AssumptionReport {
    /// True when every hypothesis of the selected mode holds.
    pub fn passed(&self) -> bool {
        self.failures().is_empty()
    }

    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.b_nonneg {
            out.push("b_nonneg");
        }
        if !self.b_l1_ok {
            out.push("b_l1_le_1");
        }
        if !self.w_ok {
            out.push("w_threshold");
        }
        if !self.a_norm_ok {
            out.push("a_norm_le_R");
        }
        out
    }

    pub fn key_values(&self) -> Vec<(String, String)> {
        let kv = |k: &str, v: String| (k.to_string(), v);
        vec![
            kv("mode", self.mode.to_string()),
            kv("l", self.l.to_string()),
            kv("R", self.radius.to_string()),
            kv("a_norm", self.a_norm.to_string()),
            kv("sigma_min", self.sigma_min.to_string()),
            kv("beta_lower", self.beta_lower.to_string()),
            kv("M_upper", self.m_upper.to_string()),
            kv("w_threshold", self.w_threshold.to_string()),
            kv("w2_min", self.w2_min.to_string()),
            kv("b_l1", self.b_l1.to_string()),
            kv("b_l2", self.b_l2.to_string()),
            kv("b_nonneg", pass_str(self.b_nonneg)),
            kv("b_l1_le_1", pass_str(self.b_l1_ok)),
            kv("w_threshold_ok", pass_str(self.w_ok)),
            kv("a_norm_le_R", pass_str(self.a_norm_ok)),
            kv("b_l2_le_R", pass_str(self.b_l2_ok)),
            kv("R_ge_10", pass_str(self.radius_floor_ok)),
        ]
    }
}

fn pass_str(ok: bool) -> String {
    if ok { "pass" } else { "fail" }.to_string()
}

/// Checks the hypotheses of the convergence argument. `radius` is the bound
/// the caller wants to use for `||A||` and `||x||`; it defaults to 10.
pub fn validate(
    inst: &ProblemInstance,
    l: f64,
    mode: ValidationMode,
    radius: Option<f64>,
) -> Result<AssumptionReport> {
    if !(l.is_finite() && l > 0.0) {
        return Err(Error::InvalidParameter(format!("l must be positive, got {l}")));
    }
    let requested = radius.unwrap_or(DEFAULT_RADIUS);
    if !(requested.is_finite() && requested >= 0.0) {
        return Err(Error::InvalidParameter(format!("radius must be nonnegative, got {requested}")));
    }
    let (sigma_min, sigma_max) = singular_value_range(inst.a());
    if !(sigma_max > 0.0) || sigma_min < RANK_TOL * sigma_max {
        return Err(Error::RankDeficient { sigma_min, sigma_max });
    }
    let radius = sigma_max.max(requested);
    let w_threshold = mode.weight_floor() + l / (sigma_min * sigma_min);
    let w2_min = inst.w().iter().map(|w| w * w).fold(f64::INFINITY, f64::min);
    let b_l1 = inst.b().iter().map(|v| v.abs()).sum::<f64>();
    let b_l2 = inst.b().norm();
    let bounds = beta_and_m(inst.n(), radius);
    Ok(AssumptionReport {
        mode,
        l,
        radius,
        a_norm: sigma_max,
        sigma_min,
        beta_lower: bounds.beta_lower,
        m_upper: bounds.m_upper,
        w_threshold,
        w2_min,
        b_l1,
        b_l2,
        b_nonneg: inst.b().iter().all(|&v| v >= 0.0),
        b_l1_ok: b_l1 <= 1.0 + B_L1_SLACK,
        w_ok: w2_min >= w_threshold,
        a_norm_ok: sigma_max <= requested * (1.0 + 1e-12),
        b_l2_ok: b_l2 <= radius,
        radius_floor_ok: radius >= DEFAULT_RADIUS,
    })
}

/// A generated instance together with its known (or oracle-computed) optimum.
#[derive(Debug, Clone)]
pub struct Generated {
    pub instance: ProblemInstance,
    pub x_star: DVector<f64>,
    pub radius: f64,
    pub l: f64,
    pub seed: u64,
    /// `||g_total(x*)||_2` as achieved by the descent oracle; `None` when the
    /// optimum is exact by construction.
    pub oracle_grad_norm: Option<f64>,
}

fn check_generator_args(n: usize, d: usize, radius: f64, l: f64) -> Result<()> {
    if d == 0 || n < d {
        return Err(Error::InvalidParameter(format!("need n >= d >= 1, got n={n}, d={d}")));
    }
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::InvalidParameter(format!("R must be positive, got {radius}")));
    }
    if !(l.is_finite() && l > 0.0) {
        return Err(Error::InvalidParameter(format!("l must be positive, got {l}")));
    }
    Ok(())
}

/// Draws Gaussian `A` scaled so `||A|| = radius` and weights with
/// `w_i^2 = floor + l/sigma_min^2 + margin_i`, `margin_i in [0.5, 1.5)`.
pub(crate) fn draw_design(
    rng: &mut ChaCha8Rng,
    n: usize,
    d: usize,
    radius: f64,
    l: f64,
    mode: ValidationMode,
) -> (DMatrix<f64>, DVector<f64>) {
    loop {
        let raw = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let (lo, hi) = singular_value_range(&raw);
        if lo < 1e-6 * hi {
            continue;
        }
        let a = raw * (radius / hi);
        let sigma_min = lo * radius / hi;
        let base = mode.weight_floor() + l / (sigma_min * sigma_min);
        let w = DVector::from_fn(n, |_, _| (base + rng.random_range(0.5..1.5)).sqrt());
        return (a, w);
    }
}

/// Seeded point at distance `radius` from the origin, in a uniform direction.
pub fn random_offset(d: usize, radius: f64, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_direction(&mut rng, d) * radius
}

pub(crate) fn random_direction(rng: &mut ChaCha8Rng, d: usize) -> DVector<f64> {
    loop {
        let u = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = u.norm();
        if norm > 1e-12 {
            return u / norm;
        }
    }
}

/// Instance whose optimum is `x* = 0`: `b = f(0)` is uniform, so both the
/// softmax and the regularizer gradients vanish there.
pub fn generate_trivial(n: usize, d: usize, radius: f64, l: f64, seed: u64) -> Result<Generated> {
    check_generator_args(n, d, radius, l)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, w) = draw_design(&mut rng, n, d, radius, l, ValidationMode::Sketch);
    let b = DVector::from_element(n, 1.0 / n as f64);
    Ok(Generated {
        instance: ProblemInstance::new(a, b, w)?,
        x_star: DVector::zeros(d),
        radius,
        l,
        seed,
        oracle_grad_norm: None,
    })
}

/// Instance with `b = f(x_ref)` for a random `x_ref` of norm `target_radius`.
/// The optimum is found by [`descent_oracle`].
pub fn generate_oracle(
    n: usize,
    d: usize,
    radius: f64,
    l: f64,
    target_radius: f64,
    seed: u64,
) -> Result<Generated> {
    let (instance, _) = generate_with_reference(n, d, radius, l, target_radius, ValidationMode::Sketch, seed)?;
    let oracle = descent_oracle(&instance, &DVector::zeros(d), ORACLE_TOL, ORACLE_MAX_ITERS)?;
    Ok(Generated {
        instance,
        x_star: oracle.x,
        radius,
        l,
        seed,
        oracle_grad_norm: Some(oracle.grad_norm),
    })
}

/// Draws `A`, `w` for the given weight regime and sets `b = f(x_ref)`.
/// Returns the instance and `x_ref`.
pub fn generate_with_reference(
    n: usize,
    d: usize,
    radius: f64,
    l: f64,
    target_radius: f64,
    mode: ValidationMode,
    seed: u64,
) -> Result<(ProblemInstance, DVector<f64>)> {
    check_generator_args(n, d, radius, l)?;
    if !(target_radius.is_finite() && target_radius >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "target radius must be nonnegative, got {target_radius}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, w) = draw_design(&mut rng, n, d, radius, l, mode);
    let x_ref = if target_radius > 0.0 {
        random_direction(&mut rng, d) * target_radius
    } else {
        DVector::zeros(d)
    };
    let placeholder = ProblemInstance::new(a, DVector::zeros(n), w)?;
    let b = SoftmaxState::new(&placeholder, &x_ref)?.f().clone();
    Ok((placeholder.with_target(b)?, x_ref))
}

pub const ORACLE_TOL: f64 = 1e-11;
pub const ORACLE_MAX_ITERS: usize = 1_000_000;

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub x: DVector<f64>,
    pub grad_norm: f64,
    pub iterations: usize,
}

/// Gradient descent with backtracking on the full regularized loss, run
/// until `||g_total|| <= tol`.
///
/// Trial steps grow by 2x and are accepted under the Armijo condition; the
/// step never drops below `1/L_upper`, where `L_upper` bounds the gradient's
/// Lipschitz constant via `|B(x)| <= 8 (1 + ||b||_inf)`, so every iteration
/// makes progress even once loss differences fall below rounding.
pub fn descent_oracle(
    inst: &ProblemInstance,
    x0: &DVector<f64>,
    tol: f64,
    max_iters: usize,
) -> Result<OracleResult> {
    let a_norm = crate::linalg::spectral_norm(inst.a());
    let b_inf = inst.b().amax();
    let w2_max = inst.w_squared().max();
    let lipschitz = a_norm * a_norm * (w2_max + 8.0 * (1.0 + b_inf));
    let safe_step = 1.0 / lipschitz;

    let mut x = x0.clone();
    let mut state = SoftmaxState::new(inst, &x)?;
    let mut loss = loss_total(&state, inst);
    let mut g = gradient_total(&state, inst);
    let mut step = safe_step;
    for iter in 0..max_iters {
        let gnorm = g.norm();
        if gnorm <= tol {
            return Ok(OracleResult { x, grad_norm: gnorm, iterations: iter });
        }
        let g2 = gnorm * gnorm;
        let mut trial = (2.0 * step).max(safe_step);
        loop {
            let cand = &x - &g * trial;
            let cand_state = SoftmaxState::new(inst, &cand)?;
            let cand_loss = loss_total(&cand_state, inst);
            let armijo = cand_loss <= loss - 0.5 * trial * g2;
            if armijo || trial <= safe_step {
                x = cand;
                state = cand_state;
                loss = cand_loss;
                step = trial;
                break;
            }
            trial = (0.5 * trial).max(safe_step);
        }
        g = gradient_total(&state, inst);
    }
    let grad_norm = g.norm();
    if grad_norm <= tol {
        return Ok(OracleResult { x, grad_norm, iterations: max_iters });
    }
    Err(Error::OracleFailure { grad_norm, iterations: max_iters })
}

/// An instance directory: `A.mat`, `b.vec`, `w.vec`, `meta` and optionally
/// `xstar.vec`.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub instance: ProblemInstance,
    pub l: f64,
    pub radius: f64,
    pub seed: Option<u64>,
    /// Extra `meta` lines beyond `l`, `R` and `seed`, kept in order.
    pub extra_meta: Vec<(String, String)>,
    pub x_star: Option<DVector<f64>>,
}

impl Bundle {
    pub fn from_generated(g: &Generated, kind: &str) -> Self {
        let mut extra_meta = vec![("kind".to_string(), kind.to_string())];
        if let Some(gn) = g.oracle_grad_norm {
            extra_meta.push(("oracle_grad_norm".to_string(), gn.to_string()));
        }
        Self {
            instance: g.instance.clone(),
            l: g.l,
            radius: g.radius,
            seed: Some(g.seed),
            extra_meta,
            x_star: Some(g.x_star.clone()),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        io::write_text(&dir.join("A.mat"), &io::write_matrix(self.instance.a()))?;
        io::write_text(&dir.join("b.vec"), &io::write_vector(self.instance.b()))?;
        io::write_text(&dir.join("w.vec"), &io::write_vector(self.instance.w()))?;
        let mut meta = vec![
            ("l".to_string(), self.l.to_string()),
            ("R".to_string(), self.radius.to_string()),
        ];
        if let Some(seed) = self.seed {
            meta.push(("seed".to_string(), seed.to_string()));
        }
        meta.extend(self.extra_meta.iter().cloned());
        io::write_text(&dir.join("meta"), &io::write_key_values(&meta))?;
        if let Some(xs) = &self.x_star {
            io::write_text(&dir.join("xstar.vec"), &io::write_vector(xs))?;
        }
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let a = io::read_matrix(&dir.join("A.mat"))?;
        let b = io::read_vector(&dir.join("b.vec"))?;
        let w = io::read_vector(&dir.join("w.vec"))?;
        let meta_path = dir.join("meta");
        let meta = io::parse_key_values(&io::read_text(&meta_path)?).map_err(|e| e.in_file(&meta_path))?;
        let mut l = None;
        let mut radius = None;
        let mut seed = None;
        let mut extra_meta = Vec::new();
        for (k, v) in meta {
            let bad = || Error::parse(0, format!("invalid value for {k}: {v:?}")).in_file(&meta_path);
            match k.as_str() {
                "l" => l = Some(v.parse::<f64>().map_err(|_| bad())?),
                "R" => radius = Some(v.parse::<f64>().map_err(|_| bad())?),
                "seed" => seed = Some(v.parse::<u64>().map_err(|_| bad())?),
                _ => extra_meta.push((k, v)),
            }
        }
        let missing = |key: &str| Error::parse(0, format!("missing key {key}")).in_file(&meta_path);
        let xs_path = dir.join("xstar.vec");
        let x_star = if xs_path.exists() {
            Some(io::read_vector(&xs_path)?)
        } else {
            None
        };
        let instance = ProblemInstance::new(a, b, w)?;
        if let Some(xs) = &x_star {
            if xs.len() != instance.d() {
                return Err(Error::Dimension(format!(
                    "xstar.vec has length {}, expected {}",
                    xs.len(),
                    instance.d()
                )));
            }
        }
        Ok(Self {
            instance,
            l: l.ok_or_else(|| missing("l"))?,
            radius: radius.ok_or_else(|| missing("R"))?,
            seed,
            extra_meta,
            x_star,
        })
    }
}
