//! Leverage-score sparsification of a positive diagonal: given `A` and
//! `D > 0`, sample a sparse `D~` with
//! `(1 - eps0) A^T D A <= A^T D~ A <= (1 + eps0) A^T D A` with high probability.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{generalized_eigenvalues, weighted_gram, weighted_gram_rows};

/// A diagonal matrix stored by its nonzero entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDiagonal {
    n: usize,
    entries: Vec<(usize, f64)>,
}

impl SparseDiagonal {
    /// Indices must be strictly increasing and below `n`; weights finite and
    /// positive.
    pub fn new(n: usize, entries: Vec<(usize, f64)>) -> Result<Self> {
        let mut prev: Option<usize> = None;
        for &(i, w) in &entries {
            if i >= n {
                return Err(Error::InvalidParameter(format!("index {i} out of range for n = {n}")));
            }
            if prev.is_some_and(|p| p >= i) {
                return Err(Error::InvalidParameter(format!("index {i} is not strictly increasing")));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidParameter(format!("weight {w} at index {i} is not positive")));
            }
            prev = Some(i);
        }
        Ok(Self { n, entries })
    }

    /// Keeps the strictly positive entries of a dense diagonal.
    pub fn from_dense(d: &DVector<f64>) -> Result<Self> {
        let entries = d.iter().enumerate().filter(|(_, &w)| w > 0.0).map(|(i, &w)| (i, w)).collect();
        Self::new(d.len(), entries)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn to_dense(&self) -> DVector<f64> {
        let mut d = DVector::zeros(self.n);
        for &(i, w) in &self.entries {
            d[i] = w;
        }
        d
    }

    /// `A^T D~ A` from the sampled rows only.
    pub fn gram(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        weighted_gram_rows(a, &self.entries)
    }

    /// Text form: `n nnz`, then one `index weight` line per entry.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.n, self.nnz());
        for (i, w) in &self.entries {
            writeln!(out, "{i} {w}").unwrap();
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let (hl, header) = lines.next().ok_or_else(|| Error::parse(1, "empty sparse diagonal"))?;
        let toks: Vec<&str> = header.split_whitespace().collect();
        let [n, nnz] = toks[..] else {
            return Err(Error::parse(hl, "header must be \"n nnz\""));
        };
        let n: usize = n.parse().map_err(|_| Error::parse(hl, format!("invalid n {n:?}")))?;
        let nnz: usize = nnz.parse().map_err(|_| Error::parse(hl, format!("invalid nnz {nnz:?}")))?;
        if nnz > n {
            return Err(Error::parse(hl, format!("nnz {nnz} exceeds n {n}")));
        }
        let mut entries = Vec::with_capacity(nnz.min(1 << 16));
        for (ln, line) in lines {
            if entries.len() == nnz {
                return Err(Error::parse(ln, format!("more than {nnz} entries")));
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            let [i, w] = toks[..] else {
                return Err(Error::parse(ln, "expected \"index weight\""));
            };
            let i: usize = i.parse().map_err(|_| Error::parse(ln, format!("invalid index {i:?}")))?;
            let w: f64 = w.parse().map_err(|_| Error::parse(ln, format!("invalid weight {w:?}")))?;
            entries.push((i, w));
        }
        if entries.len() != nnz {
            return Err(Error::parse(0, format!("expected {nnz} entries, found {}", entries.len())));
        }
        Self::new(n, entries).map_err(|e| Error::parse(0, e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SketchConfig {
    pub epsilon0: f64,
    pub delta: f64,
    /// Constant `c` in the budget `c d ln(n / delta) / eps0^2`.
    pub oversample: f64,
    pub seed: u64,
    /// When false the solver uses `D` itself.
    pub enabled: bool,
}

impl Default for SketchConfig {
    fn default() -> Self {
        Self {
            epsilon0: 0.1,
            delta: 0.05,
            oversample: 8.0,
            seed: 0,
            enabled: true,
        }
    }
}

impl SketchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon0 > 0.0 && self.epsilon0 < 0.5) {
            return Err(Error::InvalidParameter(format!("eps0 must be in (0, 0.5), got {}", self.epsilon0)));
        }
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return Err(Error::InvalidParameter(format!("sketch delta must be in (0, 0.5), got {}", self.delta)));
        }
        if !(self.oversample.is_finite() && self.oversample > 0.0) {
            return Err(Error::InvalidParameter(format!("oversample must be positive, got {}", self.oversample)));
        }
        Ok(())
    }

    /// Number of draws `m = max(d, ceil(c d ln(n / delta) / eps0^2))`.
    pub fn budget(&self, n: usize, d: usize) -> usize {
        let m = self.oversample * d as f64 * (n as f64 / self.delta).ln() / (self.epsilon0 * self.epsilon0);
        (m.ceil() as usize).max(d)
    }
}

fn check_diagonal(a: &DMatrix<f64>, d: &DVector<f64>) -> Result<()> {
    if d.len() != a.nrows() {
        return Err(Error::Dimension(format!("D has length {}, expected {}", d.len(), a.nrows())));
    }
    match d.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
        Some(index) => Err(Error::NonPositiveDiagonal { index, value: d[index] }),
        None => Ok(()),
    }
}

/// Squared row norms of the thin orthonormal factor of `D^(1/2) A`; they sum
/// to `d`.
pub fn leverage_scores(a: &DMatrix<f64>, d: &DVector<f64>) -> Result<DVector<f64>> {
    check_diagonal(a, d)?;
    let mut scaled = a.clone();
    for (mut row, &w) in scaled.row_iter_mut().zip(d.iter()) {
        row *= w.sqrt();
    }
    let qr = scaled.qr();
    let r_diag = qr.r().diagonal().abs();
    let (lo, hi) = (r_diag.min(), r_diag.max());
    if !(hi > 0.0) || lo < crate::problem::RANK_TOL * hi {
        return Err(Error::RankDeficient { sigma_min: lo, sigma_max: hi });
    }
    let q = qr.q();
    Ok(DVector::from_iterator(q.nrows(), q.row_iter().map(|r| r.norm_squared())))
}

/// Draws `cfg.budget(n, d)` rows with replacement, row `i` with probability
/// `tau_i / d`, and accumulates weight `D_ii / (m p_i)` per draw.
pub fn subsample(a: &DMatrix<f64>, d: &DVector<f64>, cfg: &SketchConfig) -> Result<SparseDiagonal> {
    cfg.validate()?;
    let tau = leverage_scores(a, d)?;
    let total = tau.sum();
    let m = cfg.budget(a.nrows(), a.ncols());
    let sampler = WeightedIndex::new(tau.iter().copied())
        .map_err(|e| Error::InvalidParameter(format!("leverage scores: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut weights = vec![0.0; a.nrows()];
    for _ in 0..m {
        let i = sampler.sample(&mut rng);
        let p = tau[i] / total;
        weights[i] += d[i] / (m as f64 * p);
    }
    let entries = weights.into_iter().enumerate().filter(|&(_, w)| w > 0.0).collect();
    SparseDiagonal::new(a.nrows(), entries)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SandwichCheck {
    pub min: f64,
    pub max: f64,
    pub pass: bool,
}

/// Generalized eigenvalues of `(A^T D~ A, A^T D A)`; passes when all lie in
/// `[1 - eps0, 1 + eps0]`.
pub fn certify_sandwich(
    a: &DMatrix<f64>,
    d: &DVector<f64>,
    d_tilde: &SparseDiagonal,
    epsilon0: f64,
) -> Result<SandwichCheck> {
    if d_tilde.n() != a.nrows() {
        return Err(Error::Dimension(format!("D~ has n = {}, expected {}", d_tilde.n(), a.nrows())));
    }
    let exact = weighted_gram(a, d);
    let ev = generalized_eigenvalues(&d_tilde.gram(a), &exact)?;
    let (min, max) = (ev[0], ev[ev.len() - 1]);
    Ok(SandwichCheck {
        min,
        max,
        pass: min >= 1.0 - epsilon0 && max <= 1.0 + epsilon0,
    })
}
