//! Continual release of noisy Gram-matrix prefix sums by tree aggregation.
//!
//! Round `t` folds every stored partial sum below the lowest set bit of `t`
//! into that level together with the round's Gram contribution, then stores
//! a noisy copy of the new node. The release at `t` sums the noisy nodes at
//! the set bits of `t`, so it carries `popcount(t)` noise matrices and each
//! round's data reaches at most `m = 1 + ⌊log₂ T⌋` stored nodes.

use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::accountant::{BudgetError, EpsDeltaBudget, ZcdpBudget};

/// Extra margin added on top of `|λ_min|` by the emergency re-shift.
pub const RESHIFT_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TreeError {
    #[error("tree exhausted after {horizon} rounds")]
    Exhausted { horizon: usize },
    #[error("nothing to release before the first update")]
    NotStarted,
    #[error("Gram matrix must be {expected}x{expected}, got {rows}x{cols}")]
    DimensionMismatch { expected: usize, rows: usize, cols: usize },
    #[error("horizon must be at least 1")]
    InvalidHorizon,
    #[error("assortment size must be at least 1")]
    InvalidAssortmentSize,
    #[error("shift formula is undefined for d = {0}; supply lambda explicitly")]
    UnsupportedDimension(usize),
    #[error("noise scale must be nonnegative and finite, got {0}")]
    InvalidSigma(f64),
    #[error(transparent)]
    Budget(#[from] BudgetError),
}

/// Number of tree levels `1 + ⌊log₂ T⌋`.
pub fn tree_levels(horizon: usize) -> usize {
    debug_assert!(horizon >= 1);
    (usize::BITS - horizon.leading_zeros()) as usize
}

/// Frobenius sensitivity `√(2K)` of one user's Gram contribution.
pub fn sensitivity_bound(k: usize) -> f64 {
    libm::sqrt(2.0 * k as f64)
}

/// Privacy budget for the whole tree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CovBudget {
    Zcdp(ZcdpBudget),
    EpsDelta(EpsDeltaBudget),
}

/// How each node's noise matrix is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseShape {
    /// Upper triangle (diagonal included) i.i.d., mirrored.
    Mirrored,
    /// Full i.i.d. matrix `N'`, released as `(N' + N'ᵀ)/√2`.
    Symmetrized,
    Off,
}

impl CovBudget {
    pub fn noise_shape(&self) -> NoiseShape {
        match self {
            Self::Zcdp(_) => NoiseShape::Mirrored,
            Self::EpsDelta(_) => NoiseShape::Symmetrized,
        }
    }
}

/// Per-entry noise variance for the whole-tree budget:
/// `K m / ρ₂` under zCDP and `32 m K ln(4/δ₂)² / ε₂²` under `(ε, δ)`.
pub fn cov_noise_variance(k: usize, horizon: usize, budget: CovBudget) -> Result<f64, TreeError> {
    if horizon == 0 {
        return Err(TreeError::InvalidHorizon);
    }
    if k == 0 {
        return Err(TreeError::InvalidAssortmentSize);
    }
    let m = tree_levels(horizon) as f64;
    let k = k as f64;
    Ok(match budget {
        CovBudget::Zcdp(rho) => k * m / rho.rho(),
        CovBudget::EpsDelta(b) => {
            let l = libm::log(4.0 / b.delta());
            32.0 * m * k * l * l / (b.epsilon() * b.epsilon())
        }
    })
}

/// Standard deviation matching [`cov_noise_variance`].
pub fn calibrate_cov_noise(k: usize, horizon: usize, budget: CovBudget) -> Result<f64, TreeError> {
    cov_noise_variance(k, horizon, budget).map(libm::sqrt)
}

/// Shift `λ` that dominates the accumulated noise's operator norm with
/// probability at least `1 - 1/T²`:
/// `σ√m (2√d + 2d^{1/6}(ln d)^{1/3} + 6(1+c)√(ln d)/√(ln(1+c)) + 2√(4 ln T))`
/// with `c = (ln d / d)^{1/3}`.
pub fn compute_lambda(sigma: f64, d: usize, horizon: usize) -> Result<f64, TreeError> {
    if d < 2 {
        return Err(TreeError::UnsupportedDimension(d));
    }
    if horizon == 0 {
        return Err(TreeError::InvalidHorizon);
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(TreeError::InvalidSigma(sigma));
    }
    let df = d as f64;
    let ln_d = libm::log(df);
    let c = libm::cbrt(ln_d / df);
    let bracket = 2.0 * libm::sqrt(df)
        + 2.0 * libm::pow(df, 1.0 / 6.0) * libm::cbrt(ln_d)
        + 6.0 * (1.0 + c) * libm::sqrt(ln_d) / libm::sqrt(libm::log1p(c))
        + 2.0 * libm::sqrt(4.0 * libm::log(horizon as f64));
    Ok(sigma * libm::sqrt(tree_levels(horizon) as f64) * bracket)
}

/// Bookkeeping of which rounds each stored node aggregates.
#[derive(Debug, Clone, Default)]
struct TouchAudit {
    members: Vec<Vec<usize>>,
    touches: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct AggregationTree {
    dim: usize,
    horizon: usize,
    p_sums: Vec<DMatrix<f64>>,
    noisy: Vec<DMatrix<f64>>,
    sigma: f64,
    shape: NoiseShape,
    t: usize,
    reshifts: usize,
    audit: Option<TouchAudit>,
}

/// One released Gram estimate `V = V_raw + 2λI`, factored.
#[derive(Debug, Clone)]
pub struct GramRelease {
    pub v_raw: DMatrix<f64>,
    pub lambda_shift: f64,
    pub v: DMatrix<f64>,
    /// Noisy nodes summed into `v_raw`.
    pub noise_terms: usize,
    /// Whether the emergency re-shift fired.
    pub reshifted: bool,
    chol: Cholesky<f64, Dyn>,
}

impl GramRelease {
    pub fn log_det(&self) -> f64 {
        2.0 * self.chol.l_dirty().diagonal().iter().map(|v| libm::log(*v)).sum::<f64>()
    }

    /// `‖x‖_{V⁻¹} = √(xᵀ V⁻¹ x)`.
    pub fn inverse_norm(&self, x: &[f64]) -> f64 {
        let l = self.chol.l_dirty();
        let n = x.len();
        // Forward substitution L y = x; then ‖y‖² = xᵀ V⁻¹ x.
        let mut y = alloc::vec![0.0; n];
        let mut total = 0.0;
        for i in 0..n {
            let mut acc = x[i];
            for j in 0..i {
                acc -= l[(i, j)] * y[j];
            }
            y[i] = acc / l[(i, i)];
            total += y[i] * y[i];
        }
        libm::sqrt(total)
    }

    pub fn cholesky(&self) -> &Cholesky<f64, Dyn> {
        &self.chol
    }

    /// Wraps a positive-definite matrix without any tree behind it.
    pub fn from_matrix(v: DMatrix<f64>) -> Option<Self> {
        let chol = Cholesky::new(v.clone())?;
        Some(Self {
            v_raw: v.clone(),
            lambda_shift: 0.0,
            v,
            noise_terms: 0,
            reshifted: false,
            chol,
        })
    }
}

impl AggregationTree {
    pub fn new(dim: usize, horizon: usize, sigma: f64, shape: NoiseShape) -> Result<Self, TreeError> {
        if horizon == 0 {
            return Err(TreeError::InvalidHorizon);
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(TreeError::InvalidSigma(sigma));
        }
        let m = tree_levels(horizon);
        Ok(Self {
            dim,
            horizon,
            p_sums: alloc::vec![DMatrix::zeros(dim, dim); m],
            noisy: alloc::vec![DMatrix::zeros(dim, dim); m],
            sigma,
            shape: if sigma == 0.0 { NoiseShape::Off } else { shape },
            t: 0,
            reshifts: 0,
            audit: None,
        })
    }

    /// Tree calibrated for `budget` over `horizon` rounds with `K` items per round.
    pub fn calibrated(dim: usize, horizon: usize, k: usize, budget: CovBudget) -> Result<Self, TreeError> {
        let sigma = calibrate_cov_noise(k, horizon, budget)?;
        Self::new(dim, horizon, sigma, budget.noise_shape())
    }

    /// Exact (noise-free) tree.
    pub fn noiseless(dim: usize, horizon: usize) -> Result<Self, TreeError> {
        Self::new(dim, horizon, 0.0, NoiseShape::Off)
    }

    /// Records which rounds each node aggregates, for auditing touch counts.
    pub fn with_audit(mut self) -> Self {
        self.audit = Some(TouchAudit {
            members: alloc::vec![Vec::new(); self.levels()],
            touches: Vec::new(),
        });
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn levels(&self) -> usize {
        self.p_sums.len()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn rounds(&self) -> usize {
        self.t
    }

    /// Number of releases that needed the emergency re-shift.
    pub fn reshift_count(&self) -> usize {
        self.reshifts
    }

    /// Levels whose noisy node is part of the current release.
    pub fn live_levels(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.levels()).filter(move |l| self.t >> l & 1 == 1)
    }

    /// Number of stored nodes each round's data has been written into so far.
    pub fn touch_counts(&self) -> Option<&[u32]> {
        self.audit.as_ref().map(|a| a.touches.as_slice())
    }

    /// Folds one round's Gram contribution into the tree.
    pub fn update<R: Rng + ?Sized>(&mut self, round_gram: &DMatrix<f64>, rng: &mut R) -> Result<(), TreeError> {
        if round_gram.nrows() != self.dim || round_gram.ncols() != self.dim {
            return Err(TreeError::DimensionMismatch {
                expected: self.dim,
                rows: round_gram.nrows(),
                cols: round_gram.ncols(),
            });
        }
        if self.t == self.horizon {
            return Err(TreeError::Exhausted { horizon: self.horizon });
        }
        self.t += 1;
        let level = self.t.trailing_zeros() as usize;
        let mut node = DMatrix::zeros(self.dim, self.dim);
        for l in 0..level {
            node += &self.p_sums[l];
            self.p_sums[l].fill(0.0);
            self.noisy[l].fill(0.0);
        }
        node += round_gram;
        let noise = self.draw_noise(rng);
        self.noisy[level] = &node + noise;
        self.p_sums[level] = node;

        if let Some(audit) = self.audit.as_mut() {
            let mut members = Vec::new();
            for l in 0..level {
                members.append(&mut audit.members[l]);
            }
            members.push(self.t);
            audit.touches.push(0);
            for &round in &members {
                audit.touches[round - 1] += 1;
            }
            audit.members[level] = members;
        }
        Ok(())
    }

    fn draw_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> DMatrix<f64> {
        let d = self.dim;
        let mut noise = DMatrix::zeros(d, d);
        match self.shape {
            NoiseShape::Off => {}
            NoiseShape::Mirrored => {
                for i in 0..d {
                    for j in i..d {
                        let v: f64 = StandardNormal.sample(rng);
                        noise[(i, j)] = self.sigma * v;
                        noise[(j, i)] = self.sigma * v;
                    }
                }
            }
            NoiseShape::Symmetrized => {
                let raw = DMatrix::from_fn(d, d, |_, _| {
                    let v: f64 = StandardNormal.sample(rng);
                    self.sigma * v
                });
                let scale = core::f64::consts::FRAC_1_SQRT_2;
                for i in 0..d {
                    for j in i..d {
                        let v = (raw[(i, j)] + raw[(j, i)]) * scale;
                        noise[(i, j)] = v;
                        noise[(j, i)] = v;
                    }
                }
            }
        }
        noise
    }

    /// Sum of the live noisy nodes, lowest level first.
    pub fn raw_sum(&self) -> Result<DMatrix<f64>, TreeError> {
        if self.t == 0 {
            return Err(TreeError::NotStarted);
        }
        let mut v = DMatrix::zeros(self.dim, self.dim);
        for l in self.live_levels() {
            v += &self.noisy[l];
        }
        Ok(v)
    }

    /// Releases `V = V_raw + 2λI`. If `V` is not positive definite it is
    /// shifted further by `|λ_min| + 10⁻⁶` and the re-shift counter advances.
    pub fn release(&mut self, lambda: f64) -> Result<GramRelease, TreeError> {
        let v_raw = self.raw_sum()?;
        let noise_terms = self.live_levels().count();
        let mut v = v_raw.clone();
        for i in 0..self.dim {
            v[(i, i)] += 2.0 * lambda;
        }
        let mut reshifted = false;
        let chol = loop {
            if let Some(chol) = Cholesky::new(v.clone()) {
                break chol;
            }
            reshifted = true;
            let min_eig = SymmetricEigen::new(v.clone()).eigenvalues.min();
            // Rounding can leave the shifted matrix borderline; grow the
            // margin until the factorization succeeds.
            let shift = min_eig.abs().max(RESHIFT_MARGIN) + RESHIFT_MARGIN * (1.0 + min_eig.abs());
            for i in 0..self.dim {
                v[(i, i)] += shift;
            }
        };
        if reshifted {
            self.reshifts += 1;
        }
        Ok(GramRelease {
            v_raw,
            lambda_shift: lambda,
            v,
            noise_terms,
            reshifted,
            chol,
        })
    }
}

/// `Σ_{i∈S} x_i x_iᵀ` for the given item vectors.
pub fn gram_of<'a>(dim: usize, items: impl IntoIterator<Item = &'a [f64]>) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(dim, dim);
    for x in items {
        let v = DVector::from_column_slice(x);
        g.syger(1.0, &v, &v, 1.0);
    }
    // syger fills the lower triangle only.
    for i in 0..dim {
        for j in (i + 1)..dim {
            g[(i, j)] = g[(j, i)];
        }
    }
    g
}
