//! Objective-perturbed maximum-likelihood estimation for the MNL model.
//!
//! The private estimate minimizes
//! `Σ_n ℓ_n(θ) + (Δ/2)‖θ‖² + bᵀθ` with `b ~ N(0, σ² I)`, where `ℓ_n` is the
//! negative log-likelihood of one observed choice. The per-record loss has
//! gradient norm at most `L = 2` and Hessian eigenvalues at most `η = 4`
//! when every feature vector has norm at most one. Noise calibration uses the
//! rank constant `R = min{d, K - 1}`.

use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use thiserror::Error;

use crate::mnl::{dot, Assortment, ChoiceOutcome, MnlError, ModelParameter, RoundContext};

/// Gradient-norm bound of the per-record loss.
pub const GRADIENT_BOUND: f64 = 2.0;
/// Hessian eigenvalue bound of the per-record loss.
pub const HESSIAN_BOUND: f64 = 4.0;
/// Default split parameter between the Jacobian and the noise terms.
pub const DEFAULT_Q: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MleError {
    #[error("q must lie in (0, 1), got {0}")]
    InvalidQ(f64),
    #[error("privacy parameter must be positive and finite, got {0}")]
    InvalidBudget(f64),
    #[error("delta must lie in (0, 1), got {0}")]
    InvalidDelta(f64),
    #[error("dimension and assortment size must be positive (d={d}, K={k})")]
    InvalidShape { d: usize, k: usize },
    #[error("ridge weight must be positive, got {0}")]
    NonPositiveRidge(f64),
    #[error("interaction log is empty")]
    EmptyLog,
    #[error("parameter has dimension {found}, log has dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("choice position {position} invalid for an assortment of {size} items")]
    InvalidChoice { position: usize, size: usize },
    #[error("solver stopped after {iterations} iterations with gradient norm {residual:e}")]
    NonConvergence {
        best: ModelParameter,
        residual: f64,
        iterations: usize,
    },
    #[error(transparent)]
    Model(#[from] MnlError),
}

/// Ridge weight, noise scale and the loss constants they were derived from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationParams {
    /// Ridge weight `Δ`.
    pub ridge: f64,
    /// Standard deviation of each coordinate of `b`.
    pub sigma: f64,
    pub q: f64,
    pub lipschitz: f64,
    pub hessian_bound: f64,
    pub rank: usize,
}

/// Rank bound `min{d, K - 1}` of a single record's Hessian (at least 1).
pub fn hessian_rank(d: usize, k: usize) -> usize {
    d.min(k.saturating_sub(1)).max(1)
}

fn check_q(q: f64) -> Result<(), MleError> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(MleError::InvalidQ(q))
    }
}

fn check_shape(d: usize, k: usize) -> Result<(), MleError> {
    if d == 0 || k == 0 {
        Err(MleError::InvalidShape { d, k })
    } else {
        Ok(())
    }
}

impl PerturbationParams {
    /// Calibration for a single `ρ`-zCDP call (`rho_per_call` is already the
    /// per-call share):
    /// `Δ = η / (exp((1-q)ρ/R) - 1)` and `σ = L(√(d + 2qρ) + √d) / (qρ)`.
    pub fn calibrate_zcdp(rho_per_call: f64, d: usize, k: usize, q: f64) -> Result<Self, MleError> {
        check_q(q)?;
        check_shape(d, k)?;
        if !(rho_per_call > 0.0 && rho_per_call.is_finite()) {
            return Err(MleError::InvalidBudget(rho_per_call));
        }
        let rank = hessian_rank(d, k);
        let df = d as f64;
        let ridge = HESSIAN_BOUND / libm::expm1((1.0 - q) * rho_per_call / rank as f64);
        let sigma = GRADIENT_BOUND * (libm::sqrt(df + 2.0 * q * rho_per_call) + libm::sqrt(df)) / (q * rho_per_call);
        Ok(Self {
            ridge,
            sigma,
            q,
            lipschitz: GRADIENT_BOUND,
            hessian_bound: HESSIAN_BOUND,
            rank,
        })
    }

    /// Calibration for a single `(ε, δ)`-DP call:
    /// `Δ = (1-q)Rη/ε` and
    /// `σ = L(√(d + 2√(d ln(2/δ)) + 2 ln(2/δ)) + √(… + 2qε)) / (qε)`.
    pub fn calibrate_eps_delta(epsilon: f64, delta: f64, d: usize, k: usize, q: f64) -> Result<Self, MleError> {
        check_q(q)?;
        check_shape(d, k)?;
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(MleError::InvalidBudget(epsilon));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(MleError::InvalidDelta(delta));
        }
        let rank = hessian_rank(d, k);
        let df = d as f64;
        let log_term = libm::log(2.0 / delta);
        let base = df + 2.0 * libm::sqrt(df * log_term) + 2.0 * log_term;
        let sigma = GRADIENT_BOUND * (libm::sqrt(base) + libm::sqrt(base + 2.0 * q * epsilon)) / (q * epsilon);
        Ok(Self {
            ridge: (1.0 - q) * rank as f64 * HESSIAN_BOUND / epsilon,
            sigma,
            q,
            lipschitz: GRADIENT_BOUND,
            hessian_bound: HESSIAN_BOUND,
            rank,
        })
    }

    /// No perturbation noise, only a ridge term (used for non-private fits).
    pub fn noiseless(ridge: f64) -> Self {
        Self {
            ridge,
            sigma: 0.0,
            q: DEFAULT_Q,
            lipschitz: GRADIENT_BOUND,
            hessian_bound: HESSIAN_BOUND,
            rank: 1,
        }
    }
}

/// Append-only record of `(offered item features, choice)` pairs.
///
/// Features of the offered items are stored back to back; record `r`
/// occupies items `offsets[r]..offsets[r + 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionLog {
    dim: usize,
    features: Vec<f64>,
    offsets: Vec<usize>,
    choices: Vec<usize>,
}

/// Borrowed view of one logged interaction.
#[derive(Debug, Clone, Copy)]
pub struct Record<'a> {
    dim: usize,
    features: &'a [f64],
    choice: usize,
}

impl<'a> Record<'a> {
    pub fn size(&self) -> usize {
        self.features.len() / self.dim
    }

    pub fn item(&self, k: usize) -> &'a [f64] {
        &self.features[k * self.dim..(k + 1) * self.dim]
    }

    /// 0 for no purchase, `k + 1` for the `k`-th offered item.
    pub fn choice(&self) -> usize {
        self.choice
    }
}

impl InteractionLog {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            features: Vec::new(),
            offsets: alloc::vec![0],
            choices: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.choices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.choices.is_empty()
    }

    pub fn push(&mut self, ctx: &RoundContext, assortment: &Assortment, outcome: ChoiceOutcome) -> Result<(), MleError> {
        if ctx.dim() != self.dim {
            return Err(MleError::DimensionMismatch {
                expected: self.dim,
                found: ctx.dim(),
            });
        }
        assortment.validate(ctx.num_items(), usize::MAX)?;
        if outcome.position() > assortment.len() {
            return Err(MleError::InvalidChoice {
                position: outcome.position(),
                size: assortment.len(),
            });
        }
        for &i in assortment.indices() {
            self.features.extend_from_slice(ctx.item(i));
        }
        self.offsets.push(self.features.len() / self.dim);
        self.choices.push(outcome.position());
        Ok(())
    }

    /// Appends a record from raw item vectors.
    pub fn push_items(&mut self, items: &[&[f64]], choice: usize) -> Result<(), MleError> {
        if choice > items.len() {
            return Err(MleError::InvalidChoice {
                position: choice,
                size: items.len(),
            });
        }
        for item in items {
            if item.len() != self.dim {
                return Err(MleError::DimensionMismatch {
                    expected: self.dim,
                    found: item.len(),
                });
            }
        }
        for item in items {
            self.features.extend_from_slice(item);
        }
        self.offsets.push(self.features.len() / self.dim);
        self.choices.push(choice);
        Ok(())
    }

    pub fn record(&self, r: usize) -> Record<'_> {
        let (a, b) = (self.offsets[r], self.offsets[r + 1]);
        Record {
            dim: self.dim,
            features: &self.features[a * self.dim..b * self.dim],
            choice: self.choices[r],
        }
    }

    pub fn records(&self) -> impl Iterator<Item = Record<'_>> + '_ {
        (0..self.len()).map(move |r| self.record(r))
    }
}

/// Negative log-likelihood with its first two derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct NllEval {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

struct Accumulator {
    dim: usize,
    value: f64,
    grad: Vec<f64>,
    hess: Vec<f64>,
    // scratch
    probs: Vec<f64>,
    mean: Vec<f64>,
}

impl Accumulator {
    fn new(dim: usize) -> Self {
        Self {
            dim,
            value: 0.0,
            grad: alloc::vec![0.0; dim],
            hess: alloc::vec![0.0; dim * dim],
            probs: Vec::new(),
            mean: alloc::vec![0.0; dim],
        }
    }

    fn add(&mut self, record: Record<'_>, theta: &[f64], with_hessian: bool) {
        let d = self.dim;
        let size = record.size();
        self.probs.clear();
        self.probs.extend((0..size).map(|k| dot(record.item(k), theta)));
        let shift = self.probs.iter().copied().fold(0.0_f64, f64::max);
        let chosen_utility = match record.choice() {
            0 => 0.0,
            c => self.probs[c - 1],
        };
        let mut denom = libm::exp(-shift);
        for u in self.probs.iter_mut() {
            *u = libm::exp(*u - shift);
            denom += *u;
        }
        self.value += -chosen_utility + shift + libm::log(denom);
        self.mean.iter_mut().for_each(|m| *m = 0.0);
        for k in 0..size {
            let p = self.probs[k] / denom;
            self.probs[k] = p;
            let x = record.item(k);
            for a in 0..d {
                self.mean[a] += p * x[a];
            }
            if with_hessian {
                for a in 0..d {
                    let pxa = p * x[a];
                    for b in a..d {
                        self.hess[a * d + b] += pxa * x[b];
                    }
                }
            }
        }
        if record.choice() > 0 {
            let x = record.item(record.choice() - 1);
            for a in 0..d {
                self.grad[a] -= x[a];
            }
        }
        for a in 0..d {
            self.grad[a] += self.mean[a];
        }
        if with_hessian {
            for a in 0..d {
                for b in a..d {
                    self.hess[a * d + b] -= self.mean[a] * self.mean[b];
                }
            }
        }
    }

    fn finish(self) -> NllEval {
        let d = self.dim;
        let mut hessian = DMatrix::zeros(d, d);
        for a in 0..d {
            for b in a..d {
                let v = self.hess[a * d + b];
                hessian[(a, b)] = v;
                hessian[(b, a)] = v;
            }
        }
        NllEval {
            value: self.value,
            gradient: DVector::from_vec(self.grad),
            hessian,
        }
    }
}

fn check_theta(log: &InteractionLog, theta: &ModelParameter) -> Result<(), MleError> {
    if theta.dim() != log.dim() {
        return Err(MleError::DimensionMismatch {
            expected: log.dim(),
            found: theta.dim(),
        });
    }
    Ok(())
}

/// Value, gradient and Hessian of `Σ_n ℓ_n(θ)` over the whole log.
pub fn nll_eval(log: &InteractionLog, theta: &ModelParameter) -> Result<NllEval, MleError> {
    if log.is_empty() {
        return Err(MleError::EmptyLog);
    }
    check_theta(log, theta)?;
    Ok(evaluate(log, theta.as_slice(), true))
}

/// Loss of a single record with its derivatives.
pub fn record_eval(record: Record<'_>, theta: &ModelParameter) -> NllEval {
    let mut acc = Accumulator::new(theta.dim());
    acc.add(record, theta.as_slice(), true);
    acc.finish()
}

fn evaluate(log: &InteractionLog, theta: &[f64], with_hessian: bool) -> NllEval {
    let mut acc = Accumulator::new(log.dim());
    for record in log.records() {
        acc.add(record, theta, with_hessian);
    }
    acc.finish()
}

fn nll_value(log: &InteractionLog, theta: &[f64]) -> f64 {
    let mut total = 0.0;
    let mut utilities = Vec::new();
    for record in log.records() {
        utilities.clear();
        utilities.extend((0..record.size()).map(|k| dot(record.item(k), theta)));
        let shift = utilities.iter().copied().fold(0.0_f64, f64::max);
        let denom = libm::exp(-shift) + utilities.iter().map(|u| libm::exp(u - shift)).sum::<f64>();
        let chosen = match record.choice() {
            0 => 0.0,
            c => utilities[c - 1],
        };
        total += -chosen + shift + libm::log(denom);
    }
    total
}

/// Solver settings for the perturbed objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop once the gradient norm of the full objective falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 200,
            armijo: 1e-4,
            max_backtracks: 60,
        }
    }
}

/// Output of one private-MLE call.
#[derive(Debug, Clone, PartialEq)]
pub struct MleResult {
    pub theta_hat: ModelParameter,
    pub grad_residual_norm: f64,
    pub iterations: usize,
    /// The linear perturbation actually used. Only for white-box checks;
    /// publishing it would void the privacy guarantee.
    pub noise: DVector<f64>,
}

/// Draws `b ~ N(0, σ² I)` and minimizes the perturbed objective.
pub fn solve_perturbed_mle<R: Rng + ?Sized>(
    log: &InteractionLog,
    params: &PerturbationParams,
    rng: &mut R,
    warm_start: Option<&ModelParameter>,
    options: &SolverOptions,
) -> Result<MleResult, MleError> {
    let noise = draw_noise(log.dim(), params.sigma, rng);
    solve_with_noise(log, params.ridge, noise, warm_start, options)
}

pub(crate) fn draw_noise<R: Rng + ?Sized>(dim: usize, sigma: f64, rng: &mut R) -> DVector<f64> {
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).expect("finite positive sigma");
        DVector::from_fn(dim, |_, _| normal.sample(rng))
    } else {
        // Keep the stream position independent of whether noise is on.
        DVector::from_fn(dim, |_, _| {
            let _: f64 = StandardNormal.sample(rng);
            0.0
        })
    }
}

/// Minimizes `Σℓ(θ) + (Δ/2)‖θ‖² + bᵀθ` for a given `b` with damped Newton
/// steps and backtracking. Falls back to the negative gradient whenever the
/// Hessian cannot be factored.
pub fn solve_with_noise(
    log: &InteractionLog,
    ridge: f64,
    noise: DVector<f64>,
    warm_start: Option<&ModelParameter>,
    options: &SolverOptions,
) -> Result<MleResult, MleError> {
    if !(ridge > 0.0 && ridge.is_finite()) {
        return Err(MleError::NonPositiveRidge(ridge));
    }
    let d = log.dim();
    if noise.len() != d {
        return Err(MleError::DimensionMismatch {
            expected: d,
            found: noise.len(),
        });
    }
    let mut theta = match warm_start {
        Some(start) => {
            check_theta(log, start)?;
            start.0.clone()
        }
        None => DVector::zeros(d),
    };

    let objective = |theta: &DVector<f64>| -> f64 {
        nll_value(log, theta.as_slice()) + 0.5 * ridge * theta.norm_squared() + noise.dot(theta)
    };
    let full_eval = |theta: &DVector<f64>| -> (f64, DVector<f64>, DMatrix<f64>) {
        let eval = evaluate(log, theta.as_slice(), true);
        let value = eval.value + 0.5 * ridge * theta.norm_squared() + noise.dot(theta);
        let grad = eval.gradient + theta * ridge + &noise;
        let mut hess = eval.hessian;
        for i in 0..d {
            hess[(i, i)] += ridge;
        }
        (value, grad, hess)
    };

    let (mut value, mut grad, mut hess) = full_eval(&theta);
    let mut best = (grad.norm(), theta.clone());
    for iteration in 0..options.max_iterations {
        let residual = grad.norm();
        if residual < best.0 {
            best = (residual, theta.clone());
        }
        if residual <= options.tolerance {
            return Ok(MleResult {
                theta_hat: ModelParameter(theta),
                grad_residual_norm: residual,
                iterations: iteration,
                noise,
            });
        }
        let direction = match Cholesky::new(hess.clone()) {
            Some(chol) => -chol.solve(&grad),
            None => -grad.clone(),
        };
        let slope = grad.dot(&direction);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..options.max_backtracks {
            let candidate = &theta + &direction * step;
            let cand_value = objective(&candidate);
            if cand_value <= value + options.armijo * step * slope {
                accepted = Some((candidate, cand_value));
                break;
            }
            // Near the optimum the decrease drops below the rounding noise
            // of the objective; take the step if it is within that noise.
            let noise_floor = 1e-13 * (1.0 + value.abs());
            if (cand_value - value).abs() <= noise_floor {
                accepted = Some((candidate, cand_value));
                break;
            }
            step *= 0.5;
        }
        let Some((candidate, _)) = accepted else {
            break;
        };
        theta = candidate;
        (value, grad, hess) = full_eval(&theta);
    }
    let residual = grad.norm();
    if residual <= options.tolerance {
        return Ok(MleResult {
            theta_hat: ModelParameter(theta),
            grad_residual_norm: residual,
            iterations: options.max_iterations,
            noise,
        });
    }
    if residual < best.0 {
        best = (residual, theta);
    }
    Err(MleError::NonConvergence {
        best: ModelParameter(best.1),
        residual: best.0,
        iterations: options.max_iterations,
    })
}
