//! The DPMNL policy: uniform exploration for `T0` rounds, then optimistic
//! assortments built from a privately estimated parameter and a privately
//! released Gram matrix. The estimate is refreshed whenever the released
//! determinant has doubled since the last refresh, up to a fixed number of
//! calls.

use alloc::vec::Vec;

use rand::Rng;
use thiserror::Error;

use crate::accountant::{
    per_call_mle_budget_epsdelta, BudgetError, Charge, EpsDeltaBudget, Mechanism, PrivacyLedger, ZcdpBudget,
};
use crate::mle::{
    hessian_rank, solve_perturbed_mle, InteractionLog, MleError, PerturbationParams, SolverOptions,
};
use crate::mnl::{
    best_assortment, dot, Assortment, AssortmentSearch, ChoiceOutcome, MnlError, ModelParameter, RoundContext,
};
use crate::tree::{compute_lambda, gram_of, AggregationTree, CovBudget, GramRelease, NoiseShape, TreeError};

/// Shift and MLE ridge used when all privacy noise is switched off.
pub const NOISE_OFF_RIDGE: f64 = 1e-6;

/// Bonus multiplier used in the synthetic experiments.
pub const DEFAULT_C_SCALE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("invalid configuration: {0}")]
    Config(&'static str),
    #[error("round context has dimension {found}, policy expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("update called without a preceding act")]
    NoPendingRound,
    #[error("horizon of {0} rounds already reached")]
    Finished(usize),
    #[error(transparent)]
    Model(#[from] MnlError),
    #[error(transparent)]
    Mle(#[from] MleError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Budget(#[from] BudgetError),
}

/// Privacy regime with the whole-run budgets of each subroutine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regime {
    Zcdp { rho_mle: f64, rho_cov: f64 },
    EpsDelta { eps_mle: f64, delta_mle: f64, eps_cov: f64, delta_cov: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    pub horizon: usize,
    pub t0: usize,
    pub k: usize,
    pub dim: usize,
    pub mle_cap: usize,
    pub kappa: f64,
    pub q: f64,
    pub c_scale: f64,
    pub regime: Regime,
    pub noise_off: bool,
    /// Replaces the computed shift; required when `dim < 2`.
    pub lambda_override: Option<f64>,
    pub search: AssortmentSearch,
    pub solver: SolverOptions,
}

impl PolicyConfig {
    pub fn new(horizon: usize, t0: usize, k: usize, dim: usize, mle_cap: usize, regime: Regime) -> Self {
        Self {
            horizon,
            t0,
            k,
            dim,
            mle_cap,
            kappa: 1.0,
            q: 0.5,
            c_scale: DEFAULT_C_SCALE,
            regime,
            noise_off: false,
            lambda_override: None,
            search: AssortmentSearch::default(),
            solver: SolverOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let err = |m| Err(PolicyError::Config(m));
        if self.dim == 0 {
            return err("d must be at least 1");
        }
        if self.k == 0 {
            return err("K must be at least 1");
        }
        if self.t0 == 0 || self.t0 >= self.horizon {
            return err("T0 must satisfy 1 <= T0 < T");
        }
        if self.mle_cap == 0 {
            return err("D_MLE_cap must be at least 1");
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return err("kappa must be positive");
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return err("q must lie in (0, 1)");
        }
        if !(self.c_scale >= 0.0 && self.c_scale.is_finite()) {
            return err("c_scale must be nonnegative");
        }
        if let Some(l) = self.lambda_override {
            if !(l > 0.0 && l.is_finite()) {
                return err("lambda override must be positive");
            }
        }
        if self.noise_off {
            return Ok(());
        }
        match self.regime {
            Regime::Zcdp { rho_mle, rho_cov } => {
                ZcdpBudget::new(rho_mle)?;
                ZcdpBudget::new(rho_cov)?;
            }
            Regime::EpsDelta {
                eps_mle,
                delta_mle,
                eps_cov,
                delta_cov,
            } => {
                EpsDeltaBudget::new(eps_mle, delta_mle)?;
                EpsDeltaBudget::new(eps_cov, delta_cov)?;
            }
        }
        Ok(())
    }

    pub fn rank(&self) -> usize {
        hessian_rank(self.dim, self.k)
    }

    /// Per-call objective-perturbation parameters.
    pub fn mle_params(&self) -> Result<PerturbationParams, PolicyError> {
        if self.noise_off {
            return Ok(PerturbationParams::noiseless(NOISE_OFF_RIDGE));
        }
        Ok(match self.regime {
            Regime::Zcdp { rho_mle, .. } => {
                PerturbationParams::calibrate_zcdp(rho_mle / self.mle_cap as f64, self.dim, self.k, self.q)?
            }
            Regime::EpsDelta { eps_mle, delta_mle, .. } => {
                let call = per_call_mle_budget_epsdelta(EpsDeltaBudget::new(eps_mle, delta_mle)?, self.mle_cap)?;
                PerturbationParams::calibrate_eps_delta(call.epsilon(), call.delta(), self.dim, self.k, self.q)?
            }
        })
    }

    pub fn cov_budget(&self) -> Result<Option<CovBudget>, PolicyError> {
        if self.noise_off {
            return Ok(None);
        }
        Ok(Some(match self.regime {
            Regime::Zcdp { rho_cov, .. } => CovBudget::Zcdp(ZcdpBudget::new(rho_cov)?),
            Regime::EpsDelta { eps_cov, delta_cov, .. } => CovBudget::EpsDelta(EpsDeltaBudget::new(eps_cov, delta_cov)?),
        }))
    }

    pub fn build_tree(&self) -> Result<AggregationTree, PolicyError> {
        Ok(match self.cov_budget()? {
            Some(b) => AggregationTree::calibrated(self.dim, self.horizon, self.k, b)?,
            None => AggregationTree::new(self.dim, self.horizon, 0.0, NoiseShape::Off)?,
        })
    }

    /// Shift `λ` for the tree noise (tiny constant in noise-off mode).
    pub fn lambda(&self, tree_sigma: f64) -> Result<f64, PolicyError> {
        if let Some(l) = self.lambda_override {
            return Ok(l);
        }
        if self.noise_off {
            return Ok(NOISE_OFF_RIDGE / 2.0);
        }
        Ok(compute_lambda(tree_sigma, self.dim, self.horizon)?)
    }
}

/// Confidence radius `α_t` before the `c_scale` factor.
///
/// zCDP: `(1/κ)(√((d/2)ln(1+t/d) + ln t) + 4/(e^{(1-q)ρ₁/(RD)} - 1)
/// + 4D√d(√(d + 2qρ₁/D) + √d)/(qρ₁) · √(ln T / K)) + √(3λ)`.
///
/// `(ε, δ)`: `√((d/2)ln(1+(t+1)/d) + ln(t+1)) + 4R/(ε√K) + √(4d ln T σ²)/√K
/// + √(3λ)`, with `ε` and `σ` those of a single MLE call.
///
/// With noise off only the leading square-root term remains.
pub fn compute_confidence_width(t: usize, cfg: &PolicyConfig, lambda: f64) -> Result<f64, PolicyError> {
    debug_assert!(t >= 1);
    let d = cfg.dim as f64;
    let k = cfg.k as f64;
    let big_t = cfg.horizon as f64;
    let r = cfg.rank() as f64;
    let cap = cfg.mle_cap as f64;
    match cfg.regime {
        Regime::Zcdp { rho_mle, .. } => {
            let tf = t as f64;
            let base = libm::sqrt(d / 2.0 * libm::log1p(tf / d) + libm::log(tf));
            if cfg.noise_off {
                return Ok(base / cfg.kappa);
            }
            let q = cfg.q;
            let ridge_term = 4.0 / libm::expm1((1.0 - q) * rho_mle / (r * cap));
            let noise_term = 4.0 * cap * libm::sqrt(d) * (libm::sqrt(d + 2.0 * q * rho_mle / cap) + libm::sqrt(d))
                / (q * rho_mle)
                * libm::sqrt(libm::log(big_t) / k);
            Ok((base + ridge_term + noise_term) / cfg.kappa + libm::sqrt(3.0 * lambda))
        }
        Regime::EpsDelta { .. } => {
            let tf = (t + 1) as f64;
            let base = libm::sqrt(d / 2.0 * libm::log1p(tf / d) + libm::log(tf));
            if cfg.noise_off {
                return Ok(base);
            }
            let params = cfg.mle_params()?;
            let Regime::EpsDelta { eps_mle, delta_mle, .. } = cfg.regime else {
                unreachable!()
            };
            let call = per_call_mle_budget_epsdelta(EpsDeltaBudget::new(eps_mle, delta_mle)?, cfg.mle_cap)?;
            Ok(base
                + 4.0 * r / (call.epsilon() * libm::sqrt(k))
                + libm::sqrt(4.0 * d * libm::log(big_t) * params.sigma * params.sigma) / libm::sqrt(k)
                + libm::sqrt(3.0 * lambda))
        }
    }
}

/// Inputs of the theoretical exploration length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExplorationLength {
    pub d: usize,
    pub k: usize,
    pub horizon: usize,
    /// Minimum eigenvalue of the context covariance.
    pub sigma0: f64,
    pub c1: f64,
    pub c2: f64,
    pub rho_mle: f64,
    pub kappa: f64,
    pub q: f64,
    pub mle_cap: usize,
}

impl ExplorationLength {
    /// `C₁ = C₂ = 1`, `κ = 1`, `q = ½`.
    pub fn new(d: usize, k: usize, horizon: usize, sigma0: f64, rho_mle: f64, mle_cap: usize) -> Self {
        Self {
            d,
            k,
            horizon,
            sigma0,
            c1: 1.0,
            c2: 1.0,
            rho_mle,
            kappa: 1.0,
            q: 0.5,
            mle_cap,
        }
    }

    /// `C_{ρ₁,T}`; pass `f64::INFINITY` as `rho_mle` for the non-private value.
    pub fn privacy_constant(&self) -> f64 {
        let d = self.d as f64;
        let t = self.horizon as f64;
        let cap = self.mle_cap as f64;
        let r = hessian_rank(self.d, self.k) as f64;
        let mut inner = libm::sqrt(d / 2.0 * libm::log1p(t / d) + libm::log(t));
        if self.rho_mle.is_finite() {
            let q = self.q;
            let rho = self.rho_mle;
            inner += 4.0 / libm::expm1((1.0 - q) * rho / (r * cap));
            inner += 4.0 * cap * libm::sqrt(d) * (libm::sqrt(d + 2.0 * q * rho / cap) + libm::sqrt(d)) / (q * rho)
                * libm::sqrt(libm::log(t) / self.k as f64);
        }
        inner * inner / (self.kappa * self.kappa)
    }

    /// `⌈(1/K)((C₁√d + C₂√(2 ln T))/σ₀)² + 2C_{ρ₁,T}/(Kσ₀)⌉`.
    pub fn compute(&self) -> Result<usize, PolicyError> {
        if !(self.sigma0 > 0.0 && self.sigma0.is_finite()) {
            return Err(PolicyError::Config("sigma0 must be positive"));
        }
        if self.d == 0 || self.k == 0 || self.horizon == 0 || self.mle_cap == 0 {
            return Err(PolicyError::Config("d, K, T and D_MLE must be positive"));
        }
        if !(self.rho_mle > 0.0) || !(self.q > 0.0 && self.q < 1.0) || !(self.kappa > 0.0) {
            return Err(PolicyError::Config("rho, q and kappa out of range"));
        }
        let k = self.k as f64;
        let a = (self.c1 * libm::sqrt(self.d as f64) + self.c2 * libm::sqrt(2.0 * libm::log(self.horizon as f64)))
            / self.sigma0;
        let value = a * a / k + 2.0 * self.privacy_constant() / (k * self.sigma0);
        Ok(libm::ceil(value) as usize)
    }
}

/// Anything that picks assortments round by round and learns from feedback.
pub trait Policy {
    fn act(&mut self, ctx: &RoundContext) -> Result<Assortment, PolicyError>;
    fn update(&mut self, ctx: &RoundContext, assortment: &Assortment, outcome: ChoiceOutcome) -> Result<(), PolicyError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Exploring,
    Exploiting,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyWarning {
    /// The solver stopped early; the previous estimate was kept.
    MleNonConvergence { round: usize, residual: f64 },
    /// The released Gram matrix needed the emergency re-shift.
    Reshift { round: usize },
}

/// Independent random streams used by the policy.
#[derive(Debug, Clone)]
pub struct PolicyStreams<R> {
    pub exploration: R,
    pub mle_noise: R,
    pub tree_noise: R,
}

#[derive(Debug, Clone)]
pub struct Dpmnl<R> {
    cfg: PolicyConfig,
    mle_params: PerturbationParams,
    lambda: f64,
    theta_hat: ModelParameter,
    release: Option<GramRelease>,
    logdet_ref: f64,
    mle_calls: usize,
    tree: AggregationTree,
    log: InteractionLog,
    ledger: PrivacyLedger,
    rounds: usize,
    pending: bool,
    frozen: bool,
    refresh_rounds: Vec<usize>,
    warnings: Vec<PolicyWarning>,
    streams: PolicyStreams<R>,
}

impl<R: Rng> Dpmnl<R> {
    pub fn new(cfg: PolicyConfig, streams: PolicyStreams<R>) -> Result<Self, PolicyError> {
        cfg.validate()?;
        let mle_params = cfg.mle_params()?;
        let tree = cfg.build_tree()?;
        let lambda = cfg.lambda(tree.sigma())?;
        let mut ledger = PrivacyLedger::new();
        if let Some(budget) = cfg.cov_budget()? {
            let charge = match budget {
                CovBudget::Zcdp(b) => Charge::Zcdp(b),
                CovBudget::EpsDelta(b) => Charge::EpsDelta(b),
            };
            ledger.charge("tree", Mechanism::PrivateCov, charge);
        }
        Ok(Self {
            mle_params,
            lambda,
            theta_hat: ModelParameter::zeros(cfg.dim),
            release: None,
            logdet_ref: f64::NEG_INFINITY,
            mle_calls: 0,
            tree,
            log: InteractionLog::new(cfg.dim),
            ledger,
            rounds: 0,
            pending: false,
            frozen: false,
            refresh_rounds: Vec::new(),
            warnings: Vec::new(),
            streams,
            cfg,
        })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.cfg
    }

    pub fn theta_hat(&self) -> &ModelParameter {
        &self.theta_hat
    }

    pub fn release(&self) -> Option<&GramRelease> {
        self.release.as_ref()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mle_params(&self) -> &PerturbationParams {
        &self.mle_params
    }

    pub fn mle_calls(&self) -> usize {
        self.mle_calls
    }

    /// Rounds at which the estimate was refreshed.
    pub fn refresh_rounds(&self) -> &[usize] {
        &self.refresh_rounds
    }

    pub fn logdet_ref(&self) -> f64 {
        self.logdet_ref
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn ledger(&self) -> &PrivacyLedger {
        &self.ledger
    }

    pub fn warnings(&self) -> &[PolicyWarning] {
        &self.warnings
    }

    pub fn tree(&self) -> &AggregationTree {
        &self.tree
    }

    pub fn log(&self) -> &InteractionLog {
        &self.log
    }

    pub fn phase(&self) -> Phase {
        if self.rounds < self.cfg.t0 || self.release.is_none() {
            Phase::Exploring
        } else {
            Phase::Exploiting
        }
    }

    /// Replaces the estimate and stops all further MLE calls.
    pub fn inject_estimate(&mut self, theta: ModelParameter) -> Result<(), PolicyError> {
        if theta.dim() != self.cfg.dim {
            return Err(PolicyError::DimensionMismatch {
                expected: self.cfg.dim,
                found: theta.dim(),
            });
        }
        self.theta_hat = theta;
        self.frozen = true;
        Ok(())
    }

    /// `c·α_t` for the upcoming round.
    pub fn bonus_scale(&self) -> Result<f64, PolicyError> {
        let t = (self.rounds + 1).max(1);
        Ok(self.cfg.c_scale * compute_confidence_width(t, &self.cfg, self.lambda)?)
    }

    /// Optimistic utilities `x·θ̂ + c·α_t·‖x‖_{V⁻¹}` for every item.
    pub fn scores(&self, ctx: &RoundContext) -> Result<Vec<f64>, PolicyError> {
        self.check_ctx(ctx)?;
        let release = self.release.as_ref().ok_or(PolicyError::NoPendingRound)?;
        let bonus = self.bonus_scale()?;
        let theta = self.theta_hat.as_slice();
        Ok((0..ctx.num_items())
            .map(|i| {
                let x = ctx.item(i);
                let mut z = dot(x, theta);
                if bonus != 0.0 {
                    z += bonus * release.inverse_norm(x);
                }
                z
            })
            .collect())
    }

    fn check_ctx(&self, ctx: &RoundContext) -> Result<(), PolicyError> {
        if ctx.dim() != self.cfg.dim {
            return Err(PolicyError::DimensionMismatch {
                expected: self.cfg.dim,
                found: ctx.dim(),
            });
        }
        Ok(())
    }

    fn refresh_estimate(&mut self, round: usize) {
        let call = match self.cfg.regime {
            _ if self.cfg.noise_off => None,
            Regime::Zcdp { rho_mle, .. } => {
                ZcdpBudget::new(rho_mle / self.cfg.mle_cap as f64).ok().map(Charge::Zcdp)
            }
            Regime::EpsDelta { eps_mle, delta_mle, .. } => EpsDeltaBudget::new(eps_mle, delta_mle)
                .and_then(|b| per_call_mle_budget_epsdelta(b, self.cfg.mle_cap))
                .ok()
                .map(Charge::EpsDelta),
        };
        let warm = self.theta_hat.clone();
        let result = solve_perturbed_mle(
            &self.log,
            &self.mle_params,
            &mut self.streams.mle_noise,
            Some(&warm),
            &self.cfg.solver,
        );
        self.mle_calls += 1;
        self.refresh_rounds.push(round);
        if let Some(charge) = call {
            self.ledger.charge("mle", Mechanism::PrivateMle, charge);
        }
        match result {
            Ok(r) => self.theta_hat = r.theta_hat,
            Err(MleError::NonConvergence { residual, .. }) => {
                self.warnings.push(PolicyWarning::MleNonConvergence { round, residual });
            }
            Err(_) => {
                self.warnings.push(PolicyWarning::MleNonConvergence {
                    round,
                    residual: f64::NAN,
                });
            }
        }
    }

    fn release_gram(&mut self, round: usize) -> Result<f64, PolicyError> {
        let release = self.tree.release(self.lambda)?;
        if release.reshifted {
            self.warnings.push(PolicyWarning::Reshift { round });
        }
        let logdet = release.log_det();
        self.release = Some(release);
        Ok(logdet)
    }
}

impl<R: Rng> Policy for Dpmnl<R> {
    fn act(&mut self, ctx: &RoundContext) -> Result<Assortment, PolicyError> {
        self.check_ctx(ctx)?;
        if self.rounds >= self.cfg.horizon {
            return Err(PolicyError::Finished(self.cfg.horizon));
        }
        let n = ctx.num_items();
        let k = self.cfg.k.min(n);
        if n == 0 {
            return Err(MnlError::EmptyAssortment.into());
        }
        let chosen = match self.phase() {
            Phase::Exploring => {
                let picked = rand::seq::index::sample(&mut self.streams.exploration, n, k).into_vec();
                Assortment::new(picked)?
            }
            Phase::Exploiting => {
                let z = self.scores(ctx)?;
                best_assortment(&z, ctx.revenues(), k, self.cfg.search)?
            }
        };
        self.pending = true;
        Ok(chosen)
    }

    fn update(&mut self, ctx: &RoundContext, assortment: &Assortment, outcome: ChoiceOutcome) -> Result<(), PolicyError> {
        if !self.pending {
            return Err(PolicyError::NoPendingRound);
        }
        self.check_ctx(ctx)?;
        self.log.push(ctx, assortment, outcome)?;
        let gram = gram_of(self.cfg.dim, assortment.indices().iter().map(|&i| ctx.item(i)));
        self.tree.update(&gram, &mut self.streams.tree_noise)?;
        self.pending = false;
        self.rounds += 1;
        let t = self.rounds;
        if t < self.cfg.t0 {
            return Ok(());
        }
        let logdet = self.release_gram(t)?;
        let first = t == self.cfg.t0;
        let doubled = logdet > core::f64::consts::LN_2 + self.logdet_ref;
        if !self.frozen && (first || (doubled && self.mle_calls < self.cfg.mle_cap)) {
            self.refresh_estimate(t);
            self.logdet_ref = logdet;
        } else if first {
            self.logdet_ref = logdet;
        }
        Ok(())
    }
}
