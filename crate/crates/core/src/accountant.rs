//! Privacy budget bookkeeping.
//!
//! zCDP budgets compose additively; `(ε, δ)` budgets compose by summing both
//! parameters. A `ρ`-zCDP guarantee converts to `(ρ + 2√(ρ ln(1/δ)), δ)`-DP.

use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BudgetError {
    #[error("rho must be positive and finite, got {0}")]
    InvalidRho(f64),
    #[error("epsilon must be positive and finite, got {0}")]
    InvalidEpsilon(f64),
    #[error("delta must lie in (0, 1), got {0}")]
    InvalidDelta(f64),
    #[error("fraction must lie in (0, 1), got {0}")]
    InvalidFraction(f64),
    #[error("sensitivity must be positive and finite, got {0}")]
    InvalidSensitivity(f64),
    #[error("number of mechanism calls must be at least 1")]
    ZeroCalls,
    #[error("cannot compose an empty list of budgets")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ZcdpBudget {
    rho: f64,
}

impl ZcdpBudget {
    pub fn new(rho: f64) -> Result<Self, BudgetError> {
        if rho > 0.0 && rho.is_finite() {
            Ok(Self { rho })
        } else {
            Err(BudgetError::InvalidRho(rho))
        }
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Equal share of this budget for each of `calls` mechanisms.
    pub fn per_call(&self, calls: usize) -> Result<Self, BudgetError> {
        if calls == 0 {
            return Err(BudgetError::ZeroCalls);
        }
        Self::new(self.rho / calls as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsDeltaBudget {
    epsilon: f64,
    delta: f64,
}

impl EpsDeltaBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self, BudgetError> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(BudgetError::InvalidEpsilon(epsilon));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(BudgetError::InvalidDelta(delta));
        }
        Ok(Self { epsilon, delta })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// Division of a total zCDP budget between the private MLE (`ρ₁`) and the
/// private Gram-matrix tree (`ρ₂`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetSplit {
    pub total: ZcdpBudget,
    pub mle_fraction: f64,
    pub mle: ZcdpBudget,
    pub cov: ZcdpBudget,
}

impl BudgetSplit {
    pub fn new(total: ZcdpBudget, mle_fraction: f64) -> Result<Self, BudgetError> {
        if !(mle_fraction > 0.0 && mle_fraction < 1.0) {
            return Err(BudgetError::InvalidFraction(mle_fraction));
        }
        let rho1 = total.rho() * mle_fraction;
        Ok(Self {
            total,
            mle_fraction,
            mle: ZcdpBudget::new(rho1)?,
            cov: ZcdpBudget::new(total.rho() - rho1)?,
        })
    }
}

/// Additive zCDP composition.
pub fn compose_zcdp(budgets: &[ZcdpBudget]) -> Result<ZcdpBudget, BudgetError> {
    if budgets.is_empty() {
        return Err(BudgetError::Empty);
    }
    ZcdpBudget::new(budgets.iter().map(ZcdpBudget::rho).sum())
}

/// `ρ`-zCDP implies `(ρ + 2√(ρ ln(1/δ)), δ)`-DP.
pub fn zcdp_to_eps_delta(rho: f64, delta: f64) -> Result<EpsDeltaBudget, BudgetError> {
    let rho = ZcdpBudget::new(rho)?.rho();
    if !(delta > 0.0 && delta < 1.0) {
        return Err(BudgetError::InvalidDelta(delta));
    }
    EpsDeltaBudget::new(rho + 2.0 * libm::sqrt(rho * libm::log(1.0 / delta)), delta)
}

/// The alternative `ε = ρ + 4ρ ln T` relation, kept only for comparison runs.
pub fn linear_zcdp_to_eps(rho: f64, horizon: usize) -> Result<f64, BudgetError> {
    let rho = ZcdpBudget::new(rho)?.rho();
    Ok(rho + 4.0 * rho * libm::log(horizon as f64))
}

/// Standard deviation of a Gaussian mechanism with L2 sensitivity `Δ` that
/// is `ρ`-zCDP: `ρ = Δ² / (2σ²)`.
pub fn gaussian_sigma_for_zcdp(sensitivity: f64, rho: f64) -> Result<f64, BudgetError> {
    if !(sensitivity > 0.0 && sensitivity.is_finite()) {
        return Err(BudgetError::InvalidSensitivity(sensitivity));
    }
    let rho = ZcdpBudget::new(rho)?.rho();
    Ok(sensitivity / libm::sqrt(2.0 * rho))
}

/// zCDP parameter of a Gaussian mechanism, the inverse of
/// [`gaussian_sigma_for_zcdp`].
pub fn gaussian_zcdp_rho(sensitivity: f64, sigma: f64) -> f64 {
    sensitivity * sensitivity / (2.0 * sigma * sigma)
}

/// Per-call budget so that `calls` private-MLE invocations stay within
/// `(ε₁, δ₁)` under advanced composition:
/// `(ε₁ / √(8 D ln(1/δ₁)), δ₁ / (2D))`.
pub fn per_call_mle_budget_epsdelta(total: EpsDeltaBudget, calls: usize) -> Result<EpsDeltaBudget, BudgetError> {
    if calls == 0 {
        return Err(BudgetError::ZeroCalls);
    }
    let d = calls as f64;
    let eps = total.epsilon() / libm::sqrt(8.0 * d * libm::log(1.0 / total.delta()));
    EpsDeltaBudget::new(eps, total.delta() / (2.0 * d))
}

/// Basic composition: sums `ε` and `δ`. Returns raw `(ε, δ)` because the sum
/// of `δ`s may leave `(0, 1)`.
pub fn basic_compose_epsdelta(budgets: &[EpsDeltaBudget]) -> Result<(f64, f64), BudgetError> {
    if budgets.is_empty() {
        return Err(BudgetError::Empty);
    }
    Ok(budgets
        .iter()
        .fold((0.0, 0.0), |(e, d), b| (e + b.epsilon(), d + b.delta())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mechanism {
    PrivateMle,
    PrivateCov,
}

impl Mechanism {
    pub fn name(&self) -> &'static str {
        match self {
            Self::PrivateMle => "private_mle",
            Self::PrivateCov => "private_cov",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Charge {
    Zcdp(ZcdpBudget),
    EpsDelta(EpsDeltaBudget),
}

impl Charge {
    /// `ρ` for zCDP charges, `ε` otherwise.
    pub fn primary(&self) -> f64 {
        match self {
            Self::Zcdp(b) => b.rho(),
            Self::EpsDelta(b) => b.epsilon(),
        }
    }

    pub fn delta(&self) -> Option<f64> {
        match self {
            Self::Zcdp(_) => None,
            Self::EpsDelta(b) => Some(b.delta()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LedgerEntry {
    pub event: String,
    pub mechanism: Mechanism,
    pub charge: Charge,
    /// Running sum of [`Charge::primary`] including this entry.
    pub cumulative: f64,
}

/// Append-only record of every noise draw's budget charge.
///
/// For zCDP charges the running total is the exact composed `ρ`. For
/// `(ε, δ)` charges it is the basic-composition sum, an upper bound.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PrivacyLedger {
    entries: Vec<LedgerEntry>,
    delta_total: f64,
}

impl PrivacyLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn charge(&mut self, event: impl Into<String>, mechanism: Mechanism, charge: Charge) {
        let cumulative = self.total() + charge.primary();
        self.delta_total += charge.delta().unwrap_or(0.0);
        self.entries.push(LedgerEntry {
            event: event.into(),
            mechanism,
            charge,
            cumulative,
        });
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    /// Composed primary parameter (`ρ` or basic-composition `ε`); zero when empty.
    pub fn total(&self) -> f64 {
        self.entries.last().map_or(0.0, |e| e.cumulative)
    }

    pub fn total_delta(&self) -> f64 {
        self.delta_total
    }

    pub fn count(&self, mechanism: Mechanism) -> usize {
        self.entries.iter().filter(|e| e.mechanism == mechanism).count()
    }
}
