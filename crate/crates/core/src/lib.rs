//! Privacy-preserving MNL contextual bandit.
//!
//! `no_std` with `alloc`. Randomness is always supplied by the caller.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod accountant;
pub mod mle;
pub mod mnl;
pub mod policy;
pub mod tree;

pub use accountant::{BudgetSplit, EpsDeltaBudget, PrivacyLedger, ZcdpBudget};
pub use mle::{InteractionLog, PerturbationParams};
pub use mnl::{Assortment, ChoiceOutcome, ModelParameter, RoundContext};
pub use policy::{Dpmnl, Policy, PolicyConfig, PolicyStreams, Regime};
pub use tree::{AggregationTree, GramRelease};
