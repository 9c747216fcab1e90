//! Replicated regret runs.

use std::sync::Arc;

use dpmnl_core::accountant::LedgerEntry;
use dpmnl_core::mnl::{
    best_assortment, choice_probabilities, expected_revenue, sample_choice, Assortment, AssortmentSearch,
    ChoiceOutcome, ModelParameter, RoundContext,
};
use dpmnl_core::policy::{Dpmnl, Policy, PolicyError, PolicyStreams, PolicyWarning};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{ArmKind, ArmSpec, ExperimentConfig};
use crate::env::{draw_theta_star, Environment};
use crate::replay::{fit_ground_truth, ReplayData};
use crate::results::ResultsTable;
use crate::seeds::{stream, Stream};
use crate::SimError;

/// Test arm that always plays the optimal assortment under `θ*`.
#[derive(Debug, Clone)]
pub struct OraclePolicy {
    theta: ModelParameter,
    k: usize,
    search: AssortmentSearch,
}

impl OraclePolicy {
    pub fn new(theta: ModelParameter, k: usize) -> Self {
        Self {
            theta,
            k,
            search: AssortmentSearch::default(),
        }
    }
}

impl Policy for OraclePolicy {
    fn act(&mut self, ctx: &RoundContext) -> Result<Assortment, PolicyError> {
        let z = ctx.utilities(&self.theta)?;
        Ok(best_assortment(&z, ctx.revenues(), self.k.min(ctx.num_items()), self.search)?)
    }

    fn update(&mut self, _: &RoundContext, _: &Assortment, _: ChoiceOutcome) -> Result<(), PolicyError> {
        Ok(())
    }
}

/// Test arm offering uniformly random size-`K` subsets.
#[derive(Debug, Clone)]
pub struct UniformRandomPolicy<R> {
    k: usize,
    rng: R,
}

impl<R: Rng> UniformRandomPolicy<R> {
    pub fn new(k: usize, rng: R) -> Self {
        Self { k, rng }
    }
}

impl<R: Rng> Policy for UniformRandomPolicy<R> {
    fn act(&mut self, ctx: &RoundContext) -> Result<Assortment, PolicyError> {
        let n = ctx.num_items();
        let picked = rand::seq::index::sample(&mut self.rng, n, self.k.min(n)).into_vec();
        Ok(Assortment::new(picked)?)
    }

    fn update(&mut self, _: &RoundContext, _: &Assortment, _: ChoiceOutcome) -> Result<(), PolicyError> {
        Ok(())
    }
}

/// Per-round record of one arm on one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub arm: usize,
    pub replicate: usize,
    pub instant: Vec<f64>,
    pub cumulative: Vec<f64>,
    pub ledger: Vec<LedgerEntry>,
    pub mle_calls: usize,
    pub mle_cap: usize,
    pub mle_failures: usize,
    pub reshifts: usize,
    pub theta_star: ModelParameter,
    /// Set when the replicate aborted; the series stop at the failing round.
    pub error: Option<String>,
}

impl RunOutput {
    pub fn final_regret(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }
}

/// Worker count from `DPMNL_THREADS` (unset or 0 lets rayon decide).
pub fn thread_count() -> usize {
    std::env::var("DPMNL_THREADS")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(0)
}

/// Shared inputs of every run in an experiment.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub replay: Option<Arc<ReplayData>>,
    /// `θ*` common to all replicates, if not drawn per replicate.
    pub theta_star: Option<ModelParameter>,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared, SimError> {
    let replay = match &cfg.env.replay_path {
        Some(p) => Some(Arc::new(ReplayData::from_path(p)?)),
        None => None,
    };
    if let Some(r) = &replay {
        if r.dim() != cfg.env.d {
            return Err(SimError::Config(format!("replay has {} features, d = {}", r.dim(), cfg.env.d)));
        }
    }
    let theta_star = match (&cfg.env.theta_star, &replay) {
        (Some(t), _) => Some(ModelParameter::from_slice(t)),
        (None, Some(r)) => Some(fit_ground_truth(r)?),
        (None, None) => None,
    };
    Ok(Prepared { replay, theta_star })
}

fn environment(cfg: &ExperimentConfig, prepared: &Prepared, replicate: usize) -> Result<Environment, SimError> {
    let seed = cfg.master_seed;
    let theta = match &prepared.theta_star {
        Some(t) => t.clone(),
        None => draw_theta_star(
            cfg.env.d,
            cfg.env.context_mode,
            &mut stream(seed, None, replicate, Stream::ThetaStar),
        ),
    };
    let rng = stream(seed, None, replicate, Stream::Contexts);
    match &prepared.replay {
        Some(data) => Environment::replay(Arc::clone(data), theta, rng),
        None => Environment::synthetic(&cfg.env, theta, rng),
    }
}

fn policy_streams(seed: u64, arm: usize, replicate: usize) -> PolicyStreams<ChaCha8Rng> {
    PolicyStreams {
        exploration: stream(seed, Some(arm), replicate, Stream::Exploration),
        mle_noise: stream(seed, Some(arm), replicate, Stream::MleNoise),
        tree_noise: stream(seed, Some(arm), replicate, Stream::TreeNoise),
    }
}

struct Tally {
    instant: Vec<f64>,
    cumulative: Vec<f64>,
}

fn drive<P: Policy>(
    policy: &mut P,
    env: &mut Environment,
    k: usize,
    horizon: usize,
    choices: &mut ChaCha8Rng,
    tally: &mut Tally,
) -> Result<(), SimError> {
    let theta = env.theta_star().clone();
    let mut total = 0.0;
    for _ in 0..horizon {
        let ctx = env.next_context();
        let offered = policy.act(&ctx)?;
        let z = ctx.utilities(&theta)?;
        let best = best_assortment(&z, ctx.revenues(), k.min(ctx.num_items()), AssortmentSearch::default())?;
        let regret = expected_revenue(&ctx, &best, &theta)? - expected_revenue(&ctx, &offered, &theta)?;
        total += regret;
        tally.instant.push(regret);
        tally.cumulative.push(total);
        let probs = choice_probabilities(&ctx, &offered, &theta)?;
        let outcome = sample_choice(&probs, choices)?;
        policy.update(&ctx, &offered, outcome)?;
    }
    Ok(())
}

/// Runs one arm on one replicate. Errors end the replicate, not the experiment.
pub fn run_replicate(
    cfg: &ExperimentConfig,
    prepared: &Prepared,
    arm_index: usize,
    arm: &ArmSpec,
    replicate: usize,
) -> RunOutput {
    let seed = cfg.master_seed;
    let mut out = RunOutput {
        arm: arm_index,
        replicate,
        instant: Vec::with_capacity(cfg.horizon),
        cumulative: Vec::with_capacity(cfg.horizon),
        ledger: Vec::new(),
        mle_calls: 0,
        mle_cap: 0,
        mle_failures: 0,
        reshifts: 0,
        theta_star: ModelParameter::zeros(cfg.env.d),
        error: None,
    };
    let mut env = match environment(cfg, prepared, replicate) {
        Ok(e) => e,
        Err(e) => {
            out.error = Some(e.to_string());
            return out;
        }
    };
    out.theta_star = env.theta_star().clone();
    let mut choices = stream(seed, Some(arm_index), replicate, Stream::Choices);
    let mut tally = Tally {
        instant: Vec::with_capacity(cfg.horizon),
        cumulative: Vec::with_capacity(cfg.horizon),
    };
    let result = match arm.kind {
        ArmKind::Oracle => {
            let mut p = OraclePolicy::new(env.theta_star().clone(), arm.k);
            drive(&mut p, &mut env, arm.k, cfg.horizon, &mut choices, &mut tally)
        }
        ArmKind::Random => {
            let mut p = UniformRandomPolicy::new(arm.k, stream(seed, Some(arm_index), replicate, Stream::Exploration));
            drive(&mut p, &mut env, arm.k, cfg.horizon, &mut choices, &mut tally)
        }
        ArmKind::Zcdp | ArmKind::EpsDelta | ArmKind::NoiseOff => {
            match cfg
                .policy_config(arm)
                .and_then(|pc| Dpmnl::new(pc, policy_streams(seed, arm_index, replicate)).map_err(SimError::from))
            {
                Ok(mut p) => {
                    let r = drive(&mut p, &mut env, arm.k, cfg.horizon, &mut choices, &mut tally);
                    out.ledger = p.ledger().entries().to_vec();
                    out.mle_calls = p.mle_calls();
                    out.mle_cap = p.config().mle_cap;
                    out.reshifts = p.tree().reshift_count();
                    out.mle_failures = p
                        .warnings()
                        .iter()
                        .filter(|w| matches!(w, PolicyWarning::MleNonConvergence { .. }))
                        .count();
                    r
                }
                Err(e) => Err(e),
            }
        }
    };
    out.instant = tally.instant;
    out.cumulative = tally.cumulative;
    if let Err(e) = result {
        out.error = Some(e.to_string());
    }
    out
}

/// Runs every arm on every replicate in parallel. The output order is
/// `(arm, replicate)` regardless of scheduling.
pub fn run_experiment(cfg: &ExperimentConfig, arms: Vec<ArmSpec>) -> Result<ResultsTable, SimError> {
    cfg.validate()?;
    let prepared = prepare(cfg)?;
    let jobs: Vec<(usize, usize)> = (0..arms.len())
        .flat_map(|a| (0..cfg.replicates).map(move |r| (a, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count())
        .build()
        .map_err(|e| SimError::Config(format!("thread pool: {e}")))?;
    let runs: Vec<RunOutput> = pool.install(|| {
        jobs.par_iter()
            .map(|&(a, r)| run_replicate(cfg, &prepared, a, &arms[a], r))
            .collect()
    });
    Ok(ResultsTable::new(arms, cfg.horizon, cfg.replicates, runs))
}
