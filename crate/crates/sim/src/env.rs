//! Context generators: synthetic Gaussian items or resampled replay rounds.

use std::sync::Arc;

use dpmnl_core::mnl::{ModelParameter, RoundContext};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::{ContextMode, EnvSpec};
use crate::replay::ReplayData;
use crate::SimError;

#[derive(Debug, Clone)]
enum Source {
    Synthetic {
        n: usize,
        d: usize,
        mode: ContextMode,
        revenues: Vec<f64>,
    },
    Replay(Arc<ReplayData>),
}

#[derive(Debug, Clone)]
pub struct Environment {
    source: Source,
    theta_star: ModelParameter,
    rng: ChaCha8Rng,
    round: usize,
}

/// `θ*` drawn from `U[0,1]^d`, scaled to norm at most one in normalized mode.
pub fn draw_theta_star(d: usize, mode: ContextMode, rng: &mut ChaCha8Rng) -> ModelParameter {
    let mut theta: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
    if mode == ContextMode::Normalized {
        let norm = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1.0 {
            theta.iter_mut().for_each(|v| *v /= norm);
        }
    }
    ModelParameter::from_slice(&theta)
}

impl Environment {
    pub fn synthetic(spec: &EnvSpec, theta_star: ModelParameter, rng: ChaCha8Rng) -> Result<Self, SimError> {
        if theta_star.dim() != spec.d {
            return Err(SimError::Config(format!(
                "theta_star has dimension {}, d = {}",
                theta_star.dim(),
                spec.d
            )));
        }
        Ok(Self {
            source: Source::Synthetic {
                n: spec.n,
                d: spec.d,
                mode: spec.context_mode,
                revenues: spec.revenues.clone().unwrap_or_else(|| vec![1.0; spec.n]),
            },
            theta_star,
            rng,
            round: 0,
        })
    }

    /// Rounds are drawn from `data` uniformly with replacement.
    pub fn replay(data: Arc<ReplayData>, theta_star: ModelParameter, rng: ChaCha8Rng) -> Result<Self, SimError> {
        if theta_star.dim() != data.dim() {
            return Err(SimError::Config(format!(
                "theta_star has dimension {}, replay has {}",
                theta_star.dim(),
                data.dim()
            )));
        }
        if data.rounds().is_empty() {
            return Err(SimError::Replay("replay file has no rounds".into()));
        }
        Ok(Self {
            source: Source::Replay(data),
            theta_star,
            rng,
            round: 0,
        })
    }

    pub fn theta_star(&self) -> &ModelParameter {
        &self.theta_star
    }

    pub fn next_context(&mut self) -> RoundContext {
        self.round += 1;
        match &self.source {
            Source::Synthetic { n, d, mode, revenues } => {
                let mut x = DMatrix::from_fn(*d, *n, |_, _| StandardNormal.sample(&mut self.rng));
                if *mode == ContextMode::Normalized {
                    for mut col in x.column_iter_mut() {
                        let norm = col.norm();
                        if norm > 1.0 {
                            col /= norm;
                        }
                    }
                }
                RoundContext::new(x, revenues.clone(), self.round).expect("validated revenues")
            }
            Source::Replay(data) => {
                let i = self.rng.random_range(0..data.rounds().len());
                let r = &data.rounds()[i];
                RoundContext::new(r.features.clone(), r.revenues.clone(), self.round).expect("validated replay round")
            }
        }
    }
}
