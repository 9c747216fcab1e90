//! Flat `key = value` experiment configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use dpmnl_core::accountant::{linear_zcdp_to_eps, zcdp_to_eps_delta, BudgetSplit, ZcdpBudget};
use dpmnl_core::policy::{PolicyConfig, Regime};

use crate::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContextMode {
    /// i.i.d. `N(0, I_d)` features.
    Raw,
    /// Gaussian features divided by `max(1, ‖x‖)`.
    Normalized,
}

/// Which policy an arm runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArmKind {
    Zcdp,
    /// The `(ε, δ)` benchmark.
    EpsDelta,
    NoiseOff,
    /// Always plays the optimal assortment.
    Oracle,
    /// Uniform random size-`K` subsets.
    Random,
}

impl ArmKind {
    pub fn name(&self) -> &'static str {
        match self {
            ArmKind::Zcdp => "zcdp",
            ArmKind::EpsDelta => "eps-delta",
            ArmKind::NoiseOff => "noise-off",
            ArmKind::Oracle => "oracle",
            ArmKind::Random => "random",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "zcdp" => ArmKind::Zcdp,
            "eps-delta" | "epsdelta" | "benchmark" => ArmKind::EpsDelta,
            "noise-off" | "nonprivate" => ArmKind::NoiseOff,
            "oracle" => ArmKind::Oracle,
            "random" => ArmKind::Random,
            _ => return None,
        })
    }
}

/// How an `(ε, δ)` budget is matched to `ρ_total` when not given directly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conversion {
    /// `ε = ρ + 2√(ρ ln(1/δ))`.
    Sqrt,
    /// `ε = ρ + 4ρ ln T`.
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub n: usize,
    pub d: usize,
    pub context_mode: ContextMode,
    /// Per-item revenues; `None` means every revenue is one.
    pub revenues: Option<Vec<f64>>,
    /// Fixed `θ*`; `None` draws it from `U[0,1]^d` per replicate.
    pub theta_star: Option<Vec<f64>>,
    pub replay_path: Option<PathBuf>,
}

/// One comparison arm.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmSpec {
    pub label: String,
    pub kind: ArmKind,
    pub rho_total: f64,
    pub mle_fraction: f64,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    pub horizon: usize,
    pub t0: Option<usize>,
    pub k: usize,
    pub mle_cap: Option<usize>,
    pub kappa: f64,
    pub q: f64,
    pub c_scale: f64,
    pub regime: ArmKind,
    pub rho_total: f64,
    pub mle_fraction: f64,
    pub epsilon_total: Option<f64>,
    pub delta_total: Option<f64>,
    pub conversion: Conversion,
    pub lambda: Option<f64>,
    pub replicates: usize,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    pub write_raw: bool,
    pub sweep_rho_total: Vec<f64>,
    pub sweep_mle_fraction: Vec<f64>,
    pub sweep_k: Vec<usize>,
    pub sweep_regime: Vec<ArmKind>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            env: EnvSpec {
                n: 100,
                d: 5,
                context_mode: ContextMode::Raw,
                revenues: None,
                theta_star: None,
                replay_path: None,
            },
            horizon: 20_000,
            t0: None,
            k: 10,
            mle_cap: None,
            kappa: 1.0,
            q: 0.5,
            c_scale: 1e-4,
            regime: ArmKind::Zcdp,
            rho_total: 1.0,
            mle_fraction: 0.9,
            epsilon_total: None,
            delta_total: None,
            conversion: Conversion::Sqrt,
            lambda: None,
            replicates: 20,
            master_seed: 0,
            output_dir: PathBuf::from("out"),
            write_raw: true,
            sweep_rho_total: Vec::new(),
            sweep_mle_fraction: Vec::new(),
            sweep_k: Vec::new(),
            sweep_regime: Vec::new(),
        }
    }
}

pub const KEYS: &[&str] = &[
    "T",
    "T0",
    "N",
    "K",
    "d",
    "D_MLE_cap",
    "kappa",
    "q",
    "c_scale",
    "regime",
    "rho_total",
    "mle_fraction",
    "epsilon_total",
    "delta_total",
    "conversion",
    "lambda",
    "replicates",
    "master_seed",
    "context_mode",
    "revenues",
    "theta_star",
    "replay_path",
    "output_dir",
    "write_raw",
    "sweep_rho_total",
    "sweep_mle_fraction",
    "sweep_K",
    "sweep_regime",
];

fn bad(key: &str, value: &str) -> SimError {
    SimError::Config(format!("invalid value {value:?} for key {key}"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, SimError> {
    value.parse().map_err(|_| bad(key, value))
}

fn list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, SimError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| num(key, s))
        .collect()
}

fn optional<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>, SimError> {
    if value.is_empty() || value == "auto" {
        Ok(None)
    } else {
        num(key, value).map(Some)
    }
}

fn optional_list(key: &str, value: &str) -> Result<Option<Vec<f64>>, SimError> {
    if value.is_empty() || value == "auto" {
        Ok(None)
    } else {
        list(key, value).map(Some)
    }
}

fn fmt_list<T: std::fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn fmt_opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "auto".to_string(), |x| x.to_string())
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, SimError> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| SimError::Config(format!("line {}: expected key = value", lineno + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    /// Applies `KEY=VALUE` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<(), SimError> {
        for o in overrides {
            let o = o.as_ref();
            let (key, value) = o
                .split_once('=')
                .ok_or_else(|| SimError::Config(format!("override {o:?} is not KEY=VALUE")))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), SimError> {
        match key {
            "T" => self.horizon = num(key, value)?,
            "T0" => self.t0 = optional(key, value)?,
            "N" => self.env.n = num(key, value)?,
            "K" => self.k = num(key, value)?,
            "d" => self.env.d = num(key, value)?,
            "D_MLE_cap" => self.mle_cap = optional(key, value)?,
            "kappa" => self.kappa = num(key, value)?,
            "q" => self.q = num(key, value)?,
            "c_scale" => self.c_scale = num(key, value)?,
            "regime" => self.regime = ArmKind::parse(value).ok_or_else(|| bad(key, value))?,
            "rho_total" => self.rho_total = num(key, value)?,
            "mle_fraction" => self.mle_fraction = num(key, value)?,
            "epsilon_total" => self.epsilon_total = optional(key, value)?,
            "delta_total" => self.delta_total = optional(key, value)?,
            "conversion" => {
                self.conversion = match value {
                    "sqrt" => Conversion::Sqrt,
                    "linear" => Conversion::Linear,
                    _ => return Err(bad(key, value)),
                }
            }
            "lambda" => self.lambda = optional(key, value)?,
            "replicates" => self.replicates = num(key, value)?,
            "master_seed" => self.master_seed = num(key, value)?,
            "context_mode" => {
                self.env.context_mode = match value {
                    "raw" => ContextMode::Raw,
                    "normalized" => ContextMode::Normalized,
                    _ => return Err(bad(key, value)),
                }
            }
            "revenues" => self.env.revenues = optional_list(key, value)?,
            "theta_star" => self.env.theta_star = optional_list(key, value)?,
            "replay_path" => {
                self.env.replay_path = if value.is_empty() || value == "none" {
                    None
                } else {
                    Some(PathBuf::from(value))
                }
            }
            "output_dir" => self.output_dir = PathBuf::from(value),
            "write_raw" => self.write_raw = num(key, value)?,
            "sweep_rho_total" => self.sweep_rho_total = list(key, value)?,
            "sweep_mle_fraction" => self.sweep_mle_fraction = list(key, value)?,
            "sweep_K" => self.sweep_k = list(key, value)?,
            "sweep_regime" => {
                self.sweep_regime = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| ArmKind::parse(s).ok_or_else(|| bad(key, s)))
                    .collect::<Result<_, _>>()?
            }
            _ => return Err(SimError::Config(format!("unknown key {key}"))),
        }
        Ok(())
    }

    /// Exploration length: the configured value, else `max(1, T/40)`.
    pub fn resolved_t0(&self) -> usize {
        self.t0.unwrap_or((self.horizon / 40).max(1))
    }

    /// MLE call cap: the configured value, else `⌈d ln(KT)⌉`.
    pub fn resolved_mle_cap(&self, k: usize) -> usize {
        self.mle_cap.unwrap_or_else(|| {
            let v = self.env.d as f64 * ((k * self.horizon) as f64).ln();
            (v.ceil() as usize).max(1)
        })
    }

    pub fn resolved_delta_total(&self) -> f64 {
        self.delta_total.unwrap_or_else(|| {
            let t = self.horizon as f64;
            1.0 / (t * t)
        })
    }

    /// `ε` of the benchmark matched to `ρ_total`.
    pub fn matched_epsilon(&self, rho_total: f64) -> Result<f64, SimError> {
        if let Some(e) = self.epsilon_total {
            return Ok(e);
        }
        Ok(match self.conversion {
            Conversion::Sqrt => zcdp_to_eps_delta(rho_total, self.resolved_delta_total())?.epsilon(),
            Conversion::Linear => linear_zcdp_to_eps(rho_total, self.horizon)?,
        })
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let err = |m: String| Err(SimError::Config(m));
        if self.replicates == 0 {
            return err("replicates must be at least 1".into());
        }
        if self.horizon < 2 {
            return err("T must be at least 2".into());
        }
        let t0 = self.resolved_t0();
        if t0 == 0 || t0 >= self.horizon {
            return err(format!("T0 = {t0} must satisfy 1 <= T0 < T = {}", self.horizon));
        }
        if self.env.d == 0 {
            return err("d must be at least 1".into());
        }
        if self.env.replay_path.is_none() && self.env.n == 0 {
            return err("N must be at least 1".into());
        }
        if let Some(r) = &self.env.revenues {
            if r.len() != self.env.n {
                return err(format!("revenues has {} entries, N = {}", r.len(), self.env.n));
            }
            if r.iter().any(|v| !v.is_finite() || v.abs() > 1.0) {
                return err("revenues must lie in [-1, 1]".into());
            }
        }
        if let Some(t) = &self.env.theta_star {
            if t.len() != self.env.d {
                return err(format!("theta_star has {} entries, d = {}", t.len(), self.env.d));
            }
        }
        if let Some(d) = self.delta_total {
            if !(d > 0.0 && d < 1.0) {
                return err("delta_total must lie in (0, 1)".into());
            }
        }
        for arm in self.arms(true)? {
            self.policy_config(&arm)?.validate()?;
        }
        Ok(())
    }

    fn arm(&self, kind: ArmKind, rho_total: f64, mle_fraction: f64, k: usize) -> ArmSpec {
        let label = match kind {
            ArmKind::Zcdp | ArmKind::EpsDelta => format!("{}_rho{rho_total}_mle{mle_fraction}_K{k}", kind.name()),
            _ => format!("{}_K{k}", kind.name()),
        };
        ArmSpec {
            label,
            kind,
            rho_total,
            mle_fraction,
            k,
        }
    }

    /// Arms of this experiment. Without `sweep` only the base arm; with it,
    /// the cartesian product of the `sweep_*` lists (empty lists fall back to
    /// the base value). Arms that ignore the budget appear once per `K`.
    pub fn arms(&self, sweep: bool) -> Result<Vec<ArmSpec>, SimError> {
        if !sweep {
            return Ok(vec![self.arm(self.regime, self.rho_total, self.mle_fraction, self.k)]);
        }
        let or = |v: &[f64], base| if v.is_empty() { vec![base] } else { v.to_vec() };
        let regimes = if self.sweep_regime.is_empty() {
            vec![self.regime]
        } else {
            self.sweep_regime.clone()
        };
        let ks = if self.sweep_k.is_empty() {
            vec![self.k]
        } else {
            self.sweep_k.clone()
        };
        let mut arms = Vec::new();
        for &kind in &regimes {
            for &k in &ks {
                match kind {
                    ArmKind::Zcdp | ArmKind::EpsDelta => {
                        for rho in or(&self.sweep_rho_total, self.rho_total) {
                            for f in or(&self.sweep_mle_fraction, self.mle_fraction) {
                                arms.push(self.arm(kind, rho, f, k));
                            }
                        }
                    }
                    _ => arms.push(self.arm(kind, self.rho_total, self.mle_fraction, k)),
                }
            }
        }
        Ok(arms)
    }

    /// Policy configuration for a DPMNL-type arm.
    pub fn policy_config(&self, arm: &ArmSpec) -> Result<PolicyConfig, SimError> {
        let d = self.env.d;
        let cap = self.resolved_mle_cap(arm.k);
        let regime = match arm.kind {
            ArmKind::EpsDelta => {
                if !(arm.mle_fraction > 0.0 && arm.mle_fraction < 1.0) {
                    return Err(SimError::Config(format!("mle_fraction {} outside (0, 1)", arm.mle_fraction)));
                }
                let eps = self.matched_epsilon(arm.rho_total)?;
                let delta = self.resolved_delta_total();
                let f = arm.mle_fraction;
                Regime::EpsDelta {
                    eps_mle: f * eps,
                    delta_mle: f * delta,
                    eps_cov: (1.0 - f) * eps,
                    delta_cov: (1.0 - f) * delta,
                }
            }
            ArmKind::NoiseOff | ArmKind::Oracle | ArmKind::Random => Regime::Zcdp {
                rho_mle: 1.0,
                rho_cov: 1.0,
            },
            ArmKind::Zcdp => {
                let split = BudgetSplit::new(ZcdpBudget::new(arm.rho_total)?, arm.mle_fraction)?;
                Regime::Zcdp {
                    rho_mle: split.mle.rho(),
                    rho_cov: split.cov.rho(),
                }
            }
        };
        let mut p = PolicyConfig::new(self.horizon, self.resolved_t0(), arm.k, d, cap, regime);
        p.kappa = self.kappa;
        p.q = self.q;
        p.c_scale = self.c_scale;
        p.noise_off = arm.kind != ArmKind::Zcdp && arm.kind != ArmKind::EpsDelta;
        p.lambda_override = self.lambda;
        Ok(p)
    }

    /// Fully resolved configuration in the same `key = value` format.
    pub fn snapshot(&self) -> String {
        let mut s = String::new();
        let w = &mut s;
        let kinds = |v: &[ArmKind]| v.iter().map(|k| k.name()).collect::<Vec<_>>().join(",");
        let _ = writeln!(w, "T = {}", self.horizon);
        let _ = writeln!(w, "T0 = {}", self.resolved_t0());
        let _ = writeln!(w, "N = {}", self.env.n);
        let _ = writeln!(w, "K = {}", self.k);
        let _ = writeln!(w, "d = {}", self.env.d);
        match self.mle_cap {
            Some(c) => {
                let _ = writeln!(w, "D_MLE_cap = {c}");
            }
            None => {
                let _ = writeln!(w, "D_MLE_cap = auto # {} at K = {}", self.resolved_mle_cap(self.k), self.k);
            }
        }
        let _ = writeln!(w, "kappa = {}", self.kappa);
        let _ = writeln!(w, "q = {}", self.q);
        let _ = writeln!(w, "c_scale = {}", self.c_scale);
        let _ = writeln!(w, "regime = {}", self.regime.name());
        let _ = writeln!(w, "rho_total = {}", self.rho_total);
        let _ = writeln!(w, "mle_fraction = {}", self.mle_fraction);
        let _ = writeln!(w, "epsilon_total = {}", fmt_opt(&self.epsilon_total));
        let _ = writeln!(w, "delta_total = {}", self.resolved_delta_total());
        let _ = writeln!(
            w,
            "conversion = {}",
            match self.conversion {
                Conversion::Sqrt => "sqrt",
                Conversion::Linear => "linear",
            }
        );
        let _ = writeln!(w, "lambda = {}", fmt_opt(&self.lambda));
        let _ = writeln!(w, "replicates = {}", self.replicates);
        let _ = writeln!(w, "master_seed = {}", self.master_seed);
        let _ = writeln!(
            w,
            "context_mode = {}",
            match self.env.context_mode {
                ContextMode::Raw => "raw",
                ContextMode::Normalized => "normalized",
            }
        );
        let _ = writeln!(w, "revenues = {}", self.env.revenues.as_deref().map_or("auto".into(), fmt_list));
        let _ = writeln!(w, "theta_star = {}", self.env.theta_star.as_deref().map_or("auto".into(), fmt_list));
        let _ = writeln!(
            w,
            "replay_path = {}",
            self.env.replay_path.as_ref().map_or("none".into(), |p| p.display().to_string())
        );
        let _ = writeln!(w, "output_dir = {}", self.output_dir.display());
        let _ = writeln!(w, "write_raw = {}", self.write_raw);
        let _ = writeln!(w, "sweep_rho_total = {}", fmt_list(&self.sweep_rho_total));
        let _ = writeln!(w, "sweep_mle_fraction = {}", fmt_list(&self.sweep_mle_fraction));
        let _ = writeln!(w, "sweep_K = {}", fmt_list(&self.sweep_k));
        let _ = writeln!(w, "sweep_regime = {}", kinds(&self.sweep_regime));
        s
    }
}
