//! Experiment configuration: a flat `key = value` file format with defaults
//! for every field, CLI-style overrides, and a deterministic echo so any run
//! can be reproduced from the copy stored next to its outputs.

use std::fmt;

use crate::error::{CoreError, Result};
use crate::meta::MetaOptimizerKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvName {
    SignalNoise,
    Fan,
    Gridworld,
    Custom,
}

impl EnvName {
    fn as_str(&self) -> &'static str {
        match self {
            EnvName::SignalNoise => "signal_noise",
            EnvName::Fan => "fan",
            EnvName::Gridworld => "gridworld",
            EnvName::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Predict,
    Control,
}

impl Algorithm {
    fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Predict => "predict",
            Algorithm::Control => "control",
        }
    }
}

/// Which meta-parameter families adapt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdaptSet {
    None,
    Gamma,
    Lambda,
    Both,
}

impl AdaptSet {
    pub fn gamma(&self) -> bool {
        matches!(self, AdaptSet::Gamma | AdaptSet::Both)
    }

    pub fn lambda(&self) -> bool {
        matches!(self, AdaptSet::Lambda | AdaptSet::Both)
    }

    fn as_str(&self) -> &'static str {
        match self {
            AdaptSet::None => "none",
            AdaptSet::Gamma => "gamma",
            AdaptSet::Lambda => "lambda",
            AdaptSet::Both => "both",
        }
    }
}

/// Conditioning input used when evaluating the validation objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValidationConditioning {
    /// Condition validation-side evaluations on the fixed reference values.
    EtaPrime,
    /// Condition them on the current adapted values.
    CurrentEta,
}

impl ValidationConditioning {
    fn as_str(&self) -> &'static str {
        match self {
            ValidationConditioning::EtaPrime => "eta_prime",
            ValidationConditioning::CurrentEta => "current_eta",
        }
    }
}

/// Everything a run needs. Every field has a default; `alpha` defaults per
/// algorithm (0.1 for tabular prediction, 0.01 for linear control) and is
/// resolved at access time unless set explicitly.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvName,
    pub mrp_file: String,
    pub algorithm: Algorithm,
    pub adapt: AdaptSet,
    pub eta_state_dependent: bool,
    pub conditioning: bool,
    pub validation_conditioning: ValidationConditioning,
    pub gamma_prime: f64,
    pub lambda_prime: f64,
    pub seeds: Vec<u64>,
    pub iterations: u64,
    alpha_override: Option<f64>,
    pub beta: f64,
    pub mu: f64,
    pub meta_optimizer: MetaOptimizerKind,
    pub value_coeff: f64,
    pub entropy_coeff: f64,
    pub segment_length: usize,
    pub meta_batch_size: usize,
    pub embedding_size: usize,
    pub fan_width: usize,
    pub gamma_logit_init: f64,
    pub lambda_logit_init: f64,
    pub num_actors: usize,
    pub snapshot_lag: u64,
    pub data_reuse: bool,
    pub log_every: u64,
    pub checkpoint_every: u64,
    /// Verify inner-update meta sensitivities by finite differences every
    /// 1000th iteration.
    pub debug_fd_check: bool,
    pub divergence_threshold: f64,
    pub workers: usize,
    pub sweep_gamma_grid: Vec<f64>,
    pub sweep_lambda_grid: Vec<f64>,
    pub gradcheck_tolerance: f64,
    pub gradcheck_instances: usize,
    pub gradcheck_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            env: EnvName::SignalNoise,
            mrp_file: String::new(),
            algorithm: Algorithm::Predict,
            adapt: AdaptSet::Both,
            eta_state_dependent: false,
            conditioning: false,
            validation_conditioning: ValidationConditioning::EtaPrime,
            gamma_prime: 1.0,
            lambda_prime: 1.0,
            seeds: (0..10).collect(),
            iterations: 50_000,
            alpha_override: None,
            beta: 0.001,
            mu: 0.0,
            meta_optimizer: MetaOptimizerKind::Adam,
            value_coeff: 0.5,
            entropy_coeff: 0.01,
            segment_length: 20,
            meta_batch_size: 8,
            embedding_size: 16,
            fan_width: 5,
            gamma_logit_init: 0.0,
            lambda_logit_init: 0.0,
            num_actors: 1,
            snapshot_lag: 0,
            data_reuse: true,
            log_every: 50,
            checkpoint_every: 0,
            debug_fd_check: false,
            divergence_threshold: 1e6,
            workers: 0,
            sweep_gamma_grid: vec![0.1, 0.3, 0.5, 0.7, 0.9],
            sweep_lambda_grid: Vec::new(),
            gradcheck_tolerance: 0.0,
            gradcheck_instances: 100,
            gradcheck_seed: 0,
        }
    }
}

impl ExperimentConfig {
    /// Inner learning rate, resolved per algorithm unless overridden.
    pub fn alpha(&self) -> f64 {
        self.alpha_override.unwrap_or(match self.algorithm {
            Algorithm::Predict => 0.1,
            Algorithm::Control => 0.01,
        })
    }

    pub fn set_alpha(&mut self, alpha: f64) {
        self.alpha_override = Some(alpha);
    }

    /// Apply one `key = value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |msg: &str| CoreError::BadConfigValue {
            key: key.to_string(),
            msg: msg.to_string(),
        };
        let parse_f64 = |v: &str| v.parse::<f64>().map_err(|_| bad("expected a number"));
        let parse_u64 = |v: &str| v.parse::<u64>().map_err(|_| bad("expected an integer"));
        let parse_usize = |v: &str| v.parse::<usize>().map_err(|_| bad("expected an integer"));
        let parse_bool = |v: &str| match v {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(bad("expected true or false")),
        };
        let parse_f64_list = |v: &str| -> Result<Vec<f64>> {
            if v.is_empty() {
                return Ok(Vec::new());
            }
            v.split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|_| bad("expected numbers")))
                .collect()
        };
        match key {
            "env" => {
                self.env = match value {
                    "signal_noise" => EnvName::SignalNoise,
                    "fan" => EnvName::Fan,
                    "gridworld" => EnvName::Gridworld,
                    "custom" => EnvName::Custom,
                    _ => return Err(bad("expected signal_noise | fan | gridworld | custom")),
                }
            }
            "mrp_file" => self.mrp_file = value.to_string(),
            "algorithm" => {
                self.algorithm = match value {
                    "predict" => Algorithm::Predict,
                    "control" => Algorithm::Control,
                    _ => return Err(bad("expected predict | control")),
                }
            }
            "adapt" => {
                self.adapt = match value {
                    "none" => AdaptSet::None,
                    "gamma" => AdaptSet::Gamma,
                    "lambda" => AdaptSet::Lambda,
                    "both" => AdaptSet::Both,
                    _ => return Err(bad("expected none | gamma | lambda | both")),
                }
            }
            "eta_state_dependent" => self.eta_state_dependent = parse_bool(value)?,
            "conditioning" => self.conditioning = parse_bool(value)?,
            "validation_conditioning" => {
                self.validation_conditioning = match value {
                    "eta_prime" => ValidationConditioning::EtaPrime,
                    "current_eta" => ValidationConditioning::CurrentEta,
                    _ => return Err(bad("expected eta_prime | current_eta")),
                }
            }
            "gamma_prime" => self.gamma_prime = parse_f64(value)?,
            "lambda_prime" => self.lambda_prime = parse_f64(value)?,
            "seeds" => {
                if value.is_empty() {
                    return Err(bad("seed list is empty"));
                }
                self.seeds = value
                    .split(',')
                    .map(|s| s.trim().parse::<u64>().map_err(|_| bad("expected integers")))
                    .collect::<Result<Vec<u64>>>()?;
            }
            "iterations" => self.iterations = parse_u64(value)?,
            "alpha" => self.alpha_override = Some(parse_f64(value)?),
            "beta" => self.beta = parse_f64(value)?,
            "mu" => {
                let mu = parse_f64(value)?;
                if !(0.0..=1.0).contains(&mu) {
                    return Err(bad("trace decay must be in [0, 1]"));
                }
                self.mu = mu;
            }
            "meta_optimizer" => {
                self.meta_optimizer = match value {
                    "sgd" => MetaOptimizerKind::Sgd,
                    "adam" => MetaOptimizerKind::Adam,
                    _ => return Err(bad("expected sgd | adam")),
                }
            }
            "value_coeff" => self.value_coeff = parse_f64(value)?,
            "entropy_coeff" => self.entropy_coeff = parse_f64(value)?,
            "segment_length" => self.segment_length = parse_usize(value)?,
            "meta_batch_size" => {
                let m = parse_usize(value)?;
                if m == 0 {
                    return Err(bad("meta batch size must be at least 1"));
                }
                self.meta_batch_size = m;
            }
            "embedding_size" => self.embedding_size = parse_usize(value)?,
            "fan_width" => self.fan_width = parse_usize(value)?,
            "gamma_logit_init" => self.gamma_logit_init = parse_f64(value)?,
            "lambda_logit_init" => self.lambda_logit_init = parse_f64(value)?,
            "num_actors" => {
                let n = parse_usize(value)?;
                if n == 0 {
                    return Err(bad("need at least one actor"));
                }
                self.num_actors = n;
            }
            "snapshot_lag" => self.snapshot_lag = parse_u64(value)?,
            "data_reuse" => self.data_reuse = parse_bool(value)?,
            "log_every" => self.log_every = parse_u64(value)?.max(1),
            "checkpoint_every" => self.checkpoint_every = parse_u64(value)?,
            "debug_fd_check" => self.debug_fd_check = parse_bool(value)?,
            "divergence_threshold" => self.divergence_threshold = parse_f64(value)?,
            "workers" => self.workers = parse_usize(value)?,
            "sweep_gamma_grid" => self.sweep_gamma_grid = parse_f64_list(value)?,
            "sweep_lambda_grid" => self.sweep_lambda_grid = parse_f64_list(value)?,
            "gradcheck_tolerance" => self.gradcheck_tolerance = parse_f64(value)?,
            "gradcheck_instances" => self.gradcheck_instances = parse_usize(value)?,
            "gradcheck_seed" => self.gradcheck_seed = parse_u64(value)?,
            other => return Err(CoreError::UnknownConfigKey(other.to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let check_unit = |name: &str, v: f64| -> Result<()> {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(CoreError::BadConfigValue {
                    key: name.to_string(),
                    msg: format!("{v} is outside (0, 1]"),
                })
            }
        };
        check_unit("gamma_prime", self.gamma_prime)?;
        check_unit("lambda_prime", self.lambda_prime)?;
        if self.seeds.is_empty() {
            return Err(CoreError::InvalidConfig("no seeds".into()));
        }
        if self.alpha() <= 0.0 {
            return Err(CoreError::BadConfigValue {
                key: "alpha".into(),
                msg: "learning rate must be positive".into(),
            });
        }
        if self.segment_length == 0 {
            return Err(CoreError::BadConfigValue {
                key: "segment_length".into(),
                msg: "segment length must be positive".into(),
            });
        }
        match (self.algorithm, self.env) {
            (Algorithm::Predict, EnvName::Gridworld) => Err(CoreError::InvalidConfig(
                "prediction runs need a reward-process env".into(),
            )),
            (Algorithm::Control, EnvName::SignalNoise | EnvName::Fan | EnvName::Custom) => Err(
                CoreError::InvalidConfig("control runs need an MDP env".into()),
            ),
            _ => Ok(()),
        }?;
        if self.env == EnvName::Custom && self.mrp_file.is_empty() {
            return Err(CoreError::InvalidConfig(
                "env = custom needs mrp_file = <path>".into(),
            ));
        }
        Ok(())
    }
}

impl std::str::FromStr for ExperimentConfig {
    type Err = CoreError;

    /// Parse a config file body, starting from defaults.
    fn from_str(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for raw in text.lines() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CoreError::InvalidConfig(format!("expected `key = value`, got `{line}`"))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }
}

fn fmt_f64_list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl fmt::Display for ExperimentConfig {
    /// Deterministic echo; parsing it back reproduces the config exactly.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "env = {}", self.env.as_str())?;
        writeln!(f, "mrp_file = {}", self.mrp_file)?;
        writeln!(f, "algorithm = {}", self.algorithm.as_str())?;
        writeln!(f, "adapt = {}", self.adapt.as_str())?;
        writeln!(f, "eta_state_dependent = {}", self.eta_state_dependent)?;
        writeln!(f, "conditioning = {}", self.conditioning)?;
        writeln!(
            f,
            "validation_conditioning = {}",
            self.validation_conditioning.as_str()
        )?;
        writeln!(f, "gamma_prime = {}", self.gamma_prime)?;
        writeln!(f, "lambda_prime = {}", self.lambda_prime)?;
        writeln!(
            f,
            "seeds = {}",
            self.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",")
        )?;
        writeln!(f, "iterations = {}", self.iterations)?;
        writeln!(f, "alpha = {}", self.alpha())?;
        writeln!(f, "beta = {}", self.beta)?;
        writeln!(f, "mu = {}", self.mu)?;
        let opt = match self.meta_optimizer {
            MetaOptimizerKind::Sgd => "sgd",
            MetaOptimizerKind::Adam => "adam",
        };
        writeln!(f, "meta_optimizer = {opt}")?;
        writeln!(f, "value_coeff = {}", self.value_coeff)?;
        writeln!(f, "entropy_coeff = {}", self.entropy_coeff)?;
        writeln!(f, "segment_length = {}", self.segment_length)?;
        writeln!(f, "meta_batch_size = {}", self.meta_batch_size)?;
        writeln!(f, "embedding_size = {}", self.embedding_size)?;
        writeln!(f, "fan_width = {}", self.fan_width)?;
        writeln!(f, "gamma_logit_init = {}", self.gamma_logit_init)?;
        writeln!(f, "lambda_logit_init = {}", self.lambda_logit_init)?;
        writeln!(f, "num_actors = {}", self.num_actors)?;
        writeln!(f, "snapshot_lag = {}", self.snapshot_lag)?;
        writeln!(f, "data_reuse = {}", self.data_reuse)?;
        writeln!(f, "log_every = {}", self.log_every)?;
        writeln!(f, "checkpoint_every = {}", self.checkpoint_every)?;
        writeln!(f, "debug_fd_check = {}", self.debug_fd_check)?;
        writeln!(f, "divergence_threshold = {}", self.divergence_threshold)?;
        writeln!(f, "workers = {}", self.workers)?;
        writeln!(f, "sweep_gamma_grid = {}", fmt_f64_list(&self.sweep_gamma_grid))?;
        writeln!(f, "sweep_lambda_grid = {}", fmt_f64_list(&self.sweep_lambda_grid))?;
        writeln!(f, "gradcheck_tolerance = {}", self.gradcheck_tolerance)?;
        writeln!(f, "gradcheck_instances = {}", self.gradcheck_instances)?;
        writeln!(f, "gradcheck_seed = {}", self.gradcheck_seed)?;
        Ok(())
    }
}
