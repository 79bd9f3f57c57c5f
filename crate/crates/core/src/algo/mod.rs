//! Learning algorithms: the temporal-difference prediction loop, the
//! actor-critic control loop, their fixed-meta-parameter baselines, and the
//! experience-swap scheme that reuses each batch for both the inner update
//! and the meta-validation step.

mod control;
mod prediction;
mod updates;

pub use control::{run_baseline_control, run_meta_control};
pub use prediction::{run_baseline_prediction, run_meta_prediction};
pub use updates::{
    a2c_inner_update, a2c_inner_update_batch, fd_check_inner_update, mse_meta_objective_grad,
    pg_meta_objective_grad, td_lambda_inner_update,
};
pub(crate) use updates::{a2c_update_parts, td_update_parts};

use crate::approx::AgentParams;
use crate::config::{EnvName, ExperimentConfig};
use crate::envs::{build_fan_mrp, build_signal_noise_mrp, mrp_from_table, MrpSpec};
use crate::error::{CoreError, Result};
use crate::meta::EtaJacobian;
use crate::scalar::Scalar;

/// Result of one inner update: the updated parameters, the raw step, and the
/// sensitivity of the step to each active meta-parameter logit.
#[derive(Debug, Clone)]
pub struct InnerUpdateResult<S> {
    pub new_params: AgentParams<S>,
    pub delta_theta: Vec<S>,
    pub df_deta: EtaJacobian<S>,
    /// Sampled value of the inner objective, for logging.
    pub inner_loss: S,
}

/// Reference return specification for the validation objective.
#[derive(Debug, Clone, Copy)]
pub struct ValidationSpec<S> {
    pub gamma_prime: S,
    pub lambda_prime: S,
    pub meta_batch_size: usize,
}

impl<S: Scalar> ValidationSpec<S> {
    pub fn new(gamma_prime: S, lambda_prime: S, meta_batch_size: usize) -> Self {
        assert!(
            gamma_prime > S::zero() && gamma_prime <= S::one(),
            "reference discount must be in (0, 1]"
        );
        assert!(
            lambda_prime > S::zero() && lambda_prime <= S::one(),
            "reference bootstrapping must be in (0, 1]"
        );
        assert!(meta_batch_size >= 1);
        ValidationSpec {
            gamma_prime,
            lambda_prime,
            meta_batch_size,
        }
    }

    pub fn from_config(config: &ExperimentConfig) -> Self {
        ValidationSpec::new(
            S::of(config.gamma_prime),
            S::of(config.lambda_prime),
            config.meta_batch_size,
        )
    }
}

/// Split a batch into halves and emit both role assignments, so every
/// trajectory is used exactly once as update data and once as validation
/// data. A batch of one cannot be paired; callers fall back to pairing with
/// the next batch, and a warning is logged.
pub fn swap_reuse_pairing(batch_size: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
    if batch_size < 2 {
        log::warn!("swap reuse needs a batch of at least 2; falling back to consecutive segments");
        return Vec::new();
    }
    let half = batch_size / 2;
    let a: Vec<usize> = (0..half).collect();
    let b: Vec<usize> = (half..batch_size).collect();
    vec![(a.clone(), b.clone()), (b, a)]
}

/// Build the reward process named by the config (reads the table file for
/// `env = custom`).
pub fn build_mrp<S: Scalar>(config: &ExperimentConfig) -> Result<MrpSpec<S>> {
    match config.env {
        EnvName::SignalNoise => Ok(build_signal_noise_mrp()),
        EnvName::Fan => build_fan_mrp(config.fan_width),
        EnvName::Custom => {
            let text = std::fs::read_to_string(&config.mrp_file)?;
            mrp_from_table(&text)
        }
        EnvName::Gridworld => Err(CoreError::InvalidConfig(
            "gridworld is a control environment".into(),
        )),
    }
}
