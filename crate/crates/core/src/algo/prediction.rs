//! The prediction loop: temporal-difference learning of a value function
//! while the return's meta-parameters adapt online by cross-validation, plus
//! the fixed-meta-parameter baseline used by sweeps.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::approx::{AgentParams, ParamLayout};
use crate::config::{ExperimentConfig, ValidationConditioning};
use crate::envs::{sample_mrp_episode, true_values, MrpSpec, ValueTable};
use crate::error::Result;
use crate::meta::{meta_step, trace_update, MetaOptimizerState, MetaParams, MetaTrace};
use crate::returns::EtaView;
use crate::runlog::{final_window_mean, AbortInfo, RunLog, RunRow};
use crate::scalar::Scalar;

use super::updates::td_lambda_inner_update;
use super::{build_mrp, mse_meta_objective_grad, ValidationSpec};

/// Independent deterministic substreams of one seed.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const UPDATE_STREAM: u64 = 1;
const VALIDATION_STREAM: u64 = 2;

pub(crate) fn meta_params_from_config<S: Scalar>(
    config: &ExperimentConfig,
    num_states: usize,
) -> MetaParams<S> {
    let g = S::of(config.gamma_logit_init);
    let l = S::of(config.lambda_logit_init);
    if config.eta_state_dependent {
        MetaParams::state_dependent(num_states, g, l, config.adapt.gamma(), config.adapt.lambda())
    } else {
        MetaParams::scalar(g, l, config.adapt.gamma(), config.adapt.lambda())
    }
}

pub(crate) fn agent_layout(config: &ExperimentConfig, obs_dim: usize, num_actions: usize, num_slots: usize) -> ParamLayout {
    ParamLayout::new(
        obs_dim,
        num_actions,
        config.conditioning,
        config.embedding_size,
        2 * num_slots,
    )
}

/// The conditioning view used on the validation side.
pub(crate) fn validation_view<S: Scalar>(
    config: &ExperimentConfig,
    mp: &MetaParams<S>,
    vspec: &ValidationSpec<S>,
) -> EtaView<S> {
    match config.validation_conditioning {
        ValidationConditioning::EtaPrime => mp
            .eta_view()
            .constant_like(vspec.gamma_prime, vspec.lambda_prime),
        ValidationConditioning::CurrentEta => mp.eta_view(),
    }
}

/// Mean squared error of the value function against the exact table, over
/// non-terminal states.
fn value_table_mse<S: Scalar>(
    mrp: &MrpSpec<S>,
    params: &AgentParams<S>,
    eta: &EtaView<S>,
    table: &ValueTable<S>,
) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for s in 0..mrp.num_states() {
        if mrp.is_terminal(s) {
            continue;
        }
        let v = params.value(&mrp.observation(s), eta)?.to_f64_lossy();
        let err = v - table.values[s].to_f64_lossy();
        total += err * err;
        count += 1;
    }
    Ok(total / count as f64)
}

fn row_from_state<S: Scalar>(iter: u64, metric: f64, inner_loss: S, mp: &MetaParams<S>) -> RunRow<S> {
    let view = mp.eta_view();
    RunRow {
        iter,
        metric: S::of(metric),
        inner_loss,
        gamma: (0..mp.num_slots()).map(|s| view.gamma_at(s)).collect(),
        lambda: (0..mp.num_slots()).map(|s| view.lambda_at(s)).collect(),
    }
}

fn should_log(iter: u64, iterations: u64, log_every: u64) -> bool {
    iter == iterations || iter.is_multiple_of(log_every)
}

struct PredictionRun<S> {
    mrp: MrpSpec<S>,
    table: ValueTable<S>,
    params: AgentParams<S>,
    mp: MetaParams<S>,
    log: RunLog<S>,
    metrics: Vec<f64>,
}

impl<S: Scalar> PredictionRun<S> {
    fn init(config: &ExperimentConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mrp: MrpSpec<S> = build_mrp(config)?;
        let num_slots = if config.eta_state_dependent {
            mrp.num_states()
        } else {
            1
        };
        let mp = meta_params_from_config(config, mrp.num_states());
        let layout = agent_layout(config, mrp.obs_dim, 0, num_slots);
        let params = AgentParams::zeros(layout);
        let table = true_values(&mrp, S::of(config.gamma_prime))?;
        let log = RunLog::new(seed, !config.eta_state_dependent, num_slots);
        Ok(PredictionRun {
            mrp,
            table,
            params,
            mp,
            log,
            metrics: Vec::new(),
        })
    }

    fn metric(&self) -> Result<f64> {
        value_table_mse(&self.mrp, &self.params, &self.mp.eta_view(), &self.table)
    }

    /// Record the metric; returns false when the run just diverged.
    fn observe(&mut self, config: &ExperimentConfig, iter: u64, inner_loss: S) -> Result<bool> {
        let metric = self.metric()?;
        self.metrics.push(metric);
        let diverged = !metric.is_finite() || metric > config.divergence_threshold;
        if diverged || should_log(iter, config.iterations, config.log_every) {
            self.log.rows.push(row_from_state(iter, metric, inner_loss, &self.mp));
        }
        if diverged {
            self.log.aborted = Some(AbortInfo {
                iter,
                metric,
                reason: format!(
                    "validation mse {metric} exceeded divergence threshold {}",
                    config.divergence_threshold
                ),
            });
        }
        Ok(!diverged)
    }

    fn finish(mut self) -> RunLog<S> {
        let view = self.mp.eta_view();
        self.log.final_eta = (0..self.mp.num_slots())
            .map(|s| (view.gamma_at(s), view.lambda_at(s)))
            .collect();
        self.log.final_metric = final_window_mean(&self.metrics);
        self.log
    }

    fn maybe_checkpoint(
        &self,
        config: &ExperimentConfig,
        dir: Option<&Path>,
        seed: u64,
        iter: u64,
    ) -> Result<()> {
        if config.checkpoint_every == 0 || iter == 0 || !iter.is_multiple_of(config.checkpoint_every) {
            return Ok(());
        }
        if let Some(dir) = dir {
            let path = dir.join(format!("checkpoint_seed{seed}_iter{iter}.txt"));
            self.params.save_checkpoint(&path)?;
        }
        Ok(())
    }
}

/// One seed of the meta-gradient prediction experiment.
///
/// Per iteration: sample an update episode and apply the temporal-difference
/// inner update; sample a meta batch of validation episodes and take the
/// squared-error gradient at the new parameters under the reference return;
/// fold the update's meta sensitivity into the trace; step the logits.
pub fn run_meta_prediction<S: Scalar>(
    config: &ExperimentConfig,
    seed: u64,
    checkpoint_dir: Option<&Path>,
) -> Result<RunLog<S>> {
    let mut run = PredictionRun::init(config, seed)?;
    let vspec = ValidationSpec::from_config(config);
    let layout = run.mp.layout();
    let mut opt = MetaOptimizerState::new(config.meta_optimizer, S::of(config.beta), layout.active_dim());
    let mut trace = MetaTrace::zeros(run.params.theta_dim(), layout.active_dim(), S::of(config.mu));
    let mut rng_update = stream_rng(seed, UPDATE_STREAM);
    let mut rng_val = stream_rng(seed, VALIDATION_STREAM);
    let alpha = S::of(config.alpha());

    run.observe(config, 0, S::zero())?;
    for iter in 1..=config.iterations {
        let traj = sample_mrp_episode(&run.mrp, &mut rng_update, config.segment_length);
        let upd = td_lambda_inner_update(&traj, &run.params, &run.mp, alpha)?;
        if config.debug_fd_check && iter.is_multiple_of(1000) {
            super::updates::fd_check_inner_update(
                std::slice::from_ref(&traj),
                &run.params,
                &run.mp,
                alpha,
                None,
                &upd.df_deta,
            )?;
        }

        let validation: Vec<_> = (0..vspec.meta_batch_size)
            .map(|_| sample_mrp_episode(&run.mrp, &mut rng_val, config.segment_length))
            .collect();
        let cond = validation_view(config, &run.mp, &vspec);
        let dj = mse_meta_objective_grad(&validation, &upd.new_params, &vspec, &cond)?;

        trace_update(&mut trace, &upd.df_deta)?;
        if layout.active_dim() > 0 {
            meta_step(&mut run.mp, &mut opt, &dj, &trace)?;
        }
        run.params = upd.new_params;

        if !run.observe(config, iter, upd.inner_loss)? {
            break;
        }
        run.maybe_checkpoint(config, checkpoint_dir, seed, iter)?;
    }
    Ok(run.finish())
}

/// Plain temporal-difference baseline with the meta-parameters frozen at
/// their initial values: the same inner update on the same episode stream,
/// with no validation sampling and no meta machinery. A meta run whose
/// meta-parameters are all frozen follows the identical parameter path.
pub fn run_baseline_prediction<S: Scalar>(
    config: &ExperimentConfig,
    seed: u64,
    checkpoint_dir: Option<&Path>,
) -> Result<RunLog<S>> {
    let mut run = PredictionRun::init(config, seed)?;
    let mut rng_update = stream_rng(seed, UPDATE_STREAM);
    let alpha = S::of(config.alpha());

    run.observe(config, 0, S::zero())?;
    for iter in 1..=config.iterations {
        let traj = sample_mrp_episode(&run.mrp, &mut rng_update, config.segment_length);
        let upd = td_lambda_inner_update(&traj, &run.params, &run.mp, alpha)?;
        run.params = upd.new_params;
        if !run.observe(config, iter, upd.inner_loss)? {
            break;
        }
        run.maybe_checkpoint(config, checkpoint_dir, seed, iter)?;
    }
    Ok(run.finish())
}
