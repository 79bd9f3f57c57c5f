//! The control loop: actor-critic learning on segments served by the actor
//! harness, with the meta-parameters adapted by a policy-gradient validation
//! objective on swapped (or fresh) segments, plus the frozen baseline.

use std::collections::VecDeque;
use std::path::Path;
use std::sync::Arc;

use crate::approx::AgentParams;
use crate::config::{Algorithm, ExperimentConfig};
use crate::envs::{build_noisy_gridworld, ActorHarness};
use crate::error::{CoreError, Result};
use crate::meta::{meta_step, trace_update, MetaOptimizerState, MetaParams, MetaTrace};
use crate::returns::Trajectory;
use crate::runlog::{final_window_mean, AbortInfo, RunLog, RunRow};
use crate::scalar::Scalar;

use super::prediction::{agent_layout, meta_params_from_config, stream_rng, validation_view};
use super::updates::a2c_inner_update_batch;
use super::{pg_meta_objective_grad, swap_reuse_pairing, ValidationSpec};

const ACTOR_STREAM_BASE: u64 = 10;
/// Window of completed episodes over which the return metric is averaged.
const RETURN_WINDOW: usize = 100;

fn select<S: Clone>(batch: &[Trajectory<S>], idx: &[usize]) -> Vec<Trajectory<S>> {
    idx.iter().map(|&i| batch[i].clone()).collect()
}

struct ControlRun<S> {
    params: AgentParams<S>,
    mp: MetaParams<S>,
    harness: ActorHarness<S>,
    window: VecDeque<f64>,
    metrics: Vec<f64>,
    log: RunLog<S>,
}

impl<S: Scalar> ControlRun<S> {
    fn init(config: &ExperimentConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if config.algorithm != Algorithm::Control {
            return Err(CoreError::InvalidConfig(
                "control runner needs algorithm = control".into(),
            ));
        }
        let spec = Arc::new(build_noisy_gridworld::<S>());
        let num_slots = if config.eta_state_dependent {
            spec.num_states
        } else {
            1
        };
        let mp = meta_params_from_config::<S>(config, spec.num_states);
        let layout = agent_layout(config, spec.num_states, spec.num_actions, num_slots);
        let params = AgentParams::zeros(layout);
        let rngs = (0..config.num_actors)
            .map(|i| stream_rng(seed, ACTOR_STREAM_BASE + i as u64))
            .collect();
        let harness = ActorHarness::new(
            Arc::clone(&spec),
            config.num_actors,
            config.snapshot_lag,
            params.clone(),
            mp.eta_view(),
            rngs,
        );
        let log = RunLog::new(seed, !config.eta_state_dependent, num_slots);
        Ok(ControlRun {
            params,
            mp,
            harness,
            window: VecDeque::with_capacity(RETURN_WINDOW),
            metrics: Vec::new(),
            log,
        })
    }

    fn collect_batch(&mut self, config: &ExperimentConfig) -> Result<Vec<Trajectory<S>>> {
        let mut batch = Vec::with_capacity(config.meta_batch_size);
        for _ in 0..config.meta_batch_size {
            let (traj, _version) = self.harness.next_segment(config.segment_length)?;
            batch.push(traj);
        }
        for ret in self.harness.drain_completed_returns() {
            if self.window.len() == RETURN_WINDOW {
                self.window.pop_front();
            }
            self.window.push_back(ret.to_f64_lossy());
        }
        Ok(batch)
    }

    fn metric(&self) -> f64 {
        if self.window.is_empty() {
            0.0
        } else {
            self.window.iter().sum::<f64>() / self.window.len() as f64
        }
    }

    fn observe(&mut self, config: &ExperimentConfig, iter: u64, inner_loss: S) -> bool {
        let metric = self.metric();
        self.metrics.push(metric);
        let diverged =
            !metric.is_finite() || metric.abs() > config.divergence_threshold || !self.params.all_finite();
        if diverged || iter == config.iterations || iter.is_multiple_of(config.log_every) {
            let view = self.mp.eta_view();
            self.log.rows.push(RunRow {
                iter,
                metric: S::of(metric),
                inner_loss,
                gamma: (0..self.mp.num_slots()).map(|s| view.gamma_at(s)).collect(),
                lambda: (0..self.mp.num_slots()).map(|s| view.lambda_at(s)).collect(),
            });
        }
        if diverged {
            self.log.aborted = Some(AbortInfo {
                iter,
                metric,
                reason: "control run diverged".into(),
            });
        }
        !diverged
    }

    fn finish(mut self) -> RunLog<S> {
        let view = self.mp.eta_view();
        self.log.final_eta = (0..self.mp.num_slots())
            .map(|s| (view.gamma_at(s), view.lambda_at(s)))
            .collect();
        self.log.final_metric = final_window_mean(&self.metrics);
        self.log
    }
}

/// One seed of the meta-gradient control experiment.
///
/// Per iteration a batch of segments is collected from the harness. Under
/// data reuse the batch is split in half and each half serves once as update
/// data and once as validation data; otherwise a fresh batch is collected for
/// validation. Each pairing applies the actor-critic update, takes the
/// policy-gradient validation objective at the new parameters, folds the
/// sensitivity into the trace, steps the logits and publishes the result to
/// the actors.
pub fn run_meta_control<S: Scalar>(
    config: &ExperimentConfig,
    seed: u64,
    checkpoint_dir: Option<&Path>,
) -> Result<RunLog<S>> {
    let mut run = ControlRun::init(config, seed)?;
    let vspec = ValidationSpec::from_config(config);
    let layout = run.mp.layout();
    let mut opt =
        MetaOptimizerState::new(config.meta_optimizer, S::of(config.beta), layout.active_dim());
    let mut trace = MetaTrace::zeros(run.params.theta_dim(), layout.active_dim(), S::of(config.mu));
    let alpha = S::of(config.alpha());
    let b = S::of(config.value_coeff);
    let c = S::of(config.entropy_coeff);

    run.observe(config, 0, S::zero());
    'outer: for iter in 1..=config.iterations {
        let batch = run.collect_batch(config)?;
        let pairs = if config.data_reuse {
            swap_reuse_pairing(batch.len())
        } else {
            Vec::new()
        };
        // (update set, validation set) realizations for this iteration
        let pairings: Vec<(Vec<Trajectory<S>>, Vec<Trajectory<S>>)> = if pairs.is_empty() {
            let validation = run.collect_batch(config)?;
            vec![(batch, validation)]
        } else {
            pairs
                .into_iter()
                .map(|(u, v)| (select(&batch, &u), select(&batch, &v)))
                .collect()
        };

        let mut loss_acc = S::zero();
        let pair_count = pairings.len();
        let mut fd_due = config.debug_fd_check && iter.is_multiple_of(1000);
        for (update_set, validation_set) in pairings {
            let upd = a2c_inner_update_batch(&update_set, &run.params, &run.mp, alpha, b, c)?;
            if std::mem::take(&mut fd_due) {
                super::updates::fd_check_inner_update(
                    &update_set,
                    &run.params,
                    &run.mp,
                    alpha,
                    Some((b, c)),
                    &upd.df_deta,
                )?;
            }
            let cond = validation_view(config, &run.mp, &vspec);
            let dj = pg_meta_objective_grad(&validation_set, &upd.new_params, &vspec, &cond)?;
            trace_update(&mut trace, &upd.df_deta)?;
            if layout.active_dim() > 0 {
                meta_step(&mut run.mp, &mut opt, &dj, &trace)?;
            }
            run.params = upd.new_params;
            run.harness.publish(&run.params, &run.mp.eta_view());
            loss_acc += upd.inner_loss;
        }

        let inner_loss = loss_acc / S::of(pair_count as f64);
        if !run.observe(config, iter, inner_loss) {
            break 'outer;
        }
        if config.checkpoint_every > 0 && iter % config.checkpoint_every == 0 {
            if let Some(dir) = checkpoint_dir {
                run.params
                    .save_checkpoint(&dir.join(format!("checkpoint_seed{seed}_iter{iter}.txt")))?;
            }
        }
    }
    Ok(run.finish())
}

/// Plain actor-critic baseline with frozen meta-parameters. Collection and
/// update order mirror the meta loop exactly (including discarded validation
/// batches when data reuse is off) so a meta run with every component frozen
/// follows the identical parameter path.
pub fn run_baseline_control<S: Scalar>(
    config: &ExperimentConfig,
    seed: u64,
    checkpoint_dir: Option<&Path>,
) -> Result<RunLog<S>> {
    let mut run = ControlRun::init(config, seed)?;
    let alpha = S::of(config.alpha());
    let b = S::of(config.value_coeff);
    let c = S::of(config.entropy_coeff);

    run.observe(config, 0, S::zero());
    'outer: for iter in 1..=config.iterations {
        let batch = run.collect_batch(config)?;
        let pairs = if config.data_reuse {
            swap_reuse_pairing(batch.len())
        } else {
            Vec::new()
        };
        let update_sets: Vec<Vec<Trajectory<S>>> = if pairs.is_empty() {
            let _validation = run.collect_batch(config)?;
            vec![batch]
        } else {
            pairs.into_iter().map(|(u, _)| select(&batch, &u)).collect()
        };

        let mut loss_acc = S::zero();
        let count = update_sets.len();
        for update_set in update_sets {
            let upd = a2c_inner_update_batch(&update_set, &run.params, &run.mp, alpha, b, c)?;
            run.params = upd.new_params;
            run.harness.publish(&run.params, &run.mp.eta_view());
            loss_acc += upd.inner_loss;
        }

        if !run.observe(config, iter, loss_acc / S::of(count as f64)) {
            break 'outer;
        }
        if config.checkpoint_every > 0 && iter % config.checkpoint_every == 0 {
            if let Some(dir) = checkpoint_dir {
                run.params
                    .save_checkpoint(&dir.join(format!("checkpoint_seed{seed}_iter{iter}.txt")))?;
            }
        }
    }
    Ok(run.finish())
}
