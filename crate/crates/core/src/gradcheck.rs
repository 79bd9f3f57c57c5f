//! The finite-difference verification suite behind the `gradcheck` command.
//!
//! Every analytic derivative in the crate is checked against central finite
//! differences (h = 1e-6, double precision) on randomized instances:
//! return gradients, the meta sensitivity of both inner updates, both
//! validation objective gradients, and the complete one-step meta-gradient
//! chain through an inner update. The oracles apply the same conventions as
//! the implementation: value estimates are constants inside return
//! derivatives, validation targets and advantage weights are frozen at the
//! unperturbed parameters, and the conditioning input is held fixed while
//! the return's meta-parameters move.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::algo::{a2c_update_parts, mse_meta_objective_grad, pg_meta_objective_grad, td_update_parts, ValidationSpec};
use crate::approx::{AgentParams, ParamLayout};
use crate::config::ExperimentConfig;
use crate::meta::MetaParams;
use crate::returns::{lambda_return, n_step_return, vtrace_return, EtaView, Trajectory};
use crate::stats::rel_err;

const FD_H: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    /// What the check verifies, for the report.
    pub subject: &'static str,
    pub instances: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub checks: Vec<CheckOutcome>,
    pub elapsed: Duration,
}

impl GradCheckReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }
}

struct Suite {
    rng: ChaCha8Rng,
    instances: usize,
    tolerance_override: f64,
    checks: Vec<CheckOutcome>,
}

impl Suite {
    fn record(&mut self, name: &'static str, subject: &'static str, instances: usize, max_rel_err: f64, default_tol: f64) {
        let tolerance = if self.tolerance_override > 0.0 {
            self.tolerance_override
        } else {
            default_tol
        };
        self.checks.push(CheckOutcome {
            name,
            subject,
            instances,
            max_rel_err,
            tolerance,
            passed: max_rel_err < tolerance,
        });
    }
}

fn random_state_ids(rng: &mut ChaCha8Rng, num_states: usize, len: usize) -> Vec<usize> {
    (0..=len).map(|_| rng.random_range(0..num_states)).collect()
}

fn random_mrp_traj(rng: &mut ChaCha8Rng, num_states: usize, len: usize, obs_dim: usize) -> Trajectory<f64> {
    let state_ids = random_state_ids(rng, num_states, len);
    Trajectory {
        observations: (0..=len)
            .map(|_| (0..obs_dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect(),
        state_ids,
        actions: vec![],
        rewards: (0..len).map(|_| rng.random_range(-2.0..2.0)).collect(),
        behavior_probs: vec![1.0; len],
        terminal: rng.random_bool(0.5),
    }
}

fn random_logits(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()
}

fn random_values(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn view_from(gamma_logits: &[f64], lambda_logits: &[f64]) -> EtaView<f64> {
    MetaParams::from_logits(gamma_logits.to_vec(), lambda_logits.to_vec(), true, true, true)
        .eta_view_full()
}

/// Central finite difference of `f` with respect to one coordinate of `x`.
fn central_diff(mut x: Vec<f64>, i: usize, f: &mut dyn FnMut(&[f64]) -> f64) -> f64 {
    let base = x[i];
    x[i] = base + FD_H;
    let plus = f(&x);
    x[i] = base - FD_H;
    let minus = f(&x);
    (plus - minus) / (2.0 * FD_H)
}

fn check_lambda_return(suite: &mut Suite) {
    let mut worst = 0.0f64;
    let n_instances = suite.instances;
    for _ in 0..n_instances {
        let num_states = suite.rng.random_range(2..6);
        let len = suite.rng.random_range(1..12);
        let traj = random_mrp_traj(&mut suite.rng, num_states, len, 1);
        let boot = random_values(&mut suite.rng, len + 1);
        let glog = random_logits(&mut suite.rng, num_states);
        let llog = random_logits(&mut suite.rng, num_states);
        let res = lambda_return(&traj, &boot, &view_from(&glog, &llog)).unwrap();

        for slot in 0..num_states {
            for t in 0..len {
                let fd = central_diff(glog.clone(), slot, &mut |g| {
                    lambda_return(&traj, &boot, &view_from(g, &llog)).unwrap().values[t]
                });
                worst = worst.max(rel_err(res.dgamma_at(slot, t), fd));
                let fd = central_diff(llog.clone(), slot, &mut |l| {
                    lambda_return(&traj, &boot, &view_from(&glog, l)).unwrap().values[t]
                });
                worst = worst.max(rel_err(res.dlambda_at(slot, t), fd));
            }
        }
    }
    suite.record(
        "lambda_return_grads",
        "discount and bootstrapping gradients of the lambda-return",
        n_instances,
        worst,
        1e-6,
    );
}

fn check_n_step_return(suite: &mut Suite) {
    let mut worst = 0.0f64;
    let n_instances = suite.instances;
    for _ in 0..n_instances {
        let num_states = suite.rng.random_range(2..6);
        let len = suite.rng.random_range(1..10);
        let n = suite.rng.random_range(1..=len);
        let traj = random_mrp_traj(&mut suite.rng, num_states, len, 1);
        let boot = random_values(&mut suite.rng, len + 1);
        let glog = random_logits(&mut suite.rng, num_states);
        let llog = random_logits(&mut suite.rng, num_states);
        let res = n_step_return(&traj, &boot, &view_from(&glog, &llog), n).unwrap();
        assert!(res.dlambda.is_empty());

        for slot in 0..num_states {
            for t in 0..len {
                let fd = central_diff(glog.clone(), slot, &mut |g| {
                    n_step_return(&traj, &boot, &view_from(g, &llog), n).unwrap().values[t]
                });
                worst = worst.max(rel_err(res.dgamma_at(slot, t), fd));
            }
        }
    }
    suite.record(
        "n_step_return_grads",
        "discount gradients of the truncated n-step return",
        n_instances,
        worst,
        1e-6,
    );
}

fn check_vtrace_return(suite: &mut Suite) {
    let mut worst = 0.0f64;
    let n_instances = suite.instances;
    for _ in 0..n_instances {
        let num_states = suite.rng.random_range(2..6);
        let len = suite.rng.random_range(1..10);
        let mut traj = random_mrp_traj(&mut suite.rng, num_states, len, 1);
        traj.actions = vec![0; len];
        traj.behavior_probs = (0..len).map(|_| suite.rng.random_range(0.2..1.0)).collect();
        let target: Vec<f64> = (0..len).map(|_| suite.rng.random_range(0.05..1.0)).collect();
        let boot = random_values(&mut suite.rng, len + 1);
        let glog = random_logits(&mut suite.rng, num_states);
        let llog = random_logits(&mut suite.rng, num_states);
        let res = vtrace_return(&traj, &boot, &view_from(&glog, &llog), &target).unwrap();

        for slot in 0..num_states {
            for t in 0..len {
                let fd = central_diff(glog.clone(), slot, &mut |g| {
                    vtrace_return(&traj, &boot, &view_from(g, &llog), &target).unwrap().values[t]
                });
                worst = worst.max(rel_err(res.dgamma_at(slot, t), fd));
            }
        }
    }
    suite.record(
        "vtrace_return_grads",
        "discount gradients of the off-policy corrected return",
        n_instances,
        worst,
        1e-6,
    );
}

struct UpdateInstance {
    traj: Trajectory<f64>,
    params: AgentParams<f64>,
    mp: MetaParams<f64>,
}

fn random_update_instance(rng: &mut ChaCha8Rng, with_actions: bool, conditioning: bool) -> UpdateInstance {
    let num_states = rng.random_range(2..5);
    let obs_dim = rng.random_range(2..5);
    let len = rng.random_range(1..8);
    let num_actions = if with_actions { rng.random_range(2..5) } else { 0 };
    let mut traj = random_mrp_traj(rng, num_states, len, obs_dim);
    if with_actions {
        traj.actions = (0..len).map(|_| rng.random_range(0..num_actions)).collect();
        traj.behavior_probs = (0..len).map(|_| rng.random_range(0.2..1.0)).collect();
    }
    let layout = ParamLayout::new(obs_dim, num_actions, conditioning, 2, 2 * num_states);
    let mut params = AgentParams::zeros(layout);
    for t in params.theta_mut() {
        *t = rng.random_range(-0.5..0.5);
    }
    let mp = MetaParams::from_logits(
        random_logits(rng, num_states),
        random_logits(rng, num_states),
        true,
        true,
        true,
    );
    UpdateInstance { traj, params, mp }
}

/// Bump one meta logit, leaving the rest in place.
fn bumped(mp: &MetaParams<f64>, gamma: bool, slot: usize, h: f64) -> MetaParams<f64> {
    let mut g: Vec<f64> = mp.gamma_logits().to_vec();
    let mut l: Vec<f64> = mp.lambda_logits().to_vec();
    if gamma {
        g[slot] += h;
    } else {
        l[slot] += h;
    }
    MetaParams::from_logits(g, l, true, true, mp.is_state_dependent())
}

fn check_td_inner_sensitivity(suite: &mut Suite) {
    let mut worst = 0.0f64;
    let n_instances = suite.instances;
    for i in 0..n_instances {
        let conditioning = i % 2 == 1;
        let inst = random_update_instance(&mut suite.rng, false, conditioning);
        let alpha = 0.1;
        let layout = inst.mp.layout();
        let cond = inst.mp.eta_view();
        let (_, df, _) =
            td_update_parts(&inst.traj, &inst.params, &inst.mp.eta_view_full(), &cond, &layout, alpha)
                .unwrap();

        for slot in 0..inst.mp.num_slots() {
            for (is_gamma, col) in [(true, layout.gamma_col(slot)), (false, layout.lambda_col(slot))] {
                let col = col.unwrap();
                let eval = |h: f64| -> Vec<f64> {
                    let mp = bumped(&inst.mp, is_gamma, slot, h);
                    // conditioning input stays at the base meta-parameters
                    td_update_parts(&inst.traj, &inst.params, &mp.eta_view_full(), &cond, &layout, alpha)
                        .unwrap()
                        .0
                };
                let plus = eval(FD_H);
                let minus = eval(-FD_H);
                for (row, (p, m)) in plus.iter().zip(&minus).enumerate() {
                    let fd = (p - m) / (2.0 * FD_H);
                    worst = worst.max(rel_err(df.get(row, col), fd));
                }
            }
        }
    }
    suite.record(
        "td_inner_update_sensitivity",
        "meta sensitivity of the temporal-difference inner update",
        n_instances,
        worst,
        1e-6,
    );
}

fn check_a2c_inner_sensitivity(suite: &mut Suite) {
    let mut worst = 0.0f64;
    let n_instances = suite.instances;
    for i in 0..n_instances {
        let conditioning = i % 2 == 1;
        let mut inst = random_update_instance(&mut suite.rng, true, conditioning);
        if i % 3 == 0 {
            // exercise the on-policy path: recorded probabilities match the policy
            let cond = inst.mp.eta_view();
            for t in 0..inst.traj.num_transitions() {
                let probs = inst.params.policy_probs(&inst.traj.observations[t], &cond).unwrap();
                inst.traj.behavior_probs[t] = probs[inst.traj.actions[t]];
            }
        }
        let (alpha, b, c) = (0.05, 0.5, 0.01);
        let layout = inst.mp.layout();
        let cond = inst.mp.eta_view();
        let (_, df, _) = a2c_update_parts(
            &inst.traj,
            &inst.params,
            &inst.mp.eta_view_full(),
            &cond,
            &layout,
            alpha,
            b,
            c,
        )
        .unwrap();

        for slot in 0..inst.mp.num_slots() {
            for (is_gamma, col) in [(true, layout.gamma_col(slot)), (false, layout.lambda_col(slot))] {
                let col = col.unwrap();
                let eval = |h: f64| -> Vec<f64> {
                    let mp = bumped(&inst.mp, is_gamma, slot, h);
                    a2c_update_parts(
                        &inst.traj,
                        &inst.params,
                        &mp.eta_view_full(),
                        &cond,
                        &layout,
                        alpha,
                        b,
                        c,
                    )
                    .unwrap()
                    .0
                };
                let plus = eval(FD_H);
                let minus = eval(-FD_H);
                for (row, (p, m)) in plus.iter().zip(&minus).enumerate() {
                    let fd = (p - m) / (2.0 * FD_H);
                    worst = worst.max(rel_err(df.get(row, col), fd));
                }
            }
        }
    }
    suite.record(
        "a2c_inner_update_sensitivity",
        "meta sensitivity of the actor-critic inner update",
        n_instances,
        worst,
        1e-6,
    );
}

/// Frozen-target validation squared error: targets are computed once at the
/// base parameters, matching the semi-gradient convention.
fn frozen_mse_value(
    trajs: &[Trajectory<f64>],
    targets: &[Vec<f64>],
    params: &AgentParams<f64>,
    cond: &EtaView<f64>,
) -> f64 {
    let mut total = 0.0;
    for (traj, target) in trajs.iter().zip(targets) {
        for t in 0..traj.num_transitions() {
            let v = params.value(&traj.observations[t], cond).unwrap();
            let e = target[t] - v;
            total += e * e;
        }
    }
    total / trajs.len() as f64
}

fn reference_targets(
    trajs: &[Trajectory<f64>],
    params: &AgentParams<f64>,
    vspec: &ValidationSpec<f64>,
    cond: &EtaView<f64>,
) -> Vec<Vec<f64>> {
    let view = EtaView::constant(vspec.gamma_prime, vspec.lambda_prime);
    trajs
        .iter()
        .map(|traj| {
            let boot: Vec<f64> = traj
                .observations
                .iter()
                .map(|o| params.value(o, cond).unwrap())
                .collect();
            lambda_return(traj, &boot, &view).unwrap().values
        })
        .collect()
}

fn check_mse_objective(suite: &mut Suite) {
    let mut worst = 0.0f64;
    let n_instances = suite.instances;
    for _ in 0..n_instances {
        let inst = random_update_instance(&mut suite.rng, false, false);
        let vspec = ValidationSpec::new(
            suite.rng.random_range(0.5..=1.0),
            suite.rng.random_range(0.5..=1.0),
            1,
        );
        let cond = inst.mp.eta_view();
        let trajs = vec![inst.traj.clone()];
        let grad = mse_meta_objective_grad(&trajs, &inst.params, &vspec, &cond).unwrap();
        let targets = reference_targets(&trajs, &inst.params, &vspec, &cond);

        for i in 0..inst.params.theta_dim() {
            let f = |h: f64| {
                let mut p = inst.params.clone();
                p.theta_mut()[i] += h;
                frozen_mse_value(&trajs, &targets, &p, &cond)
            };
            let fd = (f(FD_H) - f(-FD_H)) / (2.0 * FD_H);
            worst = worst.max(rel_err(grad[i], fd));
        }
    }
    suite.record(
        "mse_objective_grad",
        "validation squared-error gradient (targets frozen)",
        n_instances,
        worst,
        1e-6,
    );
}

/// Per-step validation returns computed the way the objectives compute them:
/// the reference-parameter return, off-policy corrected when the recorded
/// behavior probabilities do not match the current policy.
fn validation_returns(
    traj: &Trajectory<f64>,
    params: &AgentParams<f64>,
    vspec: &ValidationSpec<f64>,
    cond: &EtaView<f64>,
) -> Vec<f64> {
    let view = EtaView::constant(vspec.gamma_prime, vspec.lambda_prime);
    let boot: Vec<f64> = traj
        .observations
        .iter()
        .map(|o| params.value(o, cond).unwrap())
        .collect();
    if traj.actions.is_empty() {
        return lambda_return(traj, &boot, &view).unwrap().values;
    }
    let target_probs: Vec<f64> = (0..traj.num_transitions())
        .map(|t| params.policy_probs(&traj.observations[t], cond).unwrap()[traj.actions[t]])
        .collect();
    let on_policy = target_probs
        .iter()
        .zip(&traj.behavior_probs)
        .all(|(a, b)| a == b);
    if on_policy {
        lambda_return(traj, &boot, &view).unwrap().values
    } else {
        vtrace_return(traj, &boot, &view, &target_probs).unwrap().values
    }
}

fn check_pg_objective(suite: &mut Suite) {
    let mut worst = 0.0f64;
    let n_instances = suite.instances;
    for _ in 0..n_instances {
        let inst = random_update_instance(&mut suite.rng, true, false);
        let vspec = ValidationSpec::new(1.0, 1.0, 1);
        let cond = inst.mp.eta_view();
        let trajs = vec![inst.traj.clone()];
        let grad = pg_meta_objective_grad(&trajs, &inst.params, &vspec, &cond).unwrap();

        // freeze the advantage weights at the base parameters
        let traj = &trajs[0];
        let boot: Vec<f64> = traj
            .observations
            .iter()
            .map(|o| inst.params.value(o, &cond).unwrap())
            .collect();
        let values = validation_returns(traj, &inst.params, &vspec, &cond);
        let adv: Vec<f64> = (0..traj.num_transitions())
            .map(|t| values[t] - boot[t])
            .collect();

        for i in 0..inst.params.theta_dim() {
            let f = |h: f64| {
                let mut p = inst.params.clone();
                p.theta_mut()[i] += h;
                let mut total = 0.0;
                for t in 0..traj.num_transitions() {
                    let probs = p.policy_probs(&traj.observations[t], &cond).unwrap();
                    total -= adv[t] * probs[traj.actions[t]].ln();
                }
                total
            };
            let fd = (f(FD_H) - f(-FD_H)) / (2.0 * FD_H);
            worst = worst.max(rel_err(grad[i], fd));
        }
    }
    suite.record(
        "pg_objective_grad",
        "validation policy-gradient objective (advantages frozen)",
        n_instances,
        worst,
        1e-6,
    );
}

/// The full one-step chain with a fresh trace and no decay: the analytic
/// meta-gradient must match differencing the frozen-target validation
/// objective through the inner update, logit by logit.
fn check_one_step_meta(suite: &mut Suite, control: bool) {
    let mut worst = 0.0f64;
    let n_instances = (suite.instances / 2).max(10);
    for _ in 0..n_instances {
        let inst = random_update_instance(&mut suite.rng, control, false);
        let val = {
            let mut v = random_update_instance(&mut suite.rng, control, false);
            // validation shares the approximator shape, not the data
            while v.traj.observations[0].len() != inst.traj.observations[0].len()
                || v.mp.num_slots() != inst.mp.num_slots()
            {
                v = random_update_instance(&mut suite.rng, control, false);
            }
            v.traj
        };
        // actions must stay inside the shared action space
        let val = if control {
            let mut t = val;
            let n_actions = inst.params.layout().num_actions;
            for a in t.actions.iter_mut() {
                *a %= n_actions;
            }
            t
        } else {
            val
        };
        let vspec = ValidationSpec::new(1.0, 1.0, 1);
        let layout = inst.mp.layout();
        let cond = inst.mp.eta_view();
        let (alpha, b, c) = (0.1, 0.5, 0.01);

        let theta_of = |mp: &MetaParams<f64>| -> AgentParams<f64> {
            let (delta, _, _) = if control {
                a2c_update_parts(&inst.traj, &inst.params, &mp.eta_view_full(), &cond, &layout, alpha, b, c)
                    .unwrap()
            } else {
                td_update_parts(&inst.traj, &inst.params, &mp.eta_view_full(), &cond, &layout, alpha)
                    .unwrap()
            };
            let mut p = inst.params.clone();
            p.add_delta(&delta).unwrap();
            p
        };

        let new_params = theta_of(&inst.mp);
        let (_, df, _) = if control {
            a2c_update_parts(
                &inst.traj,
                &inst.params,
                &inst.mp.eta_view_full(),
                &cond,
                &layout,
                alpha,
                b,
                c,
            )
            .unwrap()
        } else {
            td_update_parts(&inst.traj, &inst.params, &inst.mp.eta_view_full(), &cond, &layout, alpha)
                .unwrap()
        };
        let trajs = vec![val.clone()];
        let dj = if control {
            pg_meta_objective_grad(&trajs, &new_params, &vspec, &cond).unwrap()
        } else {
            mse_meta_objective_grad(&trajs, &new_params, &vspec, &cond).unwrap()
        };
        // mu = 0, fresh trace: the meta-gradient is dJ' . df
        let meta_grad = df.transpose_mul(&dj).unwrap();

        // frozen pieces for the objective value; the target selection must
        // mirror the implementation (off-policy validation data takes the
        // corrected return)
        let targets = if control {
            vec![validation_returns(&val, &new_params, &vspec, &cond)]
        } else {
            reference_targets(&trajs, &new_params, &vspec, &cond)
        };
        let pg_adv: Vec<f64> = if control {
            let boot: Vec<f64> = val
                .observations
                .iter()
                .map(|o| new_params.value(o, &cond).unwrap())
                .collect();
            targets[0].iter().zip(&boot).map(|(g, v)| g - v).collect()
        } else {
            Vec::new()
        };
        let objective = |p: &AgentParams<f64>| -> f64 {
            if control {
                let mut total = 0.0;
                for t in 0..val.num_transitions() {
                    let probs = p.policy_probs(&val.observations[t], &cond).unwrap();
                    total -= pg_adv[t] * probs[val.actions[t]].ln();
                }
                total
            } else {
                frozen_mse_value(&trajs, &targets, p, &cond)
            }
        };

        for slot in 0..inst.mp.num_slots() {
            for (is_gamma, col) in [(true, layout.gamma_col(slot)), (false, layout.lambda_col(slot))] {
                let col = col.unwrap();
                let fd = (objective(&theta_of(&bumped(&inst.mp, is_gamma, slot, FD_H)))
                    - objective(&theta_of(&bumped(&inst.mp, is_gamma, slot, -FD_H))))
                    / (2.0 * FD_H);
                worst = worst.max(rel_err(meta_grad[col], fd));
            }
        }
    }
    let (name, subject) = if control {
        (
            "one_step_meta_gradient_a2c",
            "one-step meta-gradient through the actor-critic update",
        )
    } else {
        (
            "one_step_meta_gradient_td",
            "one-step meta-gradient through the temporal-difference update",
        )
    };
    suite.record(name, subject, n_instances, worst, 1e-4);
}

fn check_vtrace_reduction(suite: &mut Suite) {
    let mut worst = 0.0f64;
    let instances = 1000;
    for _ in 0..instances {
        let num_states = suite.rng.random_range(2..6);
        let len = suite.rng.random_range(1..12);
        let mut traj = random_mrp_traj(&mut suite.rng, num_states, len, 1);
        traj.terminal = true;
        traj.actions = vec![0; len];
        traj.behavior_probs = (0..len).map(|_| suite.rng.random_range(0.2..1.0)).collect();
        let target = traj.behavior_probs.clone(); // on-policy
        let boot = random_values(&mut suite.rng, len + 1);
        let glog = random_logits(&mut suite.rng, num_states);
        // lambda exactly 1 in both returns
        let view = EtaView::new(
            glog.iter().map(|&x| crate::scalar::sigmoid(x)).collect(),
            vec![1.0; num_states],
            vec![0.0; num_states],
            vec![0.0; num_states],
            true,
        );
        let vt = vtrace_return(&traj, &boot, &view, &target).unwrap();
        let lr = lambda_return(&traj, &boot, &view).unwrap();
        for t in 0..len {
            worst = worst.max((vt.values[t] - lr.values[t]).abs());
        }
    }
    suite.record(
        "vtrace_on_policy_reduction",
        "on-policy corrected return equals the lambda = 1 return",
        instances,
        worst,
        1e-12,
    );
}

/// Run the whole verification suite.
pub fn run_gradcheck(config: &ExperimentConfig) -> GradCheckReport {
    let start = Instant::now();
    let mut suite = Suite {
        rng: ChaCha8Rng::seed_from_u64(config.gradcheck_seed),
        instances: config.gradcheck_instances,
        tolerance_override: config.gradcheck_tolerance,
        checks: Vec::new(),
    };
    check_lambda_return(&mut suite);
    check_n_step_return(&mut suite);
    check_vtrace_return(&mut suite);
    check_td_inner_sensitivity(&mut suite);
    check_a2c_inner_sensitivity(&mut suite);
    check_mse_objective(&mut suite);
    check_pg_objective(&mut suite);
    check_one_step_meta(&mut suite, false);
    check_one_step_meta(&mut suite, true);
    check_vtrace_reduction(&mut suite);
    GradCheckReport {
        checks: suite.checks,
        elapsed: start.elapsed(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.set("gradcheck_instances", "8").unwrap();
        cfg
    }

    #[test]
    fn suite_passes_at_default_tolerances() {
        let report = run_gradcheck(&quick_config());
        for check in &report.checks {
            assert!(
                check.passed,
                "{} failed: max rel err {} vs tol {}",
                check.name, check.max_rel_err, check.tolerance
            );
        }
    }

    #[test]
    fn impossible_tolerance_fails_the_suite() {
        let mut cfg = quick_config();
        cfg.set("gradcheck_instances", "4").unwrap();
        cfg.set("gradcheck_tolerance", "1e-13").unwrap();
        let report = run_gradcheck(&cfg);
        assert!(!report.all_passed());
    }
}
