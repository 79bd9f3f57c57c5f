//! Inner update functions and validation objective gradients.
//!
//! Both inner updates follow the semi-gradient convention: the return target
//! is a constant with respect to the agent parameters inside the update, and
//! the per-step sensitivity to the meta-parameters pairs the analytic return
//! derivative with the parameter gradient of the function being regressed.
//! When the approximators are conditioned on the meta-parameters, the
//! conditioning input is likewise held fixed inside that sensitivity.

use crate::approx::AgentParams;
use crate::error::{CoreError, Result};
use crate::meta::{EtaJacobian, EtaLayout, MetaParams};
use crate::returns::{lambda_return, vtrace_return, EtaView, ReturnResult, Trajectory};
use crate::scalar::Scalar;

use super::{InnerUpdateResult, ValidationSpec};

fn bootstrap_values<S: Scalar>(
    traj: &Trajectory<S>,
    params: &AgentParams<S>,
    cond_eta: &EtaView<S>,
) -> Result<Vec<S>> {
    traj.observations
        .iter()
        .map(|obs| params.value(obs, cond_eta))
        .collect()
}

/// Accumulate `alpha * dg/dlogit * carrier` into the Jacobian columns for
/// every logit the return touched at this step.
fn accumulate_df<S: Scalar>(
    df: &mut EtaJacobian<S>,
    ret: &ReturnResult<S>,
    layout: &EtaLayout,
    step: usize,
    alpha: S,
    carrier: &[S],
) {
    for (&slot, per_step) in &ret.dgamma {
        if let Some(col) = layout.gamma_col(slot) {
            df.add_scaled_column(col, alpha * per_step[step], carrier);
        }
    }
    for (&slot, per_step) in &ret.dlambda {
        if let Some(col) = layout.lambda_col(slot) {
            df.add_scaled_column(col, alpha * per_step[step], carrier);
        }
    }
}

/// Temporal-difference inner update over a segment: for every step,
/// `delta += alpha * (g - v) * dv/dtheta`, with the sensitivity
/// `df/deta = alpha * dg/deta * dv/dtheta` accumulated alongside.
pub(crate) fn td_update_parts<S: Scalar>(
    traj: &Trajectory<S>,
    params: &AgentParams<S>,
    return_eta: &EtaView<S>,
    cond_eta: &EtaView<S>,
    layout: &EtaLayout,
    alpha: S,
) -> Result<(Vec<S>, EtaJacobian<S>, S)> {
    let values = bootstrap_values(traj, params, cond_eta)?;
    let ret = lambda_return(traj, &values, return_eta)?;
    let t_len = traj.num_transitions();
    let mut delta = vec![S::zero(); params.theta_dim()];
    let mut df = EtaJacobian::zeros(params.theta_dim(), layout.active_dim());
    let mut loss = S::zero();
    for t in 0..t_len {
        let grad = params.value_grad(&traj.observations[t], cond_eta)?;
        let err = ret.values[t] - values[t];
        loss += err * err;
        let scale = alpha * err;
        for (d, g) in delta.iter_mut().zip(&grad) {
            *d += scale * *g;
        }
        accumulate_df(&mut df, &ret, layout, t, alpha, &grad);
    }
    Ok((delta, df, loss / S::of(t_len as f64)))
}

fn check_update_finite<S: Scalar>(delta: &[S], df: &EtaJacobian<S>) -> Result<()> {
    if let Some(i) = delta.iter().position(|x| !x.is_finite()) {
        return Err(CoreError::NonFinite {
            what: "parameter step",
            index: i,
        });
    }
    if let Some(i) = df.as_slice().iter().position(|x| !x.is_finite()) {
        return Err(CoreError::NonFinite {
            what: "update sensitivity",
            index: i,
        });
    }
    Ok(())
}

/// Update the value function (and embedding, when conditioning) from one
/// trajectory. The policy block is untouched because the value gradient is
/// zero there.
pub fn td_lambda_inner_update<S: Scalar>(
    traj: &Trajectory<S>,
    params: &AgentParams<S>,
    mp: &MetaParams<S>,
    alpha: S,
) -> Result<InnerUpdateResult<S>> {
    assert!(alpha > S::zero(), "inner learning rate must be positive");
    let eta = mp.eta_view();
    let layout = mp.layout();
    let (delta, df, loss) = td_update_parts(traj, params, &eta, &eta, &layout, alpha)?;
    check_update_finite(&delta, &df)?;
    let mut new_params = params.clone();
    new_params.add_delta(&delta)?;
    Ok(InnerUpdateResult {
        new_params,
        delta_theta: delta,
        df_deta: df,
        inner_loss: loss,
    })
}

/// Per-step probabilities the current policy assigns to the taken actions.
fn target_probs<S: Scalar>(
    traj: &Trajectory<S>,
    params: &AgentParams<S>,
    cond_eta: &EtaView<S>,
) -> Result<Vec<S>> {
    (0..traj.num_transitions())
        .map(|t| {
            let probs = params.policy_probs(&traj.observations[t], cond_eta)?;
            Ok(probs[traj.actions[t]])
        })
        .collect()
}

/// The return target for a trajectory: the lambda-return when the data is
/// exactly on-policy (recomputed probabilities match the recorded ones bit
/// for bit), the clipped importance-weighted return otherwise.
fn select_return<S: Scalar>(
    traj: &Trajectory<S>,
    values: &[S],
    return_eta: &EtaView<S>,
    target: &[S],
) -> Result<ReturnResult<S>> {
    let on_policy = target
        .iter()
        .zip(&traj.behavior_probs)
        .all(|(t, b)| *t == *b);
    if on_policy {
        lambda_return(traj, values, return_eta)
    } else {
        vtrace_return(traj, values, return_eta, target)
    }
}

/// Actor-critic inner update over a segment:
///
/// `delta += alpha * [(g - v) * dlogpi/dtheta + b * (g - v) * dv/dtheta + c * dH/dtheta]`
///
/// with the meta sensitivity `df/deta = alpha * dg/deta * [dlogpi/dtheta + b * dv/dtheta]`;
/// the entropy term carries no dependence on the return.
pub(crate) fn a2c_update_parts<S: Scalar>(
    traj: &Trajectory<S>,
    params: &AgentParams<S>,
    return_eta: &EtaView<S>,
    cond_eta: &EtaView<S>,
    layout: &EtaLayout,
    alpha: S,
    value_coeff: S,
    entropy_coeff: S,
) -> Result<(Vec<S>, EtaJacobian<S>, S)> {
    let t_len = traj.num_transitions();
    if traj.actions.len() != t_len {
        return Err(CoreError::DimMismatch {
            context: "trajectory actions",
            expected: t_len,
            got: traj.actions.len(),
        });
    }
    let values = bootstrap_values(traj, params, cond_eta)?;
    let target = target_probs(traj, params, cond_eta)?;
    let ret = select_return(traj, &values, return_eta, &target)?;

    let mut delta = vec![S::zero(); params.theta_dim()];
    let mut df = EtaJacobian::zeros(params.theta_dim(), layout.active_dim());
    let mut loss = S::zero();
    let half = S::of(0.5);
    let mut carrier = vec![S::zero(); params.theta_dim()];
    for t in 0..t_len {
        let obs = &traj.observations[t];
        let adv = ret.values[t] - values[t];
        let lpg = params.log_policy_grad(obs, traj.actions[t], cond_eta)?;
        let vg = params.value_grad(obs, cond_eta)?;
        let (entropy, hg) = params.entropy_and_grad(obs, cond_eta)?;

        for i in 0..delta.len() {
            delta[i] += alpha * (adv * lpg[i] + value_coeff * adv * vg[i] + entropy_coeff * hg[i]);
            carrier[i] = lpg[i] + value_coeff * vg[i];
        }
        accumulate_df(&mut df, &ret, layout, t, alpha, &carrier);
        loss += -adv * target[t].ln() + half * value_coeff * adv * adv - entropy_coeff * entropy;
    }
    Ok((delta, df, loss / S::of(t_len as f64)))
}

/// Single-trajectory wrapper around the batched update.
pub fn a2c_inner_update<S: Scalar>(
    traj: &Trajectory<S>,
    params: &AgentParams<S>,
    mp: &MetaParams<S>,
    alpha: S,
    value_coeff: S,
    entropy_coeff: S,
) -> Result<InnerUpdateResult<S>> {
    a2c_inner_update_batch(
        std::slice::from_ref(traj),
        params,
        mp,
        alpha,
        value_coeff,
        entropy_coeff,
    )
}

/// Batched actor-critic update: averages the per-trajectory steps (and their
/// meta sensitivities) at fixed parameters, then applies them once.
pub fn a2c_inner_update_batch<S: Scalar>(
    trajs: &[Trajectory<S>],
    params: &AgentParams<S>,
    mp: &MetaParams<S>,
    alpha: S,
    value_coeff: S,
    entropy_coeff: S,
) -> Result<InnerUpdateResult<S>> {
    assert!(alpha > S::zero(), "inner learning rate must be positive");
    assert!(!trajs.is_empty(), "need at least one trajectory");
    let eta = mp.eta_view();
    let layout = mp.layout();
    let mut delta = vec![S::zero(); params.theta_dim()];
    let mut df = EtaJacobian::zeros(params.theta_dim(), layout.active_dim());
    let mut loss = S::zero();
    for traj in trajs {
        let (d, j, l) =
            a2c_update_parts(traj, params, &eta, &eta, &layout, alpha, value_coeff, entropy_coeff)?;
        for (acc, x) in delta.iter_mut().zip(&d) {
            *acc += *x;
        }
        df.add_assign(&j)?;
        loss += l;
    }
    let inv = S::one() / S::of(trajs.len() as f64);
    for d in delta.iter_mut() {
        *d *= inv;
    }
    df.scale(inv);
    check_update_finite(&delta, &df)?;
    let mut new_params = params.clone();
    new_params.add_delta(&delta)?;
    Ok(InnerUpdateResult {
        new_params,
        delta_theta: delta,
        df_deta: df,
        inner_loss: loss * inv,
    })
}

/// Returns under the reference specification, choosing the off-policy
/// correction exactly as the inner update does.
fn reference_returns<S: Scalar>(
    traj: &Trajectory<S>,
    params: &AgentParams<S>,
    vspec: &ValidationSpec<S>,
    cond_eta: &EtaView<S>,
    values: &[S],
) -> Result<ReturnResult<S>> {
    let return_eta = EtaView::constant(vspec.gamma_prime, vspec.lambda_prime);
    if traj.actions.is_empty() {
        lambda_return(traj, values, &return_eta)
    } else {
        let target = target_probs(traj, params, cond_eta)?;
        select_return(traj, values, &return_eta, &target)
    }
}

/// Semi-gradient of the validation squared error with respect to the updated
/// parameters: `-2 * (g' - v) * dv/dtheta` summed over the steps of each
/// trajectory, averaged over trajectories.
pub fn mse_meta_objective_grad<S: Scalar>(
    trajs: &[Trajectory<S>],
    new_params: &AgentParams<S>,
    vspec: &ValidationSpec<S>,
    cond_eta: &EtaView<S>,
) -> Result<Vec<S>> {
    assert!(!trajs.is_empty(), "validation needs at least one trajectory");
    let mut grad = vec![S::zero(); new_params.theta_dim()];
    let two = S::of(2.0);
    for traj in trajs {
        let values = bootstrap_values(traj, new_params, cond_eta)?;
        let ret = reference_returns(traj, new_params, vspec, cond_eta, &values)?;
        for t in 0..traj.num_transitions() {
            let err = ret.values[t] - values[t];
            let vg = new_params.value_grad(&traj.observations[t], cond_eta)?;
            for (g, x) in grad.iter_mut().zip(&vg) {
                *g += -two * err * *x;
            }
        }
    }
    let inv = S::one() / S::of(trajs.len() as f64);
    for g in grad.iter_mut() {
        *g *= inv;
    }
    Ok(grad)
}

/// Gradient of the control validation objective with respect to the updated
/// parameters: `-(g' - v) * dlogpi/dtheta` summed over steps and averaged
/// over the meta batch. The advantage weight is a constant here, so
/// descending this gradient increases the validation return.
pub fn pg_meta_objective_grad<S: Scalar>(
    trajs: &[Trajectory<S>],
    new_params: &AgentParams<S>,
    vspec: &ValidationSpec<S>,
    cond_eta: &EtaView<S>,
) -> Result<Vec<S>> {
    assert!(!trajs.is_empty(), "validation needs at least one trajectory");
    let mut grad = vec![S::zero(); new_params.theta_dim()];
    for traj in trajs {
        let t_len = traj.num_transitions();
        if traj.actions.len() != t_len {
            return Err(CoreError::DimMismatch {
                context: "validation trajectory actions",
                expected: t_len,
                got: traj.actions.len(),
            });
        }
        let values = bootstrap_values(traj, new_params, cond_eta)?;
        let ret = reference_returns(traj, new_params, vspec, cond_eta, &values)?;
        for t in 0..t_len {
            let adv = ret.values[t] - values[t];
            let lpg = new_params.log_policy_grad(&traj.observations[t], traj.actions[t], cond_eta)?;
            for (g, x) in grad.iter_mut().zip(&lpg) {
                *g += -adv * *x;
            }
        }
    }
    let inv = S::one() / S::of(trajs.len() as f64);
    for g in grad.iter_mut() {
        *g *= inv;
    }
    Ok(grad)
}

/// Debug-mode verification of an inner update's meta sensitivity against
/// central finite differences of the update itself, with the conditioning
/// input held at the base meta-parameters. Intended for double-precision
/// runs; wired to every 1000th iteration behind the config debug flag.
pub fn fd_check_inner_update<S: Scalar>(
    trajs: &[Trajectory<S>],
    params: &AgentParams<S>,
    mp: &MetaParams<S>,
    alpha: S,
    coeffs: Option<(S, S)>,
    df: &EtaJacobian<S>,
) -> Result<()> {
    let h = S::of(1e-6);
    let tol = S::of(1e-6);
    let layout = mp.layout();
    let cond = mp.eta_view();
    let batch_delta = |view: &crate::returns::EtaView<S>| -> Result<Vec<S>> {
        let mut acc = vec![S::zero(); params.theta_dim()];
        for traj in trajs {
            let (d, _, _) = match coeffs {
                Some((b, c)) => a2c_update_parts(traj, params, view, &cond, &layout, alpha, b, c)?,
                None => td_update_parts(traj, params, view, &cond, &layout, alpha)?,
            };
            for (a, x) in acc.iter_mut().zip(&d) {
                *a += *x;
            }
        }
        let inv = S::one() / S::of(trajs.len() as f64);
        for a in acc.iter_mut() {
            *a *= inv;
        }
        Ok(acc)
    };
    for slot in 0..layout.num_slots {
        for (gamma, col) in [(true, layout.gamma_col(slot)), (false, layout.lambda_col(slot))] {
            let Some(col) = col else { continue };
            let bump = |sign: S| {
                if gamma {
                    mp.bumped_gamma_logit(slot, sign * h)
                } else {
                    mp.bumped_lambda_logit(slot, sign * h)
                }
            };
            let plus = batch_delta(&bump(S::one()).eta_view())?;
            let minus = batch_delta(&bump(-S::one()).eta_view())?;
            for (row, (p, m)) in plus.iter().zip(&minus).enumerate() {
                let fd = (*p - *m) / (S::of(2.0) * h);
                let analytic = df.get(row, col);
                let denom = analytic.abs().max(fd.abs()).max(S::one());
                let rel = (analytic - fd).abs() / denom;
                if rel > tol {
                    return Err(CoreError::FdCheckFailed {
                        what: "inner-update meta sensitivity",
                        rel_err: rel.to_f64_lossy(),
                    });
                }
            }
        }
    }
    Ok(())
}
