//! Differentiable return functions over trajectories.
//!
//! Three returns are provided: the truncated n-step return, the lambda-return
//! computed by backward recursion, and the clipped importance-weighted return
//! used to correct off-policy data. Each also reports the analytic partial
//! derivatives of every per-step return value with respect to the discount
//! and bootstrapping logits it touched, chained through the logistic
//! parameterization. Bootstrap values are treated as constants: no gradient
//! flows through the value estimates, either toward the agent parameters or
//! toward the meta-parameters.

use std::collections::BTreeMap;

use crate::error::{CoreError, Result};
use crate::scalar::Scalar;

/// An n-step segment or full episode of experience.
///
/// With `T` transitions there are `T + 1` states; `rewards[k]` is the reward
/// observed on the transition out of the k-th state of the segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S> {
    /// Observation vector per visited state (length T + 1).
    pub observations: Vec<Vec<S>>,
    /// Ground-truth environment state index per visited state (length T + 1).
    /// Used for state-dependent meta-parameter lookup; aliased states share
    /// an observation but keep distinct ids.
    pub state_ids: Vec<usize>,
    /// Action index per transition (length T; empty for reward processes).
    pub actions: Vec<usize>,
    /// Reward per transition (length T).
    pub rewards: Vec<S>,
    /// Probability the behavior policy assigned to each taken action
    /// (length T; all one for on-policy or actionless data).
    pub behavior_probs: Vec<S>,
    /// Whether the final state of the segment is terminal.
    pub terminal: bool,
}

impl<S: Scalar> Trajectory<S> {
    pub fn num_transitions(&self) -> usize {
        self.rewards.len()
    }

    /// Undiscounted reward sum, used for return metrics.
    pub fn reward_sum(&self) -> S {
        self.rewards.iter().copied().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.rewards.len();
        if t == 0 {
            return Err(CoreError::EmptyTrajectory);
        }
        if self.state_ids.len() != t + 1 {
            return Err(CoreError::DimMismatch {
                context: "trajectory state_ids",
                expected: t + 1,
                got: self.state_ids.len(),
            });
        }
        if self.observations.len() != t + 1 {
            return Err(CoreError::DimMismatch {
                context: "trajectory observations",
                expected: t + 1,
                got: self.observations.len(),
            });
        }
        if self.behavior_probs.len() != t {
            return Err(CoreError::DimMismatch {
                context: "trajectory behavior_probs",
                expected: t,
                got: self.behavior_probs.len(),
            });
        }
        if !self.actions.is_empty() && self.actions.len() != t {
            return Err(CoreError::DimMismatch {
                context: "trajectory actions",
                expected: t,
                got: self.actions.len(),
            });
        }
        for (i, p) in self.behavior_probs.iter().enumerate() {
            if !(*p > S::zero() && *p <= S::one()) {
                return Err(CoreError::BadBehaviorProb {
                    index: i,
                    value: p.to_f64_lossy(),
                });
            }
        }
        Ok(())
    }
}

/// Read-only view of the meta-parameters as the return functions consume
/// them: per-state sigmoid values together with the sigmoid derivatives that
/// chain gradients back to logit space.
///
/// In scalar mode one entry is broadcast to every state; in state-dependent
/// mode entry `i` belongs to environment state id `i`.
#[derive(Debug, Clone)]
pub struct EtaView<S> {
    gamma: Vec<S>,
    lambda: Vec<S>,
    dgamma_dlogit: Vec<S>,
    dlambda_dlogit: Vec<S>,
    state_dependent: bool,
}

impl<S: Scalar> EtaView<S> {
    pub fn new(
        gamma: Vec<S>,
        lambda: Vec<S>,
        dgamma_dlogit: Vec<S>,
        dlambda_dlogit: Vec<S>,
        state_dependent: bool,
    ) -> Self {
        assert_eq!(gamma.len(), dgamma_dlogit.len());
        assert_eq!(lambda.len(), dlambda_dlogit.len());
        assert_eq!(gamma.len(), lambda.len());
        assert!(!state_dependent || !gamma.is_empty());
        EtaView {
            gamma,
            lambda,
            dgamma_dlogit,
            dlambda_dlogit,
            state_dependent,
        }
    }

    /// A state-independent view holding fixed values, with zero logit
    /// sensitivity. Used for reference return specifications.
    pub fn constant(gamma: S, lambda: S) -> Self {
        EtaView {
            gamma: vec![gamma],
            lambda: vec![lambda],
            dgamma_dlogit: vec![S::zero()],
            dlambda_dlogit: vec![S::zero()],
            state_dependent: false,
        }
    }

    pub fn state_dependent(&self) -> bool {
        self.state_dependent
    }

    /// Number of logit slots per meta-parameter.
    pub fn num_slots(&self) -> usize {
        self.gamma.len()
    }

    /// Logit slot used for state `state_id` (0 in scalar mode).
    pub fn slot_of(&self, state_id: usize) -> usize {
        if self.state_dependent {
            assert!(
                state_id < self.gamma.len(),
                "state id {state_id} outside meta-parameter table of size {}",
                self.gamma.len()
            );
            state_id
        } else {
            0
        }
    }

    pub fn gamma_at(&self, state_id: usize) -> S {
        self.gamma[self.slot_of(state_id)]
    }

    pub fn lambda_at(&self, state_id: usize) -> S {
        self.lambda[self.slot_of(state_id)]
    }

    pub fn dgamma_dlogit_at(&self, state_id: usize) -> S {
        self.dgamma_dlogit[self.slot_of(state_id)]
    }

    pub fn dlambda_dlogit_at(&self, state_id: usize) -> S {
        self.dlambda_dlogit[self.slot_of(state_id)]
    }

    /// The sigmoid values as a flat vector `[gamma..., lambda...]`, the form
    /// fed to conditioned value and policy functions.
    pub fn conditioning_input(&self) -> Vec<S> {
        let mut v = Vec::with_capacity(self.gamma.len() + self.lambda.len());
        v.extend_from_slice(&self.gamma);
        v.extend_from_slice(&self.lambda);
        v
    }

    /// A constant view broadcast to the same slot shape as `self`.
    pub fn constant_like(&self, gamma: S, lambda: S) -> Self {
        let n = self.gamma.len();
        EtaView {
            gamma: vec![gamma; n],
            lambda: vec![lambda; n],
            dgamma_dlogit: vec![S::zero(); n],
            dlambda_dlogit: vec![S::zero(); n],
            state_dependent: self.state_dependent,
        }
    }
}

/// Per-step return values plus their partial derivatives with respect to each
/// meta-parameter logit that appears in the trajectory. Gradient maps are
/// sparse, keyed by logit slot; each entry holds the derivative of every
/// per-step value with respect to that slot.
#[derive(Debug, Clone)]
pub struct ReturnResult<S> {
    pub values: Vec<S>,
    pub dgamma: BTreeMap<usize, Vec<S>>,
    pub dlambda: BTreeMap<usize, Vec<S>>,
}

impl<S: Scalar> ReturnResult<S> {
    fn with_len(t: usize) -> Self {
        ReturnResult {
            values: vec![S::zero(); t],
            dgamma: BTreeMap::new(),
            dlambda: BTreeMap::new(),
        }
    }

    fn add_dgamma(&mut self, slot: usize, step: usize, v: S) {
        if v != S::zero() {
            let t = self.values.len();
            self.dgamma.entry(slot).or_insert_with(|| vec![S::zero(); t])[step] += v;
        }
    }

    fn add_dlambda(&mut self, slot: usize, step: usize, v: S) {
        if v != S::zero() {
            let t = self.values.len();
            self.dlambda.entry(slot).or_insert_with(|| vec![S::zero(); t])[step] += v;
        }
    }

    /// Derivative of `values[step]` with respect to the given gamma logit
    /// slot (zero when absent).
    pub fn dgamma_at(&self, slot: usize, step: usize) -> S {
        self.dgamma.get(&slot).map_or(S::zero(), |v| v[step])
    }

    pub fn dlambda_at(&self, slot: usize, step: usize) -> S {
        self.dlambda.get(&slot).map_or(S::zero(), |v| v[step])
    }

    fn check_finite(&self) -> Result<()> {
        for (i, v) in self.values.iter().enumerate() {
            if !v.is_finite() {
                return Err(CoreError::NonFinite {
                    what: "return value",
                    index: i,
                });
            }
        }
        Ok(())
    }
}

fn check_bootstrap<S: Scalar>(traj: &Trajectory<S>, bootstrap_values: &[S]) -> Result<()> {
    let want = traj.num_transitions() + 1;
    if bootstrap_values.len() != want {
        return Err(CoreError::DimMismatch {
            context: "bootstrap values",
            expected: want,
            got: bootstrap_values.len(),
        });
    }
    for (i, v) in bootstrap_values.iter().enumerate() {
        if !v.is_finite() {
            return Err(CoreError::NonFinite {
                what: "bootstrap value",
                index: i,
            });
        }
    }
    Ok(())
}

/// Bootstrap values with the terminal convention applied: a terminal final
/// state contributes value zero no matter what the approximator says.
fn effective_values<S: Scalar>(traj: &Trajectory<S>, bootstrap_values: &[S]) -> Vec<S> {
    let mut v = bootstrap_values.to_vec();
    if traj.terminal {
        *v.last_mut().expect("validated length") = S::zero();
    }
    v
}

/// Truncated n-step return with state-dependent discounting.
///
/// For each step t the return accumulates up to `n` rewards, discounting the
/// i-th by the running product of the gammas of the states entered before it,
/// and then bootstraps from the value of the state n steps ahead (or the
/// segment end, whichever comes first). Only the discount is differentiated;
/// the horizon n is a fixed integer, so `dlambda` is always empty.
pub fn n_step_return<S: Scalar>(
    traj: &Trajectory<S>,
    bootstrap_values: &[S],
    eta: &EtaView<S>,
    n: usize,
) -> Result<ReturnResult<S>> {
    traj.validate()?;
    check_bootstrap(traj, bootstrap_values)?;
    let t_len = traj.num_transitions();
    if n == 0 || n > t_len {
        return Err(CoreError::SegmentTooShort {
            needed: n.max(1),
            available: t_len,
        });
    }
    let values = effective_values(traj, bootstrap_values);
    let mut out = ReturnResult::with_len(t_len);

    // gammas[k] = discount of the state entered by transition k (S_{k+1}).
    let gammas: Vec<S> = (0..t_len)
        .map(|k| eta.gamma_at(traj.state_ids[k + 1]))
        .collect();

    for t in 0..t_len {
        let m = n.min(t_len - t);
        // Position j in 1..=m discounts by prod_{i=1..j-1} gammas[t+i-1];
        // the bootstrap term uses the full product over 1..=m.
        let mut value = S::zero();
        let mut prefix = S::one();
        for i in 1..=m {
            value += prefix * traj.rewards[t + i - 1];
            prefix *= gammas[t + i - 1];
        }
        value += prefix * values[t + m];
        out.values[t] = value;

        // d value / d gammas[t+j-1] for each position j: differentiate every
        // product containing that factor. Products are recomputed with the
        // factor excluded so gamma = 0 stays differentiable.
        for j in 1..=m {
            let mut deriv = S::zero();
            for i in (j + 1)..=m {
                // reward term i carries prod over positions 1..i-1
                let excl = product_excluding(&gammas[t..t + i - 1], j - 1);
                deriv += excl * traj.rewards[t + i - 1];
            }
            let excl = product_excluding(&gammas[t..t + m], j - 1);
            deriv += excl * values[t + m];
            let state = traj.state_ids[t + j];
            let chained = deriv * eta.dgamma_dlogit_at(state);
            out.add_dgamma(eta.slot_of(state), t, chained);
        }
    }
    out.check_finite()?;
    Ok(out)
}

fn product_excluding<S: Scalar>(factors: &[S], skip: usize) -> S {
    let mut p = S::one();
    for (i, f) in factors.iter().enumerate() {
        if i != skip {
            p *= *f;
        }
    }
    p
}

/// Lambda-return by backward recursion:
///
/// `g[t] = R[t+1] + gamma[t+1] * ((1 - lambda[t+1]) * v[t+1] + lambda[t+1] * g[t+1])`
///
/// with base case `g[T] = v[T]` (zero when the trajectory is terminal). The
/// partial derivatives follow the same recursion: each step contributes its
/// direct terms and scales everything downstream by `gamma[t+1] * lambda[t+1]`.
pub fn lambda_return<S: Scalar>(
    traj: &Trajectory<S>,
    bootstrap_values: &[S],
    eta: &EtaView<S>,
) -> Result<ReturnResult<S>> {
    traj.validate()?;
    check_bootstrap(traj, bootstrap_values)?;
    let t_len = traj.num_transitions();
    let values = effective_values(traj, bootstrap_values);
    let mut out = ReturnResult::with_len(t_len);

    let mut g_next = values[t_len];
    // Partials of g[t+1] with respect to each logit slot, carried backward.
    let mut dg_gamma: BTreeMap<usize, S> = BTreeMap::new();
    let mut dg_lambda: BTreeMap<usize, S> = BTreeMap::new();

    for t in (0..t_len).rev() {
        let entered = traj.state_ids[t + 1];
        let gamma = eta.gamma_at(entered);
        let lambda = eta.lambda_at(entered);
        let v_next = values[t + 1];

        let g = traj.rewards[t] + gamma * ((S::one() - lambda) * v_next + lambda * g_next);
        if !g.is_finite() {
            return Err(CoreError::NonFinite {
                what: "lambda-return",
                index: t,
            });
        }

        let scale = gamma * lambda;
        for d in dg_gamma.values_mut() {
            *d *= scale;
        }
        for d in dg_lambda.values_mut() {
            *d *= scale;
        }
        let slot = eta.slot_of(entered);
        let direct_gamma =
            ((S::one() - lambda) * v_next + lambda * g_next) * eta.dgamma_dlogit_at(entered);
        let direct_lambda = gamma * (g_next - v_next) * eta.dlambda_dlogit_at(entered);
        if direct_gamma != S::zero() {
            *dg_gamma.entry(slot).or_insert(S::zero()) += direct_gamma;
        }
        if direct_lambda != S::zero() {
            *dg_lambda.entry(slot).or_insert(S::zero()) += direct_lambda;
        }

        out.values[t] = g;
        for (&s, &d) in &dg_gamma {
            out.add_dgamma(s, t, d);
        }
        for (&s, &d) in &dg_lambda {
            out.add_dlambda(s, t, d);
        }
        g_next = g;
    }
    out.check_finite()?;
    Ok(out)
}

/// Clipped importance-weighted return for off-policy correction, computed by
/// direct expansion of the correction sum:
///
/// `G[t] = v[t] + sum_k c[t+k] * (prod_{j=1..k} gamma[t+j] * c[t+j]) * delta[t+k]`
///
/// with `c = min(1, target_prob / behavior_prob)` and the one-step temporal-
/// difference errors `delta[t] = R[t+1] + gamma[t+1] * v[t+1] - v[t]`,
/// truncated at the end of the trajectory.
///
/// Note the leading `c[t+k]` multiplies a product that already includes the
/// clipped ratios up to index `t+k`, so each interior ratio enters twice;
/// conventional formulations weight the outside factor by an unclipped (or
/// separately clipped) ratio instead. The sum is implemented exactly as
/// written here. On-policy it telescopes to the lambda = 1 return either way.
///
/// The discount is differentiated through both the products and the
/// temporal-difference errors; there is no bootstrapping parameter in this
/// return, so `dlambda` is empty. The clipping is not differentiated.
pub fn vtrace_return<S: Scalar>(
    traj: &Trajectory<S>,
    bootstrap_values: &[S],
    eta: &EtaView<S>,
    target_probs: &[S],
) -> Result<ReturnResult<S>> {
    traj.validate()?;
    check_bootstrap(traj, bootstrap_values)?;
    let t_len = traj.num_transitions();
    if target_probs.len() != t_len {
        return Err(CoreError::DimMismatch {
            context: "target probabilities",
            expected: t_len,
            got: target_probs.len(),
        });
    }
    let values = effective_values(traj, bootstrap_values);

    let mut clipped = Vec::with_capacity(t_len);
    for k in 0..t_len {
        let rho = target_probs[k] / traj.behavior_probs[k];
        if !rho.is_finite() {
            return Err(CoreError::NonFinite {
                what: "importance ratio",
                index: k,
            });
        }
        clipped.push(S::one().min(rho));
    }
    // gammas[k] and deltas[k] describe transition k (into S_{k+1}).
    let gammas: Vec<S> = (0..t_len)
        .map(|k| eta.gamma_at(traj.state_ids[k + 1]))
        .collect();
    let deltas: Vec<S> = (0..t_len)
        .map(|k| traj.rewards[k] + gammas[k] * values[k + 1] - values[k])
        .collect();

    let mut out = ReturnResult::with_len(t_len);

    for t in 0..t_len {
        let horizon = t_len - t;
        let mut total = values[t];
        let mut prod = S::one();
        // dprod[i] / dtotal[i] = partial w.r.t. gammas[t + i] (sigmoid space).
        let mut dprod: Vec<S> = vec![S::zero(); horizon];
        let mut dtotal: Vec<S> = vec![S::zero(); horizon];

        for k in 0..horizon {
            if k > 0 {
                // the k-th product factor pairs the discount of S_{t+k} with
                // the clipped ratio of the action taken there
                let f = gammas[t + k - 1] * clipped[t + k];
                for d in dprod.iter_mut().take(k - 1) {
                    *d *= f;
                }
                dprod[k - 1] = prod * clipped[t + k];
                prod *= f;
            }
            let weight = clipped[t + k];
            total += weight * prod * deltas[t + k];
            for i in 0..k {
                dtotal[i] += weight * dprod[i] * deltas[t + k];
            }
            // delta[t+k] depends on gammas[t+k] through its bootstrap term.
            dtotal[k] += weight * prod * values[t + k + 1];
        }

        out.values[t] = total;
        for (i, d) in dtotal.iter().enumerate() {
            if *d != S::zero() {
                let state = traj.state_ids[t + i + 1];
                out.add_dgamma(eta.slot_of(state), t, *d * eta.dgamma_dlogit_at(state));
            }
        }
    }
    out.check_finite()?;
    Ok(out)
}
