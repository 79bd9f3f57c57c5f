//! Meta-parameter state: the discount and bootstrapping logits, the decayed
//! trace approximating the sensitivity of the agent parameters to those
//! logits, and the meta-update rule that moves the logits along the
//! cross-validated objective gradient.

use crate::error::{CoreError, Result};
use crate::returns::EtaView;
use crate::scalar::{sigmoid, sigmoid_derivative, Scalar};

/// Logits are clamped to this range so the sigmoid stays inside
/// (1e-9, 1 - 1e-9) and its derivative never underflows to a hard zero.
pub const LOGIT_CLAMP: f64 = 20.0;

/// Logit of `p`, clamped into the legal range; accepts the closed interval
/// [0, 1] so grid values like 1.0 map to the saturated logit.
pub fn clamped_logit<S: Scalar>(p: S) -> S {
    let clamp = S::of(LOGIT_CLAMP);
    if p <= S::zero() {
        return -clamp;
    }
    if p >= S::one() {
        return clamp;
    }
    crate::scalar::logit(p).max(-clamp).min(clamp)
}

/// Column layout of the active meta-parameter components: adapted gamma
/// logits first, then adapted lambda logits. Frozen components own no column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EtaLayout {
    pub num_slots: usize,
    pub adapt_gamma: bool,
    pub adapt_lambda: bool,
}

impl EtaLayout {
    pub fn active_dim(&self) -> usize {
        let mut d = 0;
        if self.adapt_gamma {
            d += self.num_slots;
        }
        if self.adapt_lambda {
            d += self.num_slots;
        }
        d
    }

    /// Column of the gamma logit in the given slot, if gamma is adapted.
    pub fn gamma_col(&self, slot: usize) -> Option<usize> {
        debug_assert!(slot < self.num_slots);
        self.adapt_gamma.then_some(slot)
    }

    /// Column of the lambda logit in the given slot, if lambda is adapted.
    pub fn lambda_col(&self, slot: usize) -> Option<usize> {
        debug_assert!(slot < self.num_slots);
        self.adapt_lambda
            .then_some(if self.adapt_gamma { self.num_slots } else { 0 } + slot)
    }
}

/// The meta-parameters: one gamma and one lambda logit per slot (a single
/// slot in scalar mode, one per environment state otherwise), plus flags for
/// which of the two families is adapted. Non-adapted logits stay frozen at
/// their initial values no matter how many meta-steps run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaParams<S> {
    gamma_logits: Vec<S>,
    lambda_logits: Vec<S>,
    adapt_gamma: bool,
    adapt_lambda: bool,
    state_dependent: bool,
}

impl<S: Scalar> MetaParams<S> {
    pub fn scalar(gamma_logit: S, lambda_logit: S, adapt_gamma: bool, adapt_lambda: bool) -> Self {
        Self::build(vec![gamma_logit], vec![lambda_logit], adapt_gamma, adapt_lambda, false)
    }

    pub fn state_dependent(
        num_states: usize,
        gamma_logit: S,
        lambda_logit: S,
        adapt_gamma: bool,
        adapt_lambda: bool,
    ) -> Self {
        assert!(num_states > 0, "state-dependent meta-parameters need states");
        Self::build(
            vec![gamma_logit; num_states],
            vec![lambda_logit; num_states],
            adapt_gamma,
            adapt_lambda,
            true,
        )
    }

    /// Construct from explicit per-slot logits (clamped into range).
    pub fn from_logits(
        gamma_logits: Vec<S>,
        lambda_logits: Vec<S>,
        adapt_gamma: bool,
        adapt_lambda: bool,
        state_dependent: bool,
    ) -> Self {
        assert_eq!(gamma_logits.len(), lambda_logits.len());
        assert!(!gamma_logits.is_empty());
        Self::build(gamma_logits, lambda_logits, adapt_gamma, adapt_lambda, state_dependent)
    }

    fn build(
        gamma_logits: Vec<S>,
        lambda_logits: Vec<S>,
        adapt_gamma: bool,
        adapt_lambda: bool,
        state_dependent: bool,
    ) -> Self {
        let clamp = S::of(LOGIT_CLAMP);
        let squash = |v: Vec<S>| -> Vec<S> {
            v.into_iter()
                .map(|x| {
                    assert!(x.is_finite(), "meta-parameter logit must be finite");
                    x.max(-clamp).min(clamp)
                })
                .collect()
        };
        MetaParams {
            gamma_logits: squash(gamma_logits),
            lambda_logits: squash(lambda_logits),
            adapt_gamma,
            adapt_lambda,
            state_dependent,
        }
    }

    pub fn layout(&self) -> EtaLayout {
        EtaLayout {
            num_slots: self.gamma_logits.len(),
            adapt_gamma: self.adapt_gamma,
            adapt_lambda: self.adapt_lambda,
        }
    }

    pub fn num_slots(&self) -> usize {
        self.gamma_logits.len()
    }

    pub fn is_state_dependent(&self) -> bool {
        self.state_dependent
    }

    pub fn adapts_gamma(&self) -> bool {
        self.adapt_gamma
    }

    pub fn adapts_lambda(&self) -> bool {
        self.adapt_lambda
    }

    pub fn gamma_logits(&self) -> &[S] {
        &self.gamma_logits
    }

    pub fn lambda_logits(&self) -> &[S] {
        &self.lambda_logits
    }

    /// Sigmoid values and chain factors for the return functions. The view
    /// reports zero sensitivity for frozen families so no gradient is ever
    /// accumulated toward them.
    pub fn eta_view(&self) -> EtaView<S> {
        let deriv = |logits: &[S], active: bool| -> Vec<S> {
            logits
                .iter()
                .map(|&x| if active { sigmoid_derivative(x) } else { S::zero() })
                .collect()
        };
        EtaView::new(
            self.gamma_logits.iter().map(|&x| sigmoid(x)).collect(),
            self.lambda_logits.iter().map(|&x| sigmoid(x)).collect(),
            deriv(&self.gamma_logits, self.adapt_gamma),
            deriv(&self.lambda_logits, self.adapt_lambda),
            self.state_dependent,
        )
    }

    /// Copy with one gamma logit nudged by `h` (clamp skipped so finite
    /// differences stay exact). Gradient-check plumbing.
    pub fn bumped_gamma_logit(&self, slot: usize, h: S) -> Self {
        let mut out = self.clone();
        out.gamma_logits[slot] += h;
        out
    }

    /// Copy with one lambda logit nudged by `h`.
    pub fn bumped_lambda_logit(&self, slot: usize, h: S) -> Self {
        let mut out = self.clone();
        out.lambda_logits[slot] += h;
        out
    }

    /// View exposing sigmoid derivatives for both families regardless of the
    /// adapt flags; used by gradient checks that probe frozen components.
    pub fn eta_view_full(&self) -> EtaView<S> {
        EtaView::new(
            self.gamma_logits.iter().map(|&x| sigmoid(x)).collect(),
            self.lambda_logits.iter().map(|&x| sigmoid(x)).collect(),
            self.gamma_logits.iter().map(|&x| sigmoid_derivative(x)).collect(),
            self.lambda_logits.iter().map(|&x| sigmoid_derivative(x)).collect(),
            self.state_dependent,
        )
    }

    /// Apply a step to the active logits, clamping into the legal range.
    /// `delta` is laid out per [`EtaLayout`].
    fn apply_delta(&mut self, delta: &[S]) {
        let layout = self.layout();
        assert_eq!(delta.len(), layout.active_dim());
        let clamp = S::of(LOGIT_CLAMP);
        for slot in 0..layout.num_slots {
            if let Some(c) = layout.gamma_col(slot) {
                self.gamma_logits[slot] =
                    (self.gamma_logits[slot] + delta[c]).max(-clamp).min(clamp);
            }
            if let Some(c) = layout.lambda_col(slot) {
                self.lambda_logits[slot] =
                    (self.lambda_logits[slot] + delta[c]).max(-clamp).min(clamp);
            }
        }
    }
}

/// Dense matrix of shape (theta dimension x active meta dimension), row
/// major. Used both for the per-update sensitivity of the inner update and
/// for the accumulated trace.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaJacobian<S> {
    data: Vec<S>,
    theta_dim: usize,
    eta_dim: usize,
}

impl<S: Scalar> EtaJacobian<S> {
    pub fn zeros(theta_dim: usize, eta_dim: usize) -> Self {
        EtaJacobian {
            data: vec![S::zero(); theta_dim * eta_dim],
            theta_dim,
            eta_dim,
        }
    }

    pub fn theta_dim(&self) -> usize {
        self.theta_dim
    }

    pub fn eta_dim(&self) -> usize {
        self.eta_dim
    }

    pub fn get(&self, row: usize, col: usize) -> S {
        self.data[row * self.eta_dim + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: S) {
        self.data[row * self.eta_dim + col] = v;
    }

    /// `column += scale * vector` for a full theta-dimension vector.
    pub fn add_scaled_column(&mut self, col: usize, scale: S, vector: &[S]) {
        assert_eq!(vector.len(), self.theta_dim);
        if scale == S::zero() {
            return;
        }
        for (row, v) in vector.iter().enumerate() {
            self.data[row * self.eta_dim + col] += scale * *v;
        }
    }

    /// `self += other`, entrywise.
    pub fn add_assign(&mut self, other: &EtaJacobian<S>) -> Result<()> {
        if self.theta_dim != other.theta_dim || self.eta_dim != other.eta_dim {
            return Err(CoreError::DimMismatch {
                context: "eta jacobian accumulate",
                expected: self.data.len(),
                got: other.data.len(),
            });
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: S) {
        for a in self.data.iter_mut() {
            *a *= factor;
        }
    }

    /// `transpose(self) * vector`, producing one entry per active component.
    pub fn transpose_mul(&self, vector: &[S]) -> Result<Vec<S>> {
        if vector.len() != self.theta_dim {
            return Err(CoreError::DimMismatch {
                context: "eta jacobian transpose-multiply",
                expected: self.theta_dim,
                got: vector.len(),
            });
        }
        let mut out = vec![S::zero(); self.eta_dim];
        for row in 0..self.theta_dim {
            let v = vector[row];
            if v == S::zero() {
                continue;
            }
            let base = row * self.eta_dim;
            for (col, o) in out.iter_mut().enumerate() {
                *o += v * self.data[base + col];
            }
        }
        Ok(out)
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }
}

/// Decayed accumulator approximating how the agent parameters depend on the
/// meta-parameter logits across successive updates.
#[derive(Debug, Clone)]
pub struct MetaTrace<S> {
    entries: EtaJacobian<S>,
    mu: S,
}

impl<S: Scalar> MetaTrace<S> {
    pub fn zeros(theta_dim: usize, eta_dim: usize, mu: S) -> Self {
        assert!(mu >= S::zero() && mu <= S::one(), "trace decay must be in [0, 1]");
        MetaTrace {
            entries: EtaJacobian::zeros(theta_dim, eta_dim),
            mu,
        }
    }

    pub fn mu(&self) -> S {
        self.mu
    }

    pub fn entries(&self) -> &EtaJacobian<S> {
        &self.entries
    }
}

/// `z' = mu * z + df_deta`.
pub fn trace_update<S: Scalar>(z: &mut MetaTrace<S>, df_deta: &EtaJacobian<S>) -> Result<()> {
    z.entries.scale(z.mu);
    z.entries.add_assign(df_deta)
}

/// Which rule turns the meta-gradient into a logit step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetaOptimizerKind {
    /// Plain stochastic gradient descent: `delta = -beta * g`.
    Sgd,
    /// Adam with bias correction.
    Adam,
}

/// Per-component optimizer state for the meta-update.
#[derive(Debug, Clone)]
pub struct MetaOptimizerState<S> {
    kind: MetaOptimizerKind,
    beta: S,
    m: Vec<S>,
    v: Vec<S>,
    step: u64,
    beta1: S,
    beta2: S,
    eps: S,
}

impl<S: Scalar> MetaOptimizerState<S> {
    pub fn new(kind: MetaOptimizerKind, beta: S, eta_dim: usize) -> Self {
        MetaOptimizerState {
            kind,
            beta,
            m: vec![S::zero(); eta_dim],
            v: vec![S::zero(); eta_dim],
            step: 0,
            beta1: S::of(0.9),
            beta2: S::of(0.999),
            eps: S::of(1e-8),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    fn delta(&mut self, grad: &[S]) -> Vec<S> {
        assert_eq!(grad.len(), self.m.len());
        match self.kind {
            MetaOptimizerKind::Sgd => grad.iter().map(|&g| -self.beta * g).collect(),
            MetaOptimizerKind::Adam => {
                self.step += 1;
                let t = self.step as i32;
                let bc1 = S::one() - self.beta1.powi(t);
                let bc2 = S::one() - self.beta2.powi(t);
                grad.iter()
                    .enumerate()
                    .map(|(i, &g)| {
                        self.m[i] = self.beta1 * self.m[i] + (S::one() - self.beta1) * g;
                        self.v[i] = self.beta2 * self.v[i] + (S::one() - self.beta2) * g * g;
                        let m_hat = self.m[i] / bc1;
                        let v_hat = self.v[i] / bc2;
                        -self.beta * m_hat / (v_hat.sqrt() + self.eps)
                    })
                    .collect()
            }
        }
    }
}

/// One meta-update: form the meta-gradient by chaining the validation
/// gradient through the trace, then descend the active logits.
///
/// `d_jprime_d_theta` is the gradient of the validation objective with
/// respect to the updated agent parameters. Errors carry the index of the
/// first non-finite meta-gradient component.
pub fn meta_step<S: Scalar>(
    mp: &mut MetaParams<S>,
    opt: &mut MetaOptimizerState<S>,
    d_jprime_d_theta: &[S],
    z: &MetaTrace<S>,
) -> Result<()> {
    let grad = z.entries().transpose_mul(d_jprime_d_theta)?;
    for (i, g) in grad.iter().enumerate() {
        if !g.is_finite() {
            return Err(CoreError::NonFiniteMetaGradient { component: i });
        }
    }
    let delta = opt.delta(&grad);
    mp.apply_delta(&delta);
    debug_assert!(
        mp.gamma_logits.iter().chain(&mp.lambda_logits).all(|x| x.is_finite()),
        "meta-step produced a non-finite logit"
    );
    Ok(())
}

/// One recorded inner update for the exact sensitivity recursion: the full
/// Jacobian of the update with respect to the parameters (theta x theta, row
/// major) and its sensitivity to the meta-parameters.
#[derive(Debug, Clone)]
pub struct InnerUpdateRecord<S> {
    pub df_dtheta: Vec<S>,
    pub df_deta: EtaJacobian<S>,
}

pub const DEFAULT_ORACLE_CAP: usize = 4096;

/// Exact forward accumulation of the parameter sensitivity across a history
/// of inner updates:
///
/// `D <- (I + df/dtheta) * D + df/deta`, starting from `D = 0`.
///
/// This is a test oracle for the decayed trace; it is only feasible when the
/// inner-update Jacobian is explicitly computable, so the parameter dimension
/// is capped.
pub fn exact_forward_accumulation<S: Scalar>(
    history: &[InnerUpdateRecord<S>],
    theta_dim: usize,
    eta_dim: usize,
    cap: usize,
) -> Result<EtaJacobian<S>> {
    if theta_dim > cap {
        return Err(CoreError::OracleDimExceeded {
            dim: theta_dim,
            cap,
        });
    }
    let mut d = EtaJacobian::zeros(theta_dim, eta_dim);
    for (k, rec) in history.iter().enumerate() {
        if rec.df_dtheta.len() != theta_dim * theta_dim {
            return Err(CoreError::DimMismatch {
                context: "inner-update jacobian",
                expected: theta_dim * theta_dim,
                got: rec.df_dtheta.len(),
            });
        }
        if rec.df_deta.theta_dim() != theta_dim || rec.df_deta.eta_dim() != eta_dim {
            return Err(CoreError::DimMismatch {
                context: "inner-update eta jacobian",
                expected: theta_dim * eta_dim,
                got: rec.df_deta.theta_dim() * rec.df_deta.eta_dim(),
            });
        }
        let mut next = EtaJacobian::zeros(theta_dim, eta_dim);
        for row in 0..theta_dim {
            for col in 0..eta_dim {
                let mut acc = d.get(row, col) + rec.df_deta.get(row, col);
                for k2 in 0..theta_dim {
                    acc += rec.df_dtheta[row * theta_dim + k2] * d.get(k2, col);
                }
                next.set(row, col, acc);
            }
        }
        for v in next.as_slice() {
            if !v.is_finite() {
                return Err(CoreError::NonFinite {
                    what: "exact sensitivity",
                    index: k,
                });
            }
        }
        d = next;
    }
    Ok(d)
}
