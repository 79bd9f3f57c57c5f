//! Linear value functions and softmax policies over observation features,
//! optionally conditioned on an embedding of the meta-parameters so the
//! approximators can track a moving return specification. All gradients are
//! analytic.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{CoreError, Result};
use crate::returns::EtaView;
use crate::scalar::Scalar;

/// Shape of the flat parameter vector: value weights, then policy weights
/// (row major, one row per action), then the embedding matrix (row major,
/// embed_dim x eta_input_dim). With conditioning off the embedding block is
/// empty and features are the raw observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    pub obs_dim: usize,
    pub num_actions: usize,
    pub embed_dim: usize,
    pub eta_input_dim: usize,
    pub conditioning: bool,
}

impl ParamLayout {
    pub fn new(obs_dim: usize, num_actions: usize, conditioning: bool, embed_dim: usize, eta_input_dim: usize) -> Self {
        let (embed_dim, eta_input_dim) = if conditioning {
            (embed_dim, eta_input_dim)
        } else {
            (0, 0)
        };
        ParamLayout {
            obs_dim,
            num_actions,
            embed_dim,
            eta_input_dim,
            conditioning,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.obs_dim + self.embed_dim
    }

    pub fn theta_dim(&self) -> usize {
        let f = self.feature_dim();
        f + self.num_actions * f + self.embed_dim * self.eta_input_dim
    }

    fn value_offset(&self) -> usize {
        0
    }

    fn policy_offset(&self) -> usize {
        self.feature_dim()
    }

    fn embed_offset(&self) -> usize {
        self.feature_dim() * (1 + self.num_actions)
    }
}

/// Agent parameters stored as one flat vector so the meta machinery can treat
/// them uniformly. Starts at zero: the value function predicts zero, the
/// policy is uniform, and the embedding is a no-op until trained.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentParams<S> {
    layout: ParamLayout,
    theta: Vec<S>,
}

impl<S: Scalar> AgentParams<S> {
    pub fn zeros(layout: ParamLayout) -> Self {
        AgentParams {
            layout,
            theta: vec![S::zero(); layout.theta_dim()],
        }
    }

    pub fn layout(&self) -> ParamLayout {
        self.layout
    }

    pub fn theta(&self) -> &[S] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [S] {
        &mut self.theta
    }

    pub fn theta_dim(&self) -> usize {
        self.theta.len()
    }

    pub fn value_weights(&self) -> &[S] {
        let o = self.layout.value_offset();
        &self.theta[o..o + self.layout.feature_dim()]
    }

    pub fn policy_row(&self, action: usize) -> &[S] {
        let f = self.layout.feature_dim();
        let o = self.layout.policy_offset() + action * f;
        &self.theta[o..o + f]
    }

    fn embed_entry(&self, row: usize, col: usize) -> S {
        let o = self.layout.embed_offset() + row * self.layout.eta_input_dim + col;
        self.theta[o]
    }

    /// `params += delta`, componentwise.
    pub fn add_delta(&mut self, delta: &[S]) -> Result<()> {
        if delta.len() != self.theta.len() {
            return Err(CoreError::DimMismatch {
                context: "parameter delta",
                expected: self.theta.len(),
                got: delta.len(),
            });
        }
        for (t, d) in self.theta.iter_mut().zip(delta) {
            *t += *d;
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.theta.iter().all(|x| x.is_finite())
    }

    fn check_obs(&self, obs: &[S]) -> Result<()> {
        if obs.len() != self.layout.obs_dim {
            return Err(CoreError::DimMismatch {
                context: "observation",
                expected: self.layout.obs_dim,
                got: obs.len(),
            });
        }
        Ok(())
    }

    /// Feature vector `[obs ; W * eta]`; just the observation when
    /// conditioning is off.
    pub fn features(&self, obs: &[S], eta: &EtaView<S>) -> Result<Vec<S>> {
        self.check_obs(obs)?;
        let mut f = Vec::with_capacity(self.layout.feature_dim());
        f.extend_from_slice(obs);
        if self.layout.conditioning {
            let input = eta.conditioning_input();
            if input.len() != self.layout.eta_input_dim {
                return Err(CoreError::DimMismatch {
                    context: "conditioning input",
                    expected: self.layout.eta_input_dim,
                    got: input.len(),
                });
            }
            for row in 0..self.layout.embed_dim {
                let mut e = S::zero();
                for (col, x) in input.iter().enumerate() {
                    e += self.embed_entry(row, col) * *x;
                }
                f.push(e);
            }
        }
        Ok(f)
    }

    pub fn value(&self, obs: &[S], eta: &EtaView<S>) -> Result<S> {
        let f = self.features(obs, eta)?;
        Ok(dot(self.value_weights(), &f))
    }

    /// Softmax action distribution; strictly positive and normalized.
    pub fn policy_probs(&self, obs: &[S], eta: &EtaView<S>) -> Result<Vec<S>> {
        if self.layout.num_actions == 0 {
            return Err(CoreError::InvalidAction {
                action: 0,
                num_actions: 0,
            });
        }
        let f = self.features(obs, eta)?;
        let logits: Vec<S> = (0..self.layout.num_actions)
            .map(|a| dot(self.policy_row(a), &f))
            .collect();
        Ok(softmax(&logits))
    }

    /// Gradient of the value output with respect to the full flat parameter
    /// vector: the features on the value block, the chain through the
    /// embedding on the embedding block, zero on the policy block.
    pub fn value_grad(&self, obs: &[S], eta: &EtaView<S>) -> Result<Vec<S>> {
        let f = self.features(obs, eta)?;
        let mut grad = vec![S::zero(); self.theta_dim()];
        let vo = self.layout.value_offset();
        grad[vo..vo + f.len()].copy_from_slice(&f);
        if self.layout.conditioning {
            let input = eta.conditioning_input();
            let w = self.value_weights();
            let eo = self.layout.embed_offset();
            for row in 0..self.layout.embed_dim {
                let coeff = w[self.layout.obs_dim + row];
                for (col, x) in input.iter().enumerate() {
                    grad[eo + row * self.layout.eta_input_dim + col] = coeff * *x;
                }
            }
        }
        Ok(grad)
    }

    /// Score function of the softmax policy for the taken action, over the
    /// full flat parameter vector.
    pub fn log_policy_grad(&self, obs: &[S], action: usize, eta: &EtaView<S>) -> Result<Vec<S>> {
        if action >= self.layout.num_actions {
            return Err(CoreError::InvalidAction {
                action,
                num_actions: self.layout.num_actions,
            });
        }
        let f = self.features(obs, eta)?;
        let probs = self.policy_probs(obs, eta)?;
        let fdim = self.layout.feature_dim();
        let mut grad = vec![S::zero(); self.theta_dim()];
        let po = self.layout.policy_offset();
        for a in 0..self.layout.num_actions {
            let coeff = if a == action { S::one() - probs[a] } else { -probs[a] };
            for (i, x) in f.iter().enumerate() {
                grad[po + a * fdim + i] = coeff * *x;
            }
        }
        if self.layout.conditioning {
            // d log pi / d features = row(action) - sum_a pi_a row(a),
            // chained into the embedding entries.
            let input = eta.conditioning_input();
            let eo = self.layout.embed_offset();
            for row in 0..self.layout.embed_dim {
                let fi = self.layout.obs_dim + row;
                let mut dfeat = self.policy_row(action)[fi];
                for a in 0..self.layout.num_actions {
                    dfeat -= probs[a] * self.policy_row(a)[fi];
                }
                for (col, x) in input.iter().enumerate() {
                    grad[eo + row * self.layout.eta_input_dim + col] = dfeat * *x;
                }
            }
        }
        Ok(grad)
    }

    /// Policy entropy and its gradient over the full flat parameter vector.
    pub fn entropy_and_grad(&self, obs: &[S], eta: &EtaView<S>) -> Result<(S, Vec<S>)> {
        let f = self.features(obs, eta)?;
        let probs = self.policy_probs(obs, eta)?;
        let mut entropy = S::zero();
        for p in &probs {
            entropy -= *p * p.ln();
        }
        // dH/dlogit_a = -p_a (ln p_a + H)
        let dlogit: Vec<S> = probs.iter().map(|&p| -p * (p.ln() + entropy)).collect();
        let fdim = self.layout.feature_dim();
        let mut grad = vec![S::zero(); self.theta_dim()];
        let po = self.layout.policy_offset();
        for (a, dl) in dlogit.iter().enumerate() {
            for (i, x) in f.iter().enumerate() {
                grad[po + a * fdim + i] = *dl * *x;
            }
        }
        if self.layout.conditioning {
            let input = eta.conditioning_input();
            let eo = self.layout.embed_offset();
            for row in 0..self.layout.embed_dim {
                let fi = self.layout.obs_dim + row;
                let mut dfeat = S::zero();
                for (a, dl) in dlogit.iter().enumerate() {
                    dfeat += *dl * self.policy_row(a)[fi];
                }
                for (col, x) in input.iter().enumerate() {
                    grad[eo + row * self.layout.eta_input_dim + col] = dfeat * *x;
                }
            }
        }
        Ok((entropy, grad))
    }

    /// Write a text checkpoint: a header with the dimensions and the
    /// conditioning flag, then one parameter per line.
    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        let l = self.layout;
        writeln!(
            f,
            "metaret-params v1 obs_dim={} num_actions={} embed_dim={} eta_input_dim={} conditioning={}",
            l.obs_dim, l.num_actions, l.embed_dim, l.eta_input_dim, l.conditioning
        )?;
        for x in &self.theta {
            writeln!(f, "{}", x.to_f64_lossy())?;
        }
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let f = BufReader::new(std::fs::File::open(path)?);
        let mut lines = f.lines();
        let header = lines
            .next()
            .ok_or_else(|| CoreError::BadCheckpoint("empty file".into()))??;
        let mut fields = header.split_whitespace();
        let magic = (fields.next(), fields.next());
        if magic != (Some("metaret-params"), Some("v1")) {
            return Err(CoreError::BadCheckpoint(format!("bad header: {header}")));
        }
        let get = |name: &str| -> Result<String> {
            for kv in header.split_whitespace() {
                if let Some(v) = kv.strip_prefix(&format!("{name}=")) {
                    return Ok(v.to_string());
                }
            }
            Err(CoreError::BadCheckpoint(format!("missing field {name}")))
        };
        let parse_usize = |v: String| -> Result<usize> {
            v.parse()
                .map_err(|_| CoreError::BadCheckpoint(format!("bad integer {v}")))
        };
        let obs_dim = parse_usize(get("obs_dim")?)?;
        let num_actions = parse_usize(get("num_actions")?)?;
        let embed_dim = parse_usize(get("embed_dim")?)?;
        let eta_input_dim = parse_usize(get("eta_input_dim")?)?;
        let conditioning = get("conditioning")? == "true";
        let layout = ParamLayout::new(obs_dim, num_actions, conditioning, embed_dim, eta_input_dim);
        let mut theta = Vec::with_capacity(layout.theta_dim());
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let v: f64 = line
                .trim()
                .parse()
                .map_err(|_| CoreError::BadCheckpoint(format!("bad value {line}")))?;
            theta.push(S::of(v));
        }
        if theta.len() != layout.theta_dim() {
            return Err(CoreError::BadCheckpoint(format!(
                "expected {} parameters, found {}",
                layout.theta_dim(),
                theta.len()
            )));
        }
        Ok(AgentParams { layout, theta })
    }
}

fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = S::zero();
    for (x, y) in a.iter().zip(b) {
        acc += *x * *y;
    }
    acc
}

/// Softmax with max subtraction.
fn softmax<S: Scalar>(logits: &[S]) -> Vec<S> {
    let max = logits.iter().copied().fold(S::neg_infinity(), S::max);
    let exps: Vec<S> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: S = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn eta2(gamma: f64, lambda: f64) -> EtaView<f64> {
        EtaView::constant(gamma, lambda)
    }

    fn randomize(params: &mut AgentParams<f64>, rng: &mut ChaCha8Rng) {
        for t in params.theta_mut() {
            *t = rng.random_range(-1.0..1.0);
        }
    }

    #[test]
    fn zero_weights_zero_value_uniform_policy() {
        let layout = ParamLayout::new(3, 4, false, 0, 0);
        let ap = AgentParams::<f64>::zeros(layout);
        let eta = eta2(0.5, 0.5);
        assert_eq!(ap.value(&[1.0, -2.0, 0.3], &eta).unwrap(), 0.0);
        let probs = ap.policy_probs(&[1.0, -2.0, 0.3], &eta).unwrap();
        for p in &probs {
            assert!((p - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn one_hot_value_is_tabular_lookup() {
        let layout = ParamLayout::new(4, 0, false, 0, 0);
        let mut ap = AgentParams::<f64>::zeros(layout);
        ap.theta_mut()[2] = 7.5;
        let eta = eta2(0.5, 0.5);
        let mut obs = vec![0.0; 4];
        obs[2] = 1.0;
        assert_eq!(ap.value(&obs, &eta).unwrap(), 7.5);
    }

    #[test]
    fn conditioned_value_is_a_dot_over_the_concatenation() {
        // scalar eta = (0.5, 0.5), embedding all ones: features = [obs ; 1, 1]
        let layout = ParamLayout::new(2, 0, true, 2, 2);
        let mut ap = AgentParams::<f64>::zeros(layout);
        // value weights [1, 2, 3, 4]; embedding = ones
        let vals = [1.0, 2.0, 3.0, 4.0];
        ap.theta_mut()[..4].copy_from_slice(&vals);
        let eo = 4; // no policy block
        for i in 0..4 {
            ap.theta_mut()[eo + i] = 1.0;
        }
        let eta = eta2(0.5, 0.5);
        // e = W [0.5, 0.5] = [1, 1]; value = 1*0.7 + 2*(-0.1) + 3*1 + 4*1
        let v = ap.value(&[0.7, -0.1], &eta).unwrap();
        assert!((v - (0.7 - 0.2 + 3.0 + 4.0)).abs() < 1e-12);
    }

    #[test]
    fn policy_saturation_and_direct_softmax() {
        let layout = ParamLayout::new(1, 3, false, 0, 0);
        let mut ap = AgentParams::<f64>::zeros(layout);
        // logits via weights on a one-dimensional observation of 1.0
        let f = 1; // feature dim
        ap.theta_mut()[f] = 20.0; // action 0 logit
        let probs = ap.policy_probs(&[1.0], &eta2(0.5, 0.5)).unwrap();
        assert!(probs[0] > 0.9999);

        // logits {1, 0, -1}
        ap.theta_mut()[f] = 1.0;
        ap.theta_mut()[f + 1] = 0.0;
        ap.theta_mut()[f + 2] = -1.0;
        let probs = ap.policy_probs(&[1.0], &eta2(0.5, 0.5)).unwrap();
        let z: f64 = (1f64).exp() + 1.0 + (-1f64).exp();
        assert!((probs[0] - 1f64.exp() / z).abs() < 1e-12);
        assert!((probs[1] - 1.0 / z).abs() < 1e-12);
        assert!((probs[2] - (-1f64).exp() / z).abs() < 1e-12);
        let sum: f64 = probs.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn value_grad_without_conditioning_is_the_observation() {
        let layout = ParamLayout::new(3, 2, false, 0, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut ap = AgentParams::<f64>::zeros(layout);
        randomize(&mut ap, &mut rng);
        let obs = [0.4, -1.2, 2.0];
        let g = ap.value_grad(&obs, &eta2(0.5, 0.5)).unwrap();
        assert_eq!(&g[..3], &obs);
        assert!(g[3..].iter().all(|&x| x == 0.0));

        let zg = ap.value_grad(&[0.0, 0.0, 0.0], &eta2(0.5, 0.5)).unwrap();
        assert!(zg.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn uniform_two_action_score_is_half_features() {
        let layout = ParamLayout::new(2, 2, false, 0, 0);
        let ap = AgentParams::<f64>::zeros(layout);
        let obs = [0.8, -0.4];
        let g = ap.log_policy_grad(&obs, 0, &eta2(0.5, 0.5)).unwrap();
        let fdim = 2;
        let po = fdim; // after value block
        assert!((g[po] - 0.5 * obs[0]).abs() < 1e-15);
        assert!((g[po + 1] - 0.5 * obs[1]).abs() < 1e-15);
        // other action row gets -0.5 * features
        assert!((g[po + fdim] + 0.5 * obs[0]).abs() < 1e-15);
    }

    #[test]
    fn deterministic_policy_has_vanishing_score_and_entropy() {
        let layout = ParamLayout::new(1, 2, false, 0, 0);
        let mut ap = AgentParams::<f64>::zeros(layout);
        ap.theta_mut()[1] = 40.0; // action 0 dominates
        let g = ap.log_policy_grad(&[1.0], 0, &eta2(0.5, 0.5)).unwrap();
        assert!(g.iter().all(|&x| x.abs() < 1e-12));
        let (h, _) = ap.entropy_and_grad(&[1.0], &eta2(0.5, 0.5)).unwrap();
        assert!(h < 1e-12);
    }

    #[test]
    fn uniform_entropy_is_log_k_with_zero_gradient() {
        let layout = ParamLayout::new(2, 5, false, 0, 0);
        let ap = AgentParams::<f64>::zeros(layout);
        let (h, g) = ap.entropy_and_grad(&[0.3, 0.7], &eta2(0.5, 0.5)).unwrap();
        assert!((h - 5f64.ln()).abs() < 1e-12);
        assert!(g.iter().all(|&x| x.abs() < 1e-14));
    }

    #[test]
    fn invalid_action_and_dimension_errors() {
        let layout = ParamLayout::new(2, 2, false, 0, 0);
        let ap = AgentParams::<f64>::zeros(layout);
        assert!(matches!(
            ap.log_policy_grad(&[0.0, 0.0], 2, &eta2(0.5, 0.5)),
            Err(CoreError::InvalidAction { action: 2, num_actions: 2 })
        ));
        assert!(matches!(
            ap.value(&[0.0], &eta2(0.5, 0.5)),
            Err(CoreError::DimMismatch { .. })
        ));
    }

    fn finite_diff_grad(
        f: &dyn Fn(&AgentParams<f64>) -> f64,
        base: &AgentParams<f64>,
    ) -> Vec<f64> {
        let h = 1e-6;
        let mut g = vec![0.0; base.theta_dim()];
        for i in 0..base.theta_dim() {
            let mut p = base.clone();
            p.theta_mut()[i] += h;
            let mut m = base.clone();
            m.theta_mut()[i] -= h;
            g[i] = (f(&p) - f(&m)) / (2.0 * h);
        }
        g
    }

    #[test]
    fn analytic_gradients_match_finite_differences_over_random_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for case in 0..100 {
            let conditioning = case % 2 == 0;
            let layout = ParamLayout::new(3, 4, conditioning, 2, 4);
            let mut ap = AgentParams::<f64>::zeros(layout);
            randomize(&mut ap, &mut rng);
            let obs: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let eta = EtaView::new(
                vec![rng.random_range(0.05..0.95), rng.random_range(0.05..0.95)],
                vec![rng.random_range(0.05..0.95), rng.random_range(0.05..0.95)],
                vec![0.0; 2],
                vec![0.0; 2],
                false,
            );
            let action = rng.random_range(0..4);

            let vg = ap.value_grad(&obs, &eta).unwrap();
            let fd = finite_diff_grad(&|p| p.value(&obs, &eta).unwrap(), &ap);
            for (a, b) in vg.iter().zip(&fd) {
                assert!(crate::stats::rel_err(*a, *b) < 1e-6, "value grad case {case}");
            }

            let lg = ap.log_policy_grad(&obs, action, &eta).unwrap();
            let fd = finite_diff_grad(
                &|p| p.policy_probs(&obs, &eta).unwrap()[action].ln(),
                &ap,
            );
            for (a, b) in lg.iter().zip(&fd) {
                assert!(crate::stats::rel_err(*a, *b) < 1e-6, "log-policy grad case {case}");
            }

            let (_, hg) = ap.entropy_and_grad(&obs, &eta).unwrap();
            let fd = finite_diff_grad(
                &|p| {
                    let probs = p.policy_probs(&obs, &eta).unwrap();
                    -probs.iter().map(|&q| q * q.ln()).sum::<f64>()
                },
                &ap,
            );
            for (a, b) in hg.iter().zip(&fd) {
                assert!(crate::stats::rel_err(*a, *b) < 1e-6, "entropy grad case {case}");
            }
        }
    }

    #[test]
    fn outputs_ignore_eta_without_conditioning() {
        let layout = ParamLayout::new(2, 3, false, 0, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut ap = AgentParams::<f64>::zeros(layout);
        randomize(&mut ap, &mut rng);
        let obs = [0.2, -0.9];
        let a = ap.value(&obs, &eta2(0.1, 0.9)).unwrap();
        let b = ap.value(&obs, &eta2(0.99, 0.01)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn embedding_is_linear_in_eta() {
        let layout = ParamLayout::new(2, 0, true, 3, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut ap = AgentParams::<f64>::zeros(layout);
        randomize(&mut ap, &mut rng);
        let obs = [0.0, 0.0];
        let mk = |g: f64, l: f64| {
            EtaView::new(vec![g, g], vec![l, l], vec![0.0; 2], vec![0.0; 2], false)
        };
        // superposition over the conditioning input
        let f1 = ap.features(&obs, &mk(0.3, 0.1)).unwrap();
        let f2 = ap.features(&obs, &mk(0.2, 0.4)).unwrap();
        let fsum = ap.features(&obs, &mk(0.5, 0.5)).unwrap();
        for i in 2..f1.len() {
            assert!((f1[i] + f2[i] - fsum[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = std::env::temp_dir().join(format!("metaret-ckpt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("params.txt");
        let layout = ParamLayout::new(3, 2, true, 2, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut ap = AgentParams::<f64>::zeros(layout);
        randomize(&mut ap, &mut rng);
        ap.save_checkpoint(&path).unwrap();
        let back = AgentParams::<f64>::load_checkpoint(&path).unwrap();
        assert_eq!(ap, back);
        std::fs::remove_dir_all(&dir).ok();
    }
}
