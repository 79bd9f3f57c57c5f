//! Trajectory sampling for reward processes and MDPs, plus the actor harness
//! that feeds the control learner with segments sampled under (possibly
//! stale) policy snapshots.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::gridworld::MdpSpec;
use super::mrp::MrpSpec;
use crate::approx::AgentParams;
use crate::error::Result;
use crate::returns::{EtaView, Trajectory};
use crate::scalar::Scalar;

/// Sample a full episode from the start state of an MRP, truncating at
/// `max_transitions` if the chain has not terminated by then.
pub fn sample_mrp_episode<S: Scalar, R: Rng + ?Sized>(
    spec: &MrpSpec<S>,
    rng: &mut R,
    max_transitions: usize,
) -> Trajectory<S> {
    sample_mrp_episode_from(spec, spec.start, rng, max_transitions)
}

pub fn sample_mrp_episode_from<S: Scalar, R: Rng + ?Sized>(
    spec: &MrpSpec<S>,
    start: usize,
    rng: &mut R,
    max_transitions: usize,
) -> Trajectory<S> {
    let mut state = start;
    let mut traj = Trajectory {
        observations: vec![spec.observation(state)],
        state_ids: vec![state],
        actions: Vec::new(),
        rewards: Vec::new(),
        behavior_probs: Vec::new(),
        terminal: false,
    };
    while !spec.is_terminal(state) && traj.rewards.len() < max_transitions {
        let (next, reward) = spec.transition(state, rng);
        traj.rewards.push(reward);
        traj.behavior_probs.push(S::one());
        traj.state_ids.push(next);
        traj.observations.push(spec.observation(next));
        state = next;
    }
    traj.terminal = spec.is_terminal(state);
    traj
}

/// Sampling state for an MDP actor: keeps the in-progress episode across
/// segment boundaries and tracks completed episode returns.
pub struct MdpStream<S> {
    spec: Arc<MdpSpec<S>>,
    state: usize,
    steps_in_episode: usize,
    episode_return: S,
    completed_returns: Vec<S>,
}

impl<S: Scalar> MdpStream<S> {
    pub fn new(spec: Arc<MdpSpec<S>>) -> Self {
        let state = spec.start;
        MdpStream {
            spec,
            state,
            steps_in_episode: 0,
            episode_return: S::zero(),
            completed_returns: Vec::new(),
        }
    }

    /// Undiscounted returns of episodes completed since the last drain.
    pub fn drain_completed_returns(&mut self) -> Vec<S> {
        std::mem::take(&mut self.completed_returns)
    }

    /// Sample up to `segment_length` transitions under the softmax policy of
    /// `params`, recording the probability assigned to each taken action.
    /// The segment ends early when the episode does (goal reached or step cap
    /// hit, both treated as terminal), after which the next call restarts
    /// from the start state.
    pub fn sample_segment<R: Rng + ?Sized>(
        &mut self,
        params: &AgentParams<S>,
        eta: &EtaView<S>,
        rng: &mut R,
        segment_length: usize,
    ) -> Result<Trajectory<S>> {
        let spec = Arc::clone(&self.spec);
        let mut traj = Trajectory {
            observations: vec![spec.observation(self.state)],
            state_ids: vec![self.state],
            actions: Vec::new(),
            rewards: Vec::new(),
            behavior_probs: Vec::new(),
            terminal: false,
        };
        for _ in 0..segment_length {
            let obs = spec.observation(self.state);
            let probs = params.policy_probs(&obs, eta)?;
            let action = sample_categorical(&probs, rng);
            let (next, reward) = spec.transition(self.state, action, rng);

            traj.actions.push(action);
            traj.rewards.push(reward);
            traj.behavior_probs.push(probs[action]);
            traj.state_ids.push(next);
            traj.observations.push(spec.observation(next));

            self.episode_return += reward;
            self.steps_in_episode += 1;
            self.state = next;

            let done = spec.is_terminal(next) || self.steps_in_episode >= spec.episode_cap;
            if done {
                traj.terminal = true;
                self.completed_returns.push(self.episode_return);
                self.state = spec.start;
                self.steps_in_episode = 0;
                self.episode_return = S::zero();
                break;
            }
        }
        Ok(traj)
    }
}

fn sample_categorical<S: Scalar, R: Rng + ?Sized>(probs: &[S], rng: &mut R) -> usize {
    let u = S::unit_uniform(rng);
    let mut acc = S::zero();
    for (i, p) in probs.iter().enumerate() {
        acc += *p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

struct Actor<S> {
    stream: MdpStream<S>,
    rng: ChaCha8Rng,
    params: AgentParams<S>,
    eta: EtaView<S>,
    version: u64,
}

/// Serves trajectory segments to the learner from a pool of actors, each
/// holding a policy snapshot that is refreshed only after `snapshot_lag`
/// learner publications. Zero lag keeps every actor exactly on-policy; a
/// positive lag makes the recorded behavior probabilities intentionally
/// stale. Actors are cycled round-robin so runs are deterministic per seed.
pub struct ActorHarness<S> {
    actors: Vec<Actor<S>>,
    snapshot_lag: u64,
    learner_version: u64,
    latest_params: AgentParams<S>,
    latest_eta: EtaView<S>,
    next_actor: usize,
}

impl<S: Scalar> ActorHarness<S> {
    pub fn new(
        spec: Arc<MdpSpec<S>>,
        num_actors: usize,
        snapshot_lag: u64,
        params: AgentParams<S>,
        eta: EtaView<S>,
        rngs: Vec<ChaCha8Rng>,
    ) -> Self {
        assert!(num_actors >= 1, "need at least one actor");
        assert_eq!(rngs.len(), num_actors);
        let actors = rngs
            .into_iter()
            .map(|rng| Actor {
                stream: MdpStream::new(Arc::clone(&spec)),
                rng,
                params: params.clone(),
                eta: eta.clone(),
                version: 0,
            })
            .collect();
        ActorHarness {
            actors,
            snapshot_lag,
            learner_version: 0,
            latest_params: params,
            latest_eta: eta,
            next_actor: 0,
        }
    }

    /// Publish the learner's parameters; actors pick the snapshot up once
    /// their lag budget has elapsed.
    pub fn publish(&mut self, params: &AgentParams<S>, eta: &EtaView<S>) {
        self.learner_version += 1;
        self.latest_params = params.clone();
        self.latest_eta = eta.clone();
    }

    pub fn learner_version(&self) -> u64 {
        self.learner_version
    }

    /// Sample the next segment round-robin, returning it together with the
    /// version of the snapshot that generated it.
    pub fn next_segment(&mut self, segment_length: usize) -> Result<(Trajectory<S>, u64)> {
        let idx = self.next_actor;
        self.next_actor = (self.next_actor + 1) % self.actors.len();
        let actor = &mut self.actors[idx];
        if self.learner_version >= actor.version + self.snapshot_lag {
            actor.params = self.latest_params.clone();
            actor.eta = self.latest_eta.clone();
            actor.version = self.learner_version;
        }
        let traj =
            actor
                .stream
                .sample_segment(&actor.params, &actor.eta, &mut actor.rng, segment_length)?;
        Ok((traj, actor.version))
    }

    /// Episode returns completed by any actor since the last drain, in actor
    /// order.
    pub fn drain_completed_returns(&mut self) -> Vec<S> {
        let mut out = Vec::new();
        for a in &mut self.actors {
            out.extend(a.stream.drain_completed_returns());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::ParamLayout;
    use crate::envs::{build_fan_mrp, build_noisy_gridworld, build_signal_noise_mrp, true_values};
    use crate::stats;
    use rand::SeedableRng;

    #[test]
    fn signal_noise_episode_has_ten_transitions() {
        let mrp = build_signal_noise_mrp::<f64>();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let traj = sample_mrp_episode(&mrp, &mut rng, 100);
        assert_eq!(traj.num_transitions(), 10);
        assert!(traj.terminal);
        assert!(traj.behavior_probs.iter().all(|&p| p == 1.0));
        assert!(traj.actions.is_empty());
        traj.validate().unwrap();
    }

    #[test]
    fn fan_episode_has_nine_transitions() {
        let mrp = build_fan_mrp::<f64>(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let traj = sample_mrp_episode(&mrp, &mut rng, 100);
        assert_eq!(traj.num_transitions(), 9);
        assert_eq!(traj.rewards.len(), 9);
        assert!(traj.terminal);
    }

    #[test]
    fn fixed_seed_reproduces_trajectories_bit_for_bit() {
        let mrp = build_signal_noise_mrp::<f64>();
        let a = sample_mrp_episode(&mrp, &mut ChaCha8Rng::seed_from_u64(7), 100);
        let b = sample_mrp_episode(&mrp, &mut ChaCha8Rng::seed_from_u64(7), 100);
        assert_eq!(a, b);
    }

    #[test]
    fn truncation_marks_non_terminal() {
        let mrp = build_signal_noise_mrp::<f64>();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let traj = sample_mrp_episode(&mrp, &mut rng, 4);
        assert_eq!(traj.num_transitions(), 4);
        assert!(!traj.terminal);
    }

    #[test]
    fn monte_carlo_matches_dp_within_three_standard_errors() {
        for (spec, rollouts) in [
            (build_signal_noise_mrp::<f64>(), 100_000usize),
            (build_fan_mrp::<f64>(5).unwrap(), 100_000),
        ] {
            let table = true_values(&spec, 1.0).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(17);
            for s in 0..spec.num_states() {
                if spec.is_terminal(s) {
                    continue;
                }
                let returns: Vec<f64> = (0..rollouts)
                    .map(|_| sample_mrp_episode_from(&spec, s, &mut rng, 1000).reward_sum())
                    .collect();
                let m = stats::mean(&returns);
                let se = stats::sample_std(&returns) / (returns.len() as f64).sqrt();
                let tol = 3.0 * se + 1e-9;
                assert!(
                    (m - table.values[s]).abs() <= tol,
                    "{} state {s}: mc {m} dp {} tol {tol}",
                    spec.name,
                    table.values[s]
                );
            }
        }
    }

    fn uniform_agent() -> (AgentParams<f64>, EtaView<f64>) {
        let layout = ParamLayout::new(25, 4, false, 0, 0);
        (AgentParams::zeros(layout), EtaView::constant(0.5, 0.5))
    }

    #[test]
    fn episodes_never_exceed_the_cap() {
        let spec = Arc::new(build_noisy_gridworld::<f64>());
        let mut stream = MdpStream::new(Arc::clone(&spec));
        let (params, eta) = uniform_agent();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut steps_this_episode = 0usize;
        for _ in 0..200 {
            let traj = stream.sample_segment(&params, &eta, &mut rng, 20).unwrap();
            steps_this_episode += traj.num_transitions();
            if traj.terminal {
                assert!(steps_this_episode <= spec.episode_cap);
                steps_this_episode = 0;
            }
        }
    }

    #[test]
    fn zero_lag_single_actor_is_on_policy() {
        let spec = Arc::new(build_noisy_gridworld::<f64>());
        let (params, eta) = uniform_agent();
        let rngs = vec![ChaCha8Rng::seed_from_u64(11)];
        let mut harness = ActorHarness::new(Arc::clone(&spec), 1, 0, params.clone(), eta.clone(), rngs);
        for _ in 0..5 {
            let (traj, version) = harness.next_segment(20).unwrap();
            assert_eq!(version, harness.learner_version());
            // behavior probabilities recomputed under the current policy match exactly
            for (k, bp) in traj.behavior_probs.iter().enumerate() {
                let probs = params.policy_probs(&traj.observations[k], &eta).unwrap();
                assert_eq!(*bp, probs[traj.actions[k]]);
                assert!(*bp > 0.0);
            }
            harness.publish(&params, &eta);
        }
    }

    #[test]
    fn positive_lag_yields_off_policy_ratios_after_updates() {
        let spec = Arc::new(build_noisy_gridworld::<f64>());
        let (mut params, eta) = uniform_agent();
        let rngs = vec![ChaCha8Rng::seed_from_u64(13)];
        let mut harness =
            ActorHarness::new(Arc::clone(&spec), 1, 3, params.clone(), eta.clone(), rngs);
        // learner moves its policy weights; the actor snapshot lags behind
        let mut seen_off_policy = false;
        for step in 0..6 {
            let (traj, _) = harness.next_segment(20).unwrap();
            for (k, bp) in traj.behavior_probs.iter().enumerate() {
                let cur = params.policy_probs(&traj.observations[k], &eta).unwrap();
                if (cur[traj.actions[k]] / bp - 1.0).abs() > 1e-6 {
                    seen_off_policy = true;
                }
            }
            params.theta_mut()[25 + step] += 0.5; // nudge a policy weight
            harness.publish(&params, &eta);
        }
        assert!(seen_off_policy);
    }
}
