//! Property tests for the return functions and approximators.

use proptest::prelude::*;

use metaret::approx::{AgentParams, ParamLayout};
use metaret::returns::{lambda_return, vtrace_return, EtaView, Trajectory};
use metaret::scalar::{sigmoid, sigmoid_derivative};
use metaret::stats::rel_err;

fn view(gamma_logits: &[f64], lambda_logits: &[f64]) -> EtaView<f64> {
    EtaView::new(
        gamma_logits.iter().map(|&x| sigmoid(x)).collect(),
        lambda_logits.iter().map(|&x| sigmoid(x)).collect(),
        gamma_logits.iter().map(|&x| sigmoid_derivative(x)).collect(),
        lambda_logits.iter().map(|&x| sigmoid_derivative(x)).collect(),
        true,
    )
}

#[derive(Debug, Clone)]
struct TrajCase {
    rewards: Vec<f64>,
    state_ids: Vec<usize>,
    values: Vec<f64>,
    gamma_logits: Vec<f64>,
    lambda_logits: Vec<f64>,
    terminal: bool,
}

const NUM_STATES: usize = 4;

fn traj_case() -> impl Strategy<Value = TrajCase> {
    (1usize..8)
        .prop_flat_map(|len| {
            (
                prop::collection::vec(-2.0..2.0f64, len),
                prop::collection::vec(0..NUM_STATES, len + 1),
                prop::collection::vec(-1.0..1.0f64, len + 1),
                prop::collection::vec(-2.0..2.0f64, NUM_STATES),
                prop::collection::vec(-2.0..2.0f64, NUM_STATES),
                any::<bool>(),
            )
        })
        .prop_map(
            |(rewards, state_ids, values, gamma_logits, lambda_logits, terminal)| TrajCase {
                rewards,
                state_ids,
                values,
                gamma_logits,
                lambda_logits,
                terminal,
            },
        )
}

fn build_traj(case: &TrajCase) -> Trajectory<f64> {
    let len = case.rewards.len();
    Trajectory {
        observations: vec![vec![0.0]; len + 1],
        state_ids: case.state_ids.clone(),
        actions: vec![],
        rewards: case.rewards.clone(),
        behavior_probs: vec![1.0; len],
        terminal: case.terminal,
    }
}

fn lambda_value(case: &TrajCase, glog: &[f64], llog: &[f64], t: usize) -> f64 {
    let traj = build_traj(case);
    lambda_return(&traj, &case.values, &view(glog, llog)).unwrap().values[t]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Analytic meta-parameter gradients of the lambda-return match central
    /// finite differences on arbitrary trajectories and logits.
    #[test]
    fn lambda_return_gradients_match_finite_differences(case in traj_case()) {
        let traj = build_traj(&case);
        let res = lambda_return(&traj, &case.values, &view(&case.gamma_logits, &case.lambda_logits)).unwrap();
        let h = 1e-6;
        for slot in 0..NUM_STATES {
            for t in 0..case.rewards.len() {
                let mut plus = case.gamma_logits.clone();
                plus[slot] += h;
                let mut minus = case.gamma_logits.clone();
                minus[slot] -= h;
                let fd = (lambda_value(&case, &plus, &case.lambda_logits, t)
                    - lambda_value(&case, &minus, &case.lambda_logits, t)) / (2.0 * h);
                prop_assert!(rel_err(res.dgamma_at(slot, t), fd) < 1e-6);

                let mut plus = case.lambda_logits.clone();
                plus[slot] += h;
                let mut minus = case.lambda_logits.clone();
                minus[slot] -= h;
                let fd = (lambda_value(&case, &case.gamma_logits, &plus, t)
                    - lambda_value(&case, &case.gamma_logits, &minus, t)) / (2.0 * h);
                prop_assert!(rel_err(res.dlambda_at(slot, t), fd) < 1e-6);
            }
        }
    }

    /// Ratios at or above one are all clipped alike, so any such profile
    /// produces the on-policy output.
    #[test]
    fn clipped_ratios_saturate(case in traj_case(), scales in prop::collection::vec(1.0..10.0f64, 8)) {
        let mut traj = build_traj(&case);
        let len = case.rewards.len();
        traj.actions = vec![0; len];
        traj.behavior_probs = vec![0.1; len];
        let eta = view(&case.gamma_logits, &case.lambda_logits);
        let on_policy: Vec<f64> = traj.behavior_probs.clone();
        let hot: Vec<f64> = (0..len).map(|k| (0.1 * scales[k % scales.len()]).min(1.0)).collect();
        let a = vtrace_return(&traj, &case.values, &eta, &on_policy).unwrap();
        let b = vtrace_return(&traj, &case.values, &eta, &hot).unwrap();
        prop_assert_eq!(a.values, b.values);
    }

    /// The softmax policy is always a distribution: strictly positive,
    /// summing to one within 1e-12.
    #[test]
    fn policy_probs_are_a_distribution(
        weights in prop::collection::vec(-5.0..5.0f64, 3 * 4 + 3),
        obs in prop::collection::vec(-2.0..2.0f64, 3),
    ) {
        let layout = ParamLayout::new(3, 4, false, 0, 0);
        let mut params = AgentParams::<f64>::zeros(layout);
        params.theta_mut().copy_from_slice(&weights);
        let probs = params.policy_probs(&obs, &EtaView::constant(0.5, 0.5)).unwrap();
        let total: f64 = probs.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(probs.iter().all(|&p| p > 0.0));
    }

    /// The meta-parameter embedding is linear: features of a sum of
    /// conditioning inputs are the sum of the features.
    #[test]
    fn embedding_superposition(
        weights in prop::collection::vec(-1.0..1.0f64, 14),
        a in prop::collection::vec(0.01..0.49f64, 2),
        b in prop::collection::vec(0.01..0.49f64, 2),
    ) {
        // feature dim 2 + 4, no policy, embedding 4 x 2: 14 parameters
        let layout = ParamLayout::new(2, 0, true, 4, 2);
        let mut params = AgentParams::<f64>::zeros(layout);
        params.theta_mut().copy_from_slice(&weights);
        let mk = |g: f64, l: f64| EtaView::new(vec![g], vec![l], vec![0.0], vec![0.0], false);
        let obs = [0.0, 0.0];
        let fa = params.features(&obs, &mk(a[0], a[1])).unwrap();
        let fb = params.features(&obs, &mk(b[0], b[1])).unwrap();
        let fsum = params.features(&obs, &mk(a[0] + b[0], a[1] + b[1])).unwrap();
        for i in 2..fa.len() {
            prop_assert!((fa[i] + fb[i] - fsum[i]).abs() < 1e-9);
        }
    }
}
