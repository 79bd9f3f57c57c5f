//! Markov reward processes in declarative table form, plus the exact
//! dynamic-programming value oracle.

use rand::Rng;

use crate::error::{CoreError, Result};
use crate::scalar::Scalar;

/// One outgoing transition of an MRP state. Rewards are Gaussian with the
/// given mean and standard deviation (zero std = deterministic).
#[derive(Debug, Clone)]
pub struct MrpEdge<S> {
    pub next: usize,
    pub prob: S,
    pub reward_mean: S,
    pub reward_std: S,
}

/// A finite-horizon Markov reward process. Observations are one-hot in the
/// observation group of the state; aliased states share a group.
#[derive(Debug, Clone)]
pub struct MrpSpec<S> {
    pub name: String,
    pub start: usize,
    /// Outgoing edges per state; empty for terminal states.
    pub edges: Vec<Vec<MrpEdge<S>>>,
    pub obs_group: Vec<usize>,
    pub terminal: Vec<bool>,
    pub obs_dim: usize,
}

impl<S: Scalar> MrpSpec<S> {
    pub fn num_states(&self) -> usize {
        self.edges.len()
    }

    pub fn is_terminal(&self, state: usize) -> bool {
        self.terminal[state]
    }

    pub fn observation(&self, state: usize) -> Vec<S> {
        let mut v = vec![S::zero(); self.obs_dim];
        v[self.obs_group[state]] = S::one();
        v
    }

    /// Expected one-step reward out of `state` (zero for terminal states).
    pub fn expected_reward(&self, state: usize) -> S {
        self.edges[state]
            .iter()
            .map(|e| e.prob * e.reward_mean)
            .sum()
    }

    /// Sample the next state and reward.
    pub fn transition<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> (usize, S) {
        let edges = &self.edges[state];
        debug_assert!(!edges.is_empty(), "transition from terminal state {state}");
        let edge = if edges.len() == 1 {
            &edges[0]
        } else {
            let u = S::unit_uniform(rng);
            let mut acc = S::zero();
            let mut chosen = &edges[edges.len() - 1];
            for e in edges {
                acc += e.prob;
                if u < acc {
                    chosen = e;
                    break;
                }
            }
            chosen
        };
        let mut reward = edge.reward_mean;
        if edge.reward_std > S::zero() {
            reward += edge.reward_std * S::standard_normal(rng);
        }
        (edge.next, reward)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_states();
        if self.obs_group.len() != n || self.terminal.len() != n {
            return Err(CoreError::InvalidConfig(format!(
                "mrp `{}` has inconsistent table sizes",
                self.name
            )));
        }
        for (s, edges) in self.edges.iter().enumerate() {
            if self.terminal[s] != edges.is_empty() {
                return Err(CoreError::InvalidConfig(format!(
                    "mrp `{}`: state {s} terminal flag does not match its edges",
                    self.name
                )));
            }
            if edges.is_empty() {
                continue;
            }
            let total: S = edges.iter().map(|e| e.prob).sum();
            if (total - S::one()).abs() > S::of(1e-9) {
                return Err(CoreError::InvalidConfig(format!(
                    "mrp `{}`: state {s} probabilities sum to {total}",
                    self.name
                )));
            }
            for e in edges {
                if e.next >= n || self.obs_group[e.next] >= self.obs_dim {
                    return Err(CoreError::InvalidConfig(format!(
                        "mrp `{}`: state {s} has an out-of-range edge",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// The alternating signal/noise chain: ten states in a line, transitions out
/// of odd-numbered states pay +0.1 deterministically, transitions out of
/// even-numbered states pay a standard normal draw. State ids follow the
/// chain numbering 1..=10; id 0 is the terminal state. Every state has its
/// own one-hot observation.
pub fn build_signal_noise_mrp<S: Scalar>() -> MrpSpec<S> {
    let n = 11;
    let mut edges: Vec<Vec<MrpEdge<S>>> = vec![Vec::new(); n];
    for s in 1..=10usize {
        let next = if s == 10 { 0 } else { s + 1 };
        let (mean, std) = if s % 2 == 1 {
            (S::of(0.1), S::zero())
        } else {
            (S::zero(), S::one())
        };
        edges[s].push(MrpEdge {
            next,
            prob: S::one(),
            reward_mean: mean,
            reward_std: std,
        });
    }
    let spec = MrpSpec {
        name: "signal_noise".into(),
        start: 1,
        edges,
        obs_group: (0..n).collect(),
        terminal: (0..n).map(|s| s == 0).collect(),
        obs_dim: n,
    };
    debug_assert!(spec.validate().is_ok());
    spec
}

/// The fan process: bottleneck states fan out uniformly into `fan_width`
/// aliased states, which fan back into the next bottleneck. Entering fan
/// state i pays a deterministic reward r_i, leaving it pays -r_i; the r_i are
/// evenly spaced in [-1, 1] so every layer is zero-mean. Nine transitions:
/// five fan-outs and four fan-ins, the last fan layer being terminal.
///
/// State ids: bottlenecks 0..5, then layer l (0-based) occupies
/// `5 + l * fan_width ..`. Bottleneck states have distinct observations; each
/// fan layer shares a single observation.
pub fn build_fan_mrp<S: Scalar>(fan_width: usize) -> Result<MrpSpec<S>> {
    if fan_width < 2 {
        return Err(CoreError::FanWidthTooSmall(fan_width));
    }
    let num_bottlenecks = 5;
    let num_layers = 5;
    let n = num_bottlenecks + num_layers * fan_width;
    let fan_state = |layer: usize, i: usize| num_bottlenecks + layer * fan_width + i;
    let reward_of = |i: usize| {
        // evenly spaced in [-1, 1]
        S::of(-1.0 + 2.0 * i as f64 / (fan_width - 1) as f64)
    };

    let mut edges: Vec<Vec<MrpEdge<S>>> = vec![Vec::new(); n];
    let uniform = S::one() / S::of(fan_width as f64);
    for layer in 0..num_layers {
        // fan-out from bottleneck `layer` into the aliased layer
        for i in 0..fan_width {
            edges[layer].push(MrpEdge {
                next: fan_state(layer, i),
                prob: uniform,
                reward_mean: reward_of(i),
                reward_std: S::zero(),
            });
        }
        // fan-in back to the next bottleneck, negating the entry reward;
        // the last layer is terminal and has no outgoing edges
        if layer + 1 < num_bottlenecks {
            for i in 0..fan_width {
                edges[fan_state(layer, i)].push(MrpEdge {
                    next: layer + 1,
                    prob: S::one(),
                    reward_mean: -reward_of(i),
                    reward_std: S::zero(),
                });
            }
        }
    }

    let mut obs_group = vec![0usize; n];
    let mut terminal = vec![false; n];
    for b in 0..num_bottlenecks {
        obs_group[b] = b;
    }
    for layer in 0..num_layers {
        for i in 0..fan_width {
            let s = fan_state(layer, i);
            obs_group[s] = num_bottlenecks + layer;
            terminal[s] = layer == num_layers - 1;
        }
    }
    let spec = MrpSpec {
        name: "fan".into(),
        start: 0,
        edges,
        obs_group,
        terminal,
        obs_dim: num_bottlenecks + num_layers,
    };
    spec.validate()?;
    Ok(spec)
}

/// Exact expected discounted return per state under a fixed reference
/// discount, by iterating the Bellman expectation backup over expected
/// rewards to its fixed point.
#[derive(Debug, Clone)]
pub struct ValueTable<S> {
    pub values: Vec<S>,
    pub gamma_ref: S,
}

impl<S: Scalar> ValueTable<S> {
    /// Max absolute Bellman residual of this table on `spec`.
    pub fn residual(&self, spec: &MrpSpec<S>) -> S {
        let mut worst = S::zero();
        for s in 0..spec.num_states() {
            if spec.is_terminal(s) {
                worst = worst.max(self.values[s].abs());
                continue;
            }
            let mut backup = S::zero();
            for e in &spec.edges[s] {
                backup += e.prob * (e.reward_mean + self.gamma_ref * self.values[e.next]);
            }
            worst = worst.max((backup - self.values[s]).abs());
        }
        worst
    }
}

pub fn true_values<S: Scalar>(spec: &MrpSpec<S>, gamma_ref: S) -> Result<ValueTable<S>> {
    spec.validate()?;
    let n = spec.num_states();
    for s in 0..n {
        if !spec.expected_reward(s).is_finite() {
            return Err(CoreError::NonFinite {
                what: "expected reward",
                index: s,
            });
        }
    }
    let mut values = vec![S::zero(); n];
    let tol = S::of(1e-13);
    // Finite-horizon chains converge within num_states sweeps.
    for _ in 0..(2 * n + 4) {
        let mut next = vec![S::zero(); n];
        let mut delta = S::zero();
        for s in 0..n {
            if spec.is_terminal(s) {
                continue;
            }
            let mut backup = S::zero();
            for e in &spec.edges[s] {
                backup += e.prob * (e.reward_mean + gamma_ref * values[e.next]);
            }
            next[s] = backup;
            delta = delta.max((backup - values[s]).abs());
        }
        values = next;
        if delta <= tol {
            return Ok(ValueTable { values, gamma_ref });
        }
    }
    let table = ValueTable { values, gamma_ref };
    let residual = table.residual(spec).to_f64_lossy();
    if residual <= 1e-10 {
        Ok(table)
    } else {
        Err(CoreError::DpNotConverged { residual })
    }
}

/// Parse an MRP from its declarative table form:
///
/// ```text
/// # comments and blank lines ignored
/// name my_chain
/// start 0
/// obs_dim 3
/// state <id> obs <group> [terminal]
/// edge <from> <to> <prob> <reward_mean> <reward_std>
/// ```
pub fn mrp_from_table<S: Scalar>(text: &str) -> Result<MrpSpec<S>> {
    let mut name = String::from("custom");
    let mut start = 0usize;
    let mut obs_dim = 0usize;
    let mut obs_group: Vec<(usize, usize)> = Vec::new();
    let mut terminals: Vec<usize> = Vec::new();
    let mut edges: Vec<(usize, MrpEdge<S>)> = Vec::new();

    let bad = |line: &str, msg: &str| CoreError::InvalidConfig(format!("mrp table `{line}`: {msg}"));
    for raw in text.lines() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let head = parts.next().unwrap();
        let rest: Vec<&str> = parts.collect();
        let parse_usize = |s: &str| s.parse::<usize>().map_err(|_| bad(line, "bad integer"));
        let parse_f = |s: &str| s.parse::<f64>().map_err(|_| bad(line, "bad number"));
        match head {
            "name" => name = rest.join("_"),
            "start" => start = parse_usize(rest.first().ok_or_else(|| bad(line, "missing value"))?)?,
            "obs_dim" => obs_dim = parse_usize(rest.first().ok_or_else(|| bad(line, "missing value"))?)?,
            "state" => {
                if rest.len() < 3 || rest[1] != "obs" {
                    return Err(bad(line, "expected `state <id> obs <group> [terminal]`"));
                }
                let id = parse_usize(rest[0])?;
                obs_group.push((id, parse_usize(rest[2])?));
                if rest.get(3) == Some(&"terminal") {
                    terminals.push(id);
                }
            }
            "edge" => {
                if rest.len() != 5 {
                    return Err(bad(line, "expected `edge <from> <to> <prob> <mean> <std>`"));
                }
                let from = parse_usize(rest[0])?;
                edges.push((
                    from,
                    MrpEdge {
                        next: parse_usize(rest[1])?,
                        prob: S::of(parse_f(rest[2])?),
                        reward_mean: S::of(parse_f(rest[3])?),
                        reward_std: S::of(parse_f(rest[4])?),
                    },
                ));
            }
            other => return Err(bad(line, &format!("unknown directive `{other}`"))),
        }
    }

    let n = obs_group.iter().map(|&(id, _)| id + 1).max().unwrap_or(0);
    if n == 0 {
        return Err(CoreError::InvalidConfig("mrp table has no states".into()));
    }
    let mut groups = vec![usize::MAX; n];
    for (id, g) in obs_group {
        groups[id] = g;
    }
    if groups.contains(&usize::MAX) {
        return Err(CoreError::InvalidConfig("mrp table skips a state id".into()));
    }
    let mut edge_table: Vec<Vec<MrpEdge<S>>> = vec![Vec::new(); n];
    for (from, e) in edges {
        if from >= n {
            return Err(CoreError::InvalidConfig(format!(
                "mrp table edge from undeclared state {from}"
            )));
        }
        edge_table[from].push(e);
    }
    let mut terminal = vec![false; n];
    for t in terminals {
        terminal[t] = true;
    }
    let spec = MrpSpec {
        name,
        start,
        edges: edge_table,
        obs_group: groups,
        terminal,
        obs_dim,
    };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signal_noise_expected_rewards() {
        let mrp = build_signal_noise_mrp::<f64>();
        assert_eq!(mrp.expected_reward(1), 0.1);
        assert_eq!(mrp.expected_reward(2), 0.0);
        assert_eq!(mrp.expected_reward(9), 0.1);
        assert!(mrp.is_terminal(0));
        assert!(!mrp.is_terminal(10));
    }

    #[test]
    fn signal_noise_true_values_undiscounted() {
        let mrp = build_signal_noise_mrp::<f64>();
        let table = true_values(&mrp, 1.0).unwrap();
        assert!((table.values[1] - 0.5).abs() < 1e-12);
        assert!((table.values[9] - 0.1).abs() < 1e-12);
        assert_eq!(table.values[0], 0.0);
        assert!(table.residual(&mrp) < 1e-10);
    }

    #[test]
    fn fan_layers_are_aliased_and_zero_mean() {
        let mrp = build_fan_mrp::<f64>(5).unwrap();
        assert_eq!(mrp.num_states(), 30);
        // bottlenecks have zero expected value
        let table = true_values(&mrp, 1.0).unwrap();
        for b in 0..5 {
            assert!(table.values[b].abs() < 1e-12);
        }
        // aliasing: every fan state in a layer shares one observation
        for layer in 0..5 {
            let base = 5 + layer * 5;
            for i in 1..5 {
                assert_eq!(mrp.obs_group[base], mrp.obs_group[base + i]);
                assert_eq!(mrp.observation(base), mrp.observation(base + i));
            }
        }
        // value of fan state i after entering is the negated entry reward
        for layer in 0..4 {
            for i in 0..5 {
                let r = -1.0 + 2.0 * i as f64 / 4.0;
                assert!((table.values[5 + layer * 5 + i] + r).abs() < 1e-12);
            }
        }
        // the last layer is terminal
        for i in 0..5 {
            assert!(mrp.is_terminal(5 + 4 * 5 + i));
        }
    }

    #[test]
    fn fan_width_must_be_at_least_two() {
        assert!(matches!(
            build_fan_mrp::<f64>(1),
            Err(CoreError::FanWidthTooSmall(1))
        ));
    }

    #[test]
    fn discounted_dp_obeys_bellman_residual() {
        let mrp = build_signal_noise_mrp::<f64>();
        for gamma in [0.3, 0.9, 0.99] {
            let table = true_values(&mrp, gamma).unwrap();
            assert!(table.residual(&mrp) < 1e-10);
        }
        let fan = build_fan_mrp::<f64>(7).unwrap();
        let table = true_values(&fan, 0.95).unwrap();
        assert!(table.residual(&fan) < 1e-10);
    }

    #[test]
    fn table_round_trip() {
        let text = "\
# two-state chain
name tiny
start 0
obs_dim 2
state 0 obs 0
state 1 obs 1 terminal
edge 0 1 1.0 2.5 0.0
";
        let mrp = mrp_from_table::<f64>(text).unwrap();
        assert_eq!(mrp.name, "tiny");
        assert_eq!(mrp.num_states(), 2);
        assert_eq!(mrp.expected_reward(0), 2.5);
        let table = true_values(&mrp, 1.0).unwrap();
        assert!((table.values[0] - 2.5).abs() < 1e-12);

        assert!(mrp_from_table::<f64>("bogus 1 2").is_err());
        assert!(mrp_from_table::<f64>("state 0 obs 0").is_err()); // no terminal flag matching edges
    }
}
