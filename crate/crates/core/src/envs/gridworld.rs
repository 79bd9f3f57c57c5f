//! A small noisy control MDP: a 5x5 grid with a rewarding goal in the far
//! corner and a handful of distractor cells paying zero-mean Gaussian reward
//! on entry.

use rand::Rng;

use crate::error::Result;
use crate::scalar::Scalar;

pub const GRIDWORLD_EPISODE_CAP: usize = 50;

/// One outgoing transition of an MDP state-action pair.
#[derive(Debug, Clone)]
pub struct MdpEdge<S> {
    pub next: usize,
    pub prob: S,
    pub reward_mean: S,
    pub reward_std: S,
}

/// A finite MDP with one-hot observations and an episode step cap.
#[derive(Debug, Clone)]
pub struct MdpSpec<S> {
    pub name: String,
    pub num_states: usize,
    pub num_actions: usize,
    pub start: usize,
    /// edges[state][action] -> outgoing transitions
    pub edges: Vec<Vec<Vec<MdpEdge<S>>>>,
    pub terminal: Vec<bool>,
    pub episode_cap: usize,
}

impl<S: Scalar> MdpSpec<S> {
    pub fn observation(&self, state: usize) -> Vec<S> {
        let mut v = vec![S::zero(); self.num_states];
        v[state] = S::one();
        v
    }

    pub fn is_terminal(&self, state: usize) -> bool {
        self.terminal[state]
    }

    pub fn transition<R: Rng + ?Sized>(
        &self,
        state: usize,
        action: usize,
        rng: &mut R,
    ) -> (usize, S) {
        let edges = &self.edges[state][action];
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
}

const SIDE: usize = 5;
/// Cells paying N(0, 1) on entry.
const DISTRACTORS: [usize; 5] = [6, 8, 12, 16, 18];

/// Build the 5x5 noisy gridworld: start at cell 0 (top-left), +1 terminal
/// reward on entering cell 24 (bottom-right), four deterministic moves that
/// stay in place at the walls, distractor cells paying zero-mean noise on
/// entry, episodes capped at 50 steps.
pub fn build_noisy_gridworld<S: Scalar>() -> MdpSpec<S> {
    let n = SIDE * SIDE;
    let goal = n - 1;
    let mut edges: Vec<Vec<Vec<MdpEdge<S>>>> = vec![Vec::new(); n];
    for s in 0..n {
        if s == goal {
            continue; // terminal
        }
        let (r, c) = (s / SIDE, s % SIDE);
        let mut per_action = Vec::with_capacity(4);
        for action in 0..4 {
            // 0 = up, 1 = down, 2 = left, 3 = right; wall moves stay put
            let (nr, nc) = match action {
                0 => (r.saturating_sub(1), c),
                1 => ((r + 1).min(SIDE - 1), c),
                2 => (r, c.saturating_sub(1)),
                _ => (r, (c + 1).min(SIDE - 1)),
            };
            let next = nr * SIDE + nc;
            let reward_mean = if next == goal { S::one() } else { S::zero() };
            let reward_std = if next != s && DISTRACTORS.contains(&next) {
                S::one()
            } else {
                S::zero()
            };
            per_action.push(vec![MdpEdge {
                next,
                prob: S::one(),
                reward_mean,
                reward_std,
            }]);
        }
        edges[s] = per_action;
    }
    let mut terminal = vec![false; n];
    terminal[goal] = true;
    MdpSpec {
        name: "gridworld".into(),
        num_states: n,
        num_actions: 4,
        start: 0,
        edges,
        terminal,
        episode_cap: GRIDWORLD_EPISODE_CAP,
    }
}

/// Shortest number of moves from the start to a terminal state, by
/// breadth-first search over the deterministic moves. Test oracle.
pub fn shortest_path_moves<S: Scalar>(spec: &MdpSpec<S>) -> Result<usize> {
    let mut dist = vec![usize::MAX; spec.num_states];
    let mut queue = std::collections::VecDeque::new();
    dist[spec.start] = 0;
    queue.push_back(spec.start);
    while let Some(s) = queue.pop_front() {
        if spec.is_terminal(s) {
            return Ok(dist[s]);
        }
        for a in 0..spec.num_actions {
            for e in &spec.edges[s][a] {
                if dist[e.next] == usize::MAX {
                    dist[e.next] = dist[s] + 1;
                    queue.push_back(e.next);
                }
            }
        }
    }
    Err(crate::error::CoreError::InvalidConfig(format!(
        "mdp `{}` has no reachable terminal state",
        spec.name
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn optimal_path_is_eight_moves() {
        let g = build_noisy_gridworld::<f64>();
        assert_eq!(shortest_path_moves(&g).unwrap(), 8);
    }

    #[test]
    fn optimal_play_expects_unit_return() {
        // Walk right 4 then down 4: expected reward along the way is the goal
        // bonus alone since distractor noise is zero-mean.
        let g = build_noisy_gridworld::<f64>();
        let mut s = g.start;
        let mut expected = 0.0;
        for action in [3, 3, 3, 3, 1, 1, 1, 1] {
            let e = &g.edges[s][action][0];
            expected += e.reward_mean;
            s = e.next;
        }
        assert!(g.is_terminal(s));
        assert_eq!(expected, 1.0);
    }

    #[test]
    fn walls_hold_and_goal_terminates() {
        let g = build_noisy_gridworld::<f64>();
        assert_eq!(g.edges[0][0][0].next, 0); // up from the top row
        assert_eq!(g.edges[0][2][0].next, 0); // left from the first column
        assert!(g.is_terminal(24));
        assert_eq!(g.episode_cap, GRIDWORLD_EPISODE_CAP);
    }
}
