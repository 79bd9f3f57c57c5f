//! Environments: the two illustrative Markov reward processes, a small noisy
//! control MDP, a dynamic-programming value oracle, trajectory sampling and
//! the actor harness with optional policy lag.

mod gridworld;
mod mrp;
mod sampling;

pub use gridworld::{
    build_noisy_gridworld, shortest_path_moves, MdpEdge, MdpSpec, GRIDWORLD_EPISODE_CAP,
};
pub use mrp::{
    build_fan_mrp, build_signal_noise_mrp, mrp_from_table, true_values, MrpEdge, MrpSpec,
    ValueTable,
};
pub use sampling::{sample_mrp_episode, sample_mrp_episode_from, ActorHarness, MdpStream};
