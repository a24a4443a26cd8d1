//! Deep Q-learning: ε-greedy control, uniform replay, and a periodically
//! synchronized target network.

mod agent;
mod replay;

pub use agent::{
    act, learn, sync_target, train_policy, DqnAgent, DqnConfig, EpisodeLog, StepContext,
};
pub use replay::{ReplayBuffer, Transition};
