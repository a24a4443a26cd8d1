//! `ugatlab` is a sim-to-real laboratory for reinforcement-learning traffic
//! signal control.
//!
//! Two parameterizations of the same microscopic intersection simulator play
//! the roles of "simulation" and "reality". Policies trained against the first
//! are grounded through learned forward/inverse dynamics models, with
//! uncertainty gating deciding when a grounded action is trusted.
//!
//! Module map:
//! - [`numnet`]: dense MLPs with exact backprop, losses, Adam, gradient checks.
//! - [`sim`]: the single-intersection simulator and its metrics.
//! - [`dqn`]: DQN agent with replay and a target network.
//! - [`grounding`]: forward/inverse models, uncertainty heads, gating, and the
//!   dynamic grounding rate.
//! - [`experiment`]: end-to-end protocols, evaluation, and gap reports.

pub mod dqn;
pub mod error;
pub mod experiment;
pub mod grounding;
pub mod numnet;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
