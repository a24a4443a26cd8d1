//! Grounded action transformation with uncertainty gating.
//!
//! A forward model learns real-world next states, an inverse model learns
//! which simulator action produces a given next state, and their
//! composition replaces the policy's action during simulator training. The
//! inverse model's uncertainty is compared against an adaptive threshold α
//! ([`GroundingRate`]) to decide whether the replacement is trusted.

mod models;
mod rate;
mod uncertainty;

use rand::RngCore;
use serde::{Deserialize, Serialize};

pub use models::{
    edl_anneal, forward_input, ground, inverse_input, train_forward, train_inverse, ForwardModel,
    ForwardPredictor, HeadKind, InverseModel, InversePredictor, ModelTrainConfig,
    FORWARD_INPUT_DIM, INVERSE_INPUT_DIM,
};
pub use rate::{gate, GroundingRate};
pub use uncertainty::{
    edl_decision, edl_uncertainty, entropy_decision, mean_softmax, normalized_entropy,
    UncertainAction,
};

use crate::dqn::Transition;
use crate::sim::TrafficState;
use crate::Result;

/// Loss traces from one refit of the grounding models.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub forward_loss: Vec<f64>,
    pub inverse_loss: Vec<f64>,
}

/// Anything that can be refit on fresh rollouts and then ground actions.
/// The training loop only talks to this trait, so scripted stand-ins can
/// replace the learned models.
pub trait ActionGrounder {
    /// Refit on the accumulated simulator and real-world transitions.
    fn fit(
        &mut self,
        d_sim: &[Transition],
        d_real: &[Transition],
        rng: &mut dyn RngCore,
    ) -> Result<FitReport>;

    fn ground(
        &self,
        state: &TrafficState,
        action: usize,
        rng: &mut dyn RngCore,
    ) -> Result<UncertainAction>;
}

/// The learned forward/inverse pair.
#[derive(Debug, Clone)]
pub struct LearnedGrounder {
    pub forward: ForwardModel,
    pub inverse: InverseModel,
    forward_epochs: usize,
    inverse_epochs: usize,
}

impl LearnedGrounder {
    pub fn new(
        head: HeadKind,
        forward_cfg: ModelTrainConfig,
        inverse_cfg: ModelTrainConfig,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        let forward_epochs = forward_cfg.epochs;
        let inverse_epochs = inverse_cfg.epochs;
        Ok(Self {
            forward: ForwardModel::new(forward_cfg, rng)?,
            inverse: InverseModel::new(head, inverse_cfg, rng)?,
            forward_epochs,
            inverse_epochs,
        })
    }
}

impl ActionGrounder for LearnedGrounder {
    fn fit(
        &mut self,
        d_sim: &[Transition],
        d_real: &[Transition],
        rng: &mut dyn RngCore,
    ) -> Result<FitReport> {
        Ok(FitReport {
            forward_loss: train_forward(&mut self.forward, d_real, self.forward_epochs, rng)?,
            inverse_loss: train_inverse(&mut self.inverse, d_sim, self.inverse_epochs, rng)?,
        })
    }

    fn ground(
        &self,
        state: &TrafficState,
        action: usize,
        rng: &mut dyn RngCore,
    ) -> Result<UncertainAction> {
        ground(state, action, &self.forward, &self.inverse, rng)
    }
}

/// One row of the grounding audit log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub iteration: usize,
    pub epoch: usize,
    pub step: usize,
    pub state_hash: u64,
    pub policy_action: usize,
    pub grounded_action: usize,
    pub uncertainty: f64,
    pub alpha: f64,
    pub accepted: bool,
}
