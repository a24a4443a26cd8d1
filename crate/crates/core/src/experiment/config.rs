use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::dqn::DqnConfig;
use crate::grounding::{HeadKind, ModelTrainConfig};
use crate::sim::{DemandSchedule, DemandSource, Scenario, SimConfig};
use crate::{Error, Result};

/// Training protocol as written in config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    Direct,
    Gat,
    Ugat,
    UgatStatic,
}

/// Resolved training protocol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Algorithm {
    /// Train in simulation only, deploy unchanged.
    Direct,
    /// Grounding without uncertainty gating: α stays +∞.
    Gat,
    /// Grounding with α set to the mean logged uncertainty each iteration.
    Ugat,
    /// Grounding with α pinned at a constant.
    UgatStatic(f64),
}

impl Algorithm {
    pub fn is_grounded(self) -> bool {
        !matches!(self, Algorithm::Direct)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Algorithm::Direct => f.write_str("direct"),
            Algorithm::Gat => f.write_str("gat"),
            Algorithm::Ugat => f.write_str("ugat"),
            Algorithm::UgatStatic(a) => write!(f, "ugat_static({a})"),
        }
    }
}

/// Everything one protocol run needs. All fields have defaults, so config
/// files only list what they change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Parameter set of the real-world environment. The simulator always
    /// uses the Default set.
    pub scenario: Scenario,
    pub algorithm: AlgorithmKind,
    /// α for `ugat_static`.
    pub static_alpha: f64,
    /// Inverse-model head for `ugat` and `ugat_static`. Vanilla GAT always
    /// uses a plain softmax head.
    pub head: HeadKind,
    pub seeds: Vec<u64>,
    /// Plain DQN episodes in simulation before grounding starts.
    pub pretrain_episodes: usize,
    /// Grounding iterations.
    pub iterations: usize,
    /// Policy-training episodes per grounding iteration.
    pub epochs: usize,
    /// Decision steps per training episode.
    pub steps: usize,
    /// Rollout episodes collected per environment per iteration.
    pub rollouts: usize,
    /// ε of the rollout policy.
    pub rollout_epsilon: f64,
    /// Training episodes of the direct-transfer baseline.
    pub direct_episodes: usize,
    /// Held-out full-length episodes used for evaluation.
    pub eval_episodes: usize,
    /// Poisson demand rate when no demand file is given.
    pub vehicles_per_hour: f64,
    /// Fixed arrival schedule used for every episode instead of generated
    /// demand.
    pub demand_file: Option<PathBuf>,
    pub sim: SimConfig,
    pub dqn: DqnConfig,
    pub forward_model: ModelTrainConfig,
    pub inverse_model: ModelTrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::V1,
            algorithm: AlgorithmKind::Ugat,
            static_alpha: 0.5,
            head: HeadKind::Edl,
            seeds: vec![1, 2, 3],
            pretrain_episodes: 100,
            iterations: 10,
            epochs: 5,
            steps: 120,
            rollouts: 2,
            rollout_epsilon: 0.05,
            direct_episodes: 300,
            eval_episodes: 5,
            vehicles_per_hour: 2000.0,
            demand_file: None,
            sim: SimConfig::default(),
            dqn: DqnConfig::default(),
            forward_model: ModelTrainConfig {
                epochs: 10,
                ..ModelTrainConfig::default()
            },
            inverse_model: ModelTrainConfig {
                epochs: 10,
                ..ModelTrainConfig::default()
            },
        }
    }
}

impl ExperimentConfig {
    pub fn algorithm(&self) -> Algorithm {
        match self.algorithm {
            AlgorithmKind::Direct => Algorithm::Direct,
            AlgorithmKind::Gat => Algorithm::Gat,
            AlgorithmKind::Ugat => Algorithm::Ugat,
            AlgorithmKind::UgatStatic => Algorithm::UgatStatic(self.static_alpha),
        }
    }

    pub fn with_algorithm(mut self, algorithm: Algorithm) -> Self {
        self.algorithm = match algorithm {
            Algorithm::Direct => AlgorithmKind::Direct,
            Algorithm::Gat => AlgorithmKind::Gat,
            Algorithm::Ugat => AlgorithmKind::Ugat,
            Algorithm::UgatStatic(a) => {
                self.static_alpha = a;
                AlgorithmKind::UgatStatic
            }
        };
        self
    }

    /// Head actually used by the inverse model.
    pub fn effective_head(&self) -> HeadKind {
        match self.algorithm {
            AlgorithmKind::Gat => HeadKind::Softmax,
            _ => self.head,
        }
    }

    /// Directory-friendly name of the protocol, e.g. `ugat-edl`.
    pub fn label(&self) -> String {
        match self.algorithm() {
            Algorithm::Direct => "direct".into(),
            Algorithm::Gat => "gat".into(),
            Algorithm::Ugat => format!("ugat-{}", self.head.label()),
            Algorithm::UgatStatic(a) => format!("ugat-static-{a}-{}", self.head.label()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        if self.steps == 0 || self.eval_episodes == 0 {
            return bad("steps and eval_episodes must be at least 1".into());
        }
        if self.algorithm().is_grounded() {
            if self.iterations == 0 || self.epochs == 0 || self.rollouts == 0 {
                return bad(
                    "iterations, epochs and rollouts must be at least 1 for grounding algorithms"
                        .into(),
                );
            }
            self.effective_head().validate()?;
            self.forward_model.validate()?;
            self.inverse_model.validate()?;
        }
        if let Algorithm::UgatStatic(a) = self.algorithm() {
            if !(a > 0.0) {
                return bad(format!("static_alpha must be positive, got {a}"));
            }
        }
        if !(0.0..=1.0).contains(&self.rollout_epsilon) {
            return bad(format!(
                "rollout_epsilon {} outside [0, 1]",
                self.rollout_epsilon
            ));
        }
        if self.demand_file.is_none() && !(self.vehicles_per_hour >= 0.0) {
            return bad("vehicles_per_hour must be nonnegative".into());
        }
        self.sim.validate()?;
        self.dqn.validate()?;
        Ok(())
    }

    /// Demand for one consumer (`tag`) of seed `seed`.
    pub fn demand(&self, seed: u64, tag: &str) -> Result<DemandSource> {
        Ok(match &self.demand_file {
            Some(path) => DemandSource::Fixed(DemandSchedule::load(path)?),
            None => DemandSource::generated(self.vehicles_per_hour, seed, tag),
        })
    }

    pub fn training_sim_config(&self) -> SimConfig {
        self.sim.with_decisions(self.steps)
    }
}
