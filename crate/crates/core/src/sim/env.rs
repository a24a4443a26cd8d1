//! Episodic environment wrapper around [`Simulator`].

use rand::Rng;

use super::demand::DemandSchedule;
use super::engine::{MetricsRecord, Simulator, StepOutcome};
use super::layout::IntersectionLayout;
use super::params::{SimConfig, VehicleParams};
use super::state::TrafficState;
use crate::rng::stream;
use crate::Result;

/// Reset/step interface used by the agents.
pub trait Environment {
    /// Start episode `episode`; the index selects the demand draw.
    fn reset_episode(&mut self, episode: u64) -> Result<TrafficState>;
    fn step(&mut self, action: usize) -> Result<StepOutcome>;
}

/// Where episode demand comes from.
#[derive(Debug, Clone)]
pub enum DemandSource {
    /// Fresh Poisson draw per episode from `(seed, tag, episode)`.
    Generated {
        vehicles_per_hour: f64,
        seed: u64,
        tag: String,
    },
    /// The same schedule every episode.
    Fixed(DemandSchedule),
}

impl DemandSource {
    pub fn generated(vehicles_per_hour: f64, seed: u64, tag: &str) -> Self {
        DemandSource::Generated {
            vehicles_per_hour,
            seed,
            tag: tag.to_string(),
        }
    }

    pub fn schedule(&self, episode: u64, duration: f64) -> DemandSchedule {
        match self {
            DemandSource::Generated {
                vehicles_per_hour,
                seed,
                tag,
            } => {
                let mut rng = stream(*seed, tag, episode);
                // Burn one draw so schedules differ from other users of the stream.
                let _: u64 = rng.random();
                DemandSchedule::generate(*vehicles_per_hour, duration, &mut rng)
            }
            DemandSource::Fixed(s) => s.clone(),
        }
    }
}

/// A simulator bound to a parameter set and a demand source.
#[derive(Debug, Clone)]
pub struct TrafficEnv {
    sim: Simulator,
    demand: DemandSource,
}

impl TrafficEnv {
    pub fn new(params: VehicleParams, config: SimConfig, demand: DemandSource) -> Result<Self> {
        Ok(Self {
            sim: Simulator::new(IntersectionLayout::default(), params, config)?,
            demand,
        })
    }

    pub fn sim(&self) -> &Simulator {
        &self.sim
    }

    pub fn metrics(&self) -> Result<MetricsRecord> {
        self.sim.finalize_metrics()
    }
}

impl Environment for TrafficEnv {
    fn reset_episode(&mut self, episode: u64) -> Result<TrafficState> {
        let schedule = self
            .demand
            .schedule(episode, self.sim.config().episode_length);
        Ok(self.sim.reset(schedule))
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome> {
        self.sim.step(action)
    }
}
