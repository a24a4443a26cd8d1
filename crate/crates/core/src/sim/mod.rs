//! Microscopic single-intersection traffic simulator.
//!
//! One [`VehicleParams`] set plays the simulator, another plays reality;
//! everything else (layout, timing, demand) is shared.

mod controller;
mod demand;
mod engine;
mod env;
mod layout;
mod params;
mod state;

pub use controller::FixedCycle;
pub use demand::{Arrival, DemandSchedule, DEMAND_FORMAT_VERSION};
pub use engine::{
    CompletedVehicle, DecisionRecord, MetricsRecord, SafetyLog, Simulator, StepOutcome, Vehicle,
};
pub use env::{DemandSource, Environment, TrafficEnv};
pub use layout::{
    all_red_mask, phase_mask, phase_movements, Approach, IntersectionLayout, Movement, Turn,
    NUM_LANES, NUM_PHASES, STATE_DIM,
};
pub use params::{Scenario, SimConfig, VehicleParams};
pub use state::{TrafficState, LANE_COUNT_SCALE};
