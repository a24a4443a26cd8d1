use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Vehicle kinematics defining one environment variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    /// m/s²
    pub accel: f64,
    /// Comfortable braking, m/s².
    pub decel: f64,
    /// Maximum braking, m/s².
    pub emergency_decel: f64,
    /// Seconds a stopped vehicle waits before moving once released.
    pub startup_delay: f64,
    pub max_speed: f64,
    pub vehicle_length: f64,
    pub min_gap: f64,
}

impl VehicleParams {
    fn with_kinematics(accel: f64, decel: f64, emergency_decel: f64, startup_delay: f64) -> Self {
        Self {
            accel,
            decel,
            emergency_decel,
            startup_delay,
            max_speed: 13.89,
            vehicle_length: 5.0,
            min_gap: 2.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.accel > 0.0
            && self.decel > 0.0
            && self.decel <= self.emergency_decel
            && self.startup_delay >= 0.0
            && self.max_speed > 0.0
            && self.vehicle_length > 0.0
            && self.min_gap >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "invalid vehicle parameters {self:?}"
            )))
        }
    }
}

/// The five named parameter sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    Default,
    V1,
    V2,
    V3,
    V4,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::Default,
        Scenario::V1,
        Scenario::V2,
        Scenario::V3,
        Scenario::V4,
    ];

    pub fn params(self) -> VehicleParams {
        match self {
            Scenario::Default => VehicleParams::with_kinematics(2.60, 4.50, 9.00, 0.00),
            // lighter loaded trucks
            Scenario::V1 => VehicleParams::with_kinematics(1.00, 2.50, 6.00, 0.50),
            // heavier loaded trucks
            Scenario::V2 => VehicleParams::with_kinematics(1.00, 2.50, 6.00, 0.75),
            // rain
            Scenario::V3 => VehicleParams::with_kinematics(0.75, 3.50, 6.00, 0.25),
            // snow
            Scenario::V4 => VehicleParams::with_kinematics(0.50, 1.50, 2.00, 0.50),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Default => "Default",
            Scenario::V1 => "V1",
            Scenario::V2 => "V2",
            Scenario::V3 => "V3",
            Scenario::V4 => "V4",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Input(format!("unknown scenario {s:?}")))
    }
}

/// Timing of the simulation and control loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Δt between control decisions, s.
    pub decision_interval: f64,
    pub tick: f64,
    pub yellow_time: f64,
    pub episode_length: f64,
    pub queue_speed_threshold: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            decision_interval: 10.0,
            tick: 1.0,
            yellow_time: 3.0,
            episode_length: 3600.0,
            queue_speed_threshold: 0.1,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.tick > 0.0 && self.decision_interval > 0.0 && self.episode_length > 0.0) {
            return err("tick, decision interval and episode length must be positive");
        }
        let ratio = self.decision_interval / self.tick;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return err("tick must divide the decision interval");
        }
        if !(self.yellow_time >= 0.0 && self.yellow_time < self.decision_interval) {
            return err("yellow time must lie in [0, decision interval)");
        }
        if self.queue_speed_threshold < 0.0 {
            return err("queue speed threshold must be nonnegative");
        }
        Ok(())
    }

    pub fn ticks_per_decision(&self) -> usize {
        (self.decision_interval / self.tick).round() as usize
    }

    pub fn yellow_ticks(&self) -> usize {
        (self.yellow_time / self.tick - 1e-9).ceil().max(0.0) as usize
    }

    pub fn decisions_per_episode(&self) -> usize {
        (self.episode_length / self.decision_interval - 1e-9).ceil() as usize
    }

    /// Same timing with the episode cut to `steps` decisions.
    pub fn with_decisions(mut self, steps: usize) -> Self {
        self.episode_length = steps as f64 * self.decision_interval;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_values_and_validity() {
        let d = Scenario::Default.params();
        assert_eq!(
            (d.accel, d.decel, d.emergency_decel, d.startup_delay),
            (2.60, 4.50, 9.00, 0.00)
        );
        let v4 = Scenario::V4.params();
        assert_eq!(
            (v4.accel, v4.decel, v4.emergency_decel, v4.startup_delay),
            (0.50, 1.50, 2.00, 0.50)
        );
        for s in Scenario::ALL {
            s.params().validate().unwrap();
            assert_eq!(s.name().parse::<Scenario>().unwrap(), s);
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut p = Scenario::Default.params();
        p.decel = 10.0;
        assert!(p.validate().is_err());
        let c = SimConfig {
            tick: 3.0,
            ..SimConfig::default()
        };
        assert!(c.validate().is_err());
        let c = SimConfig {
            yellow_time: 10.0,
            ..SimConfig::default()
        };
        assert!(c.validate().is_err());
        SimConfig::default().validate().unwrap();
        assert_eq!(SimConfig::default().decisions_per_episode(), 360);
        assert_eq!(SimConfig::default().yellow_ticks(), 3);
    }
}
