//! Tick-based microscopic simulation of one signalized intersection.
//!
//! Vehicles follow a speed-capped safe-braking rule: each tick a vehicle
//! picks the largest speed (up to `max_speed`, and at most `accel·tick`
//! above its current speed) from which it could still stop, braking at
//! `decel`, before the nearest obstacle: the rear of its leader minus
//! `min_gap`, or the stop line when its movement is not permitted.
//! Positions advance by `v_new · tick`. Lanes are updated front to back,
//! with each follower seeing its leader's start-of-tick position.

use std::collections::VecDeque;

use log::warn;
use serde::{Deserialize, Serialize};

use super::demand::{Arrival, DemandSchedule};
use super::layout::{all_red_mask, phase_mask, IntersectionLayout, NUM_LANES, NUM_PHASES};
use super::params::{SimConfig, VehicleParams};
use super::state::TrafficState;
use crate::{Error, Result};

/// Distance below which a vehicle counts as having reached its stop point.
const STOP_EPS: f64 = 0.1;
/// Float slack for the min-gap check.
const GAP_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Vehicle {
    pub id: u64,
    pub lane: usize,
    /// Distance travelled from the lane entry, m. The stop line sits at
    /// `lane_length`, the exit at `lane_length + exit_length`.
    pub position: f64,
    pub speed: f64,
    pub spawn_time: f64,
    /// Remaining start-up delay once released from rest.
    pub startup_timer: Option<f64>,
}

/// A vehicle that reached the exit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompletedVehicle {
    pub id: u64,
    pub lane: usize,
    pub spawn_time: f64,
    pub completion_time: f64,
    pub free_flow_time: f64,
}

impl CompletedVehicle {
    pub fn travel_time(&self) -> f64 {
        self.completion_time - self.spawn_time
    }
}

/// What happened over one control interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    /// Clock at the decision instant that closed the interval, s.
    pub time: f64,
    pub action: usize,
    pub reward: f64,
    pub lane_queues: [u32; NUM_LANES],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: TrafficState,
    pub reward: f64,
    pub done: bool,
}

/// Episode-level metrics.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsRecord {
    /// Average travel time of completed vehicles, s (0 when none).
    pub att: f64,
    /// Completed vehicles.
    pub tp: f64,
    /// Mean per-decision reward (≤ 0).
    pub reward_mean: f64,
    /// Mean per-decision total queue, vehicles.
    pub queue_mean: f64,
    /// Mean of `1 − free_flow_time / travel_time` over completed vehicles.
    pub delay: f64,
    /// Mean of `travel_time − free_flow_time`, s.
    pub delay_seconds: f64,
    pub spawned: f64,
}

impl MetricsRecord {
    pub const NAMES: [&'static str; 5] = ["ATT", "TP", "Reward", "Queue", "Delay"];

    /// The five reported metrics in [`NAMES`](Self::NAMES) order.
    pub fn headline(&self) -> [f64; 5] {
        [
            self.att,
            self.tp,
            self.reward_mean,
            self.queue_mean,
            self.delay,
        ]
    }
}

/// Safety bookkeeping; never used to correct vehicle motion.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SafetyLog {
    pub min_gap_violations: u64,
    pub signal_violations: u64,
    /// Smallest bumper-to-bumper gap observed on any lane.
    pub min_observed_gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Signal {
    Green,
    AllRed { remaining_ticks: usize },
}

#[derive(Debug, Clone)]
pub struct Simulator {
    layout: IntersectionLayout,
    params: VehicleParams,
    config: SimConfig,
    demand: DemandSchedule,
    next_arrival: usize,
    backlog: [VecDeque<Arrival>; NUM_LANES],
    /// Per lane, front (closest to the stop line) first.
    lanes: [Vec<Vehicle>; NUM_LANES],
    /// Past the stop line, not yet at the exit.
    crossing: Vec<Vehicle>,
    completed: Vec<CompletedVehicle>,
    decisions: Vec<DecisionRecord>,
    clock: f64,
    ticks: u64,
    phase: usize,
    signal: Signal,
    next_id: u64,
    spawned: u64,
    safety: SafetyLog,
    started: bool,
    done: bool,
}

impl Simulator {
    pub fn new(
        layout: IntersectionLayout,
        params: VehicleParams,
        config: SimConfig,
    ) -> Result<Self> {
        layout.validate()?;
        params.validate()?;
        config.validate()?;
        Ok(Self {
            layout,
            params,
            config,
            demand: DemandSchedule::empty(),
            next_arrival: 0,
            backlog: Default::default(),
            lanes: Default::default(),
            crossing: Vec::new(),
            completed: Vec::new(),
            decisions: Vec::new(),
            clock: 0.0,
            ticks: 0,
            phase: 0,
            signal: Signal::Green,
            next_id: 0,
            spawned: 0,
            safety: SafetyLog {
                min_observed_gap: f64::INFINITY,
                ..SafetyLog::default()
            },
            started: false,
            done: false,
        })
    }

    /// Empty the network, install `demand`, and return the initial state.
    pub fn reset(&mut self, demand: DemandSchedule) -> TrafficState {
        *self = Self {
            demand,
            started: true,
            ..Self::new(self.layout, self.params, self.config).expect("validated at construction")
        };
        self.observe()
    }

    pub fn params(&self) -> &VehicleParams {
        &self.params
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn layout(&self) -> &IntersectionLayout {
        &self.layout
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn phase(&self) -> usize {
        self.phase
    }

    pub fn safety(&self) -> SafetyLog {
        self.safety
    }

    pub fn spawned(&self) -> u64 {
        self.spawned
    }

    /// Vehicles inside the network (on incoming lanes or crossing).
    pub fn active(&self) -> u64 {
        (self.lanes.iter().map(Vec::len).sum::<usize>() + self.crossing.len()) as u64
    }

    pub fn lane_vehicles(&self, lane: usize) -> &[Vehicle] {
        &self.lanes[lane]
    }

    pub fn crossing_vehicles(&self) -> &[Vehicle] {
        &self.crossing
    }

    pub fn completed(&self) -> &[CompletedVehicle] {
        &self.completed
    }

    pub fn decisions(&self) -> &[DecisionRecord] {
        &self.decisions
    }

    /// Place a vehicle directly on a lane, bypassing demand (test setup).
    pub fn place_vehicle(&mut self, lane: usize, position: f64, speed: f64) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        self.spawned += 1;
        self.lanes[lane].push(Vehicle {
            id,
            lane,
            position,
            speed,
            spawn_time: self.clock,
            startup_timer: None,
        });
        self.lanes[lane].sort_by(|a, b| b.position.total_cmp(&a.position));
        id
    }

    pub fn observe(&self) -> TrafficState {
        let mut lane_counts = [0u32; NUM_LANES];
        for (c, lane) in lane_counts.iter_mut().zip(&self.lanes) {
            *c = lane.len() as u32;
        }
        TrafficState {
            lane_counts,
            phase: self.phase,
        }
    }

    /// Vehicles per lane moving slower than the queue threshold.
    pub fn lane_queues(&self) -> [u32; NUM_LANES] {
        let mut q = [0u32; NUM_LANES];
        for (q, lane) in q.iter_mut().zip(&self.lanes) {
            *q = lane
                .iter()
                .filter(|v| v.speed < self.config.queue_speed_threshold)
                .count() as u32;
        }
        q
    }

    pub fn step(&mut self, action: usize) -> Result<StepOutcome> {
        self.step_observed(action, |_| {})
    }

    /// [`step`](Self::step), calling `after_tick` once after every tick.
    pub fn step_observed(
        &mut self,
        action: usize,
        mut after_tick: impl FnMut(&Simulator),
    ) -> Result<StepOutcome> {
        if !self.started {
            return Err(Error::Lifecycle("step before reset".into()));
        }
        if self.done {
            return Err(Error::Lifecycle("step after episode end".into()));
        }
        if action >= NUM_PHASES {
            return Err(Error::Input(format!(
                "phase {action} out of range 0..{NUM_PHASES}"
            )));
        }
        if action != self.phase {
            let yellow = self.config.yellow_ticks();
            self.signal = if yellow > 0 {
                Signal::AllRed {
                    remaining_ticks: yellow,
                }
            } else {
                Signal::Green
            };
            self.phase = action;
        }
        for _ in 0..self.config.ticks_per_decision() {
            self.tick();
            after_tick(self);
        }
        let lane_queues = self.lane_queues();
        let reward = -f64::from(lane_queues.iter().sum::<u32>());
        self.decisions.push(DecisionRecord {
            time: self.clock,
            action,
            reward,
            lane_queues,
        });
        self.done = self.clock >= self.config.episode_length - 1e-9;
        Ok(StepOutcome {
            state: self.observe(),
            reward,
            done: self.done,
        })
    }

    pub fn finalize_metrics(&self) -> Result<MetricsRecord> {
        if !self.done {
            return Err(Error::Lifecycle(
                "metrics requested before episode end".into(),
            ));
        }
        let n = self.completed.len() as f64;
        let mean_over = |f: &dyn Fn(&CompletedVehicle) -> f64| {
            if self.completed.is_empty() {
                0.0
            } else {
                self.completed.iter().map(f).sum::<f64>() / n
            }
        };
        let d = self.decisions.len() as f64;
        let reward_mean = self.decisions.iter().map(|r| r.reward).sum::<f64>() / d;
        let queue_mean = self
            .decisions
            .iter()
            .map(|r| f64::from(r.lane_queues.iter().sum::<u32>()))
            .sum::<f64>()
            / d;
        Ok(MetricsRecord {
            att: mean_over(&|v| v.travel_time()),
            tp: n,
            reward_mean,
            queue_mean,
            delay: mean_over(&|v| 1.0 - v.free_flow_time / v.travel_time()),
            delay_seconds: mean_over(&|v| v.travel_time() - v.free_flow_time),
            spawned: self.spawned as f64,
        })
    }

    fn permitted(&self) -> [bool; NUM_LANES] {
        match self.signal {
            Signal::Green => phase_mask(self.phase),
            Signal::AllRed { .. } => all_red_mask(),
        }
    }

    fn free_flow_time(&self) -> f64 {
        self.layout.route_length() / self.params.max_speed
    }

    /// Largest speed from which the vehicle can still stop within `dist`
    /// after moving one tick: v·τ + v²/(2b) = dist.
    fn safe_speed(&self, dist: f64) -> f64 {
        if dist < STOP_EPS {
            return 0.0;
        }
        let b = self.params.decel;
        let tau = self.config.tick;
        b * (-tau + (tau * tau + 2.0 * dist / b).sqrt())
    }

    fn next_speed(&self, v: f64, allowed: f64, startup_timer: &mut Option<f64>) -> f64 {
        let p = &self.params;
        let tau = self.config.tick;
        if v == 0.0 {
            if allowed <= 0.0 {
                *startup_timer = None;
                return 0.0;
            }
            let timer = startup_timer.get_or_insert(p.startup_delay);
            let moving_time = (tau - *timer).max(0.0);
            *timer = (*timer - tau).max(0.0);
            let v_new = (p.accel * moving_time).min(p.max_speed).min(allowed);
            if v_new > 0.0 {
                *startup_timer = None;
            }
            return v_new;
        }
        let desired = (v + p.accel * tau).min(p.max_speed);
        if allowed >= desired {
            return desired;
        }
        let needed_decel = (v - allowed) / tau;
        if needed_decel <= p.decel {
            allowed.max(0.0)
        } else {
            (v - needed_decel.min(p.emergency_decel) * tau).max(0.0)
        }
    }

    fn insert_arrivals(&mut self) {
        let arrivals = self.demand.arrivals();
        while self.next_arrival < arrivals.len()
            && arrivals[self.next_arrival].time <= self.clock + 1e-9
        {
            let a = arrivals[self.next_arrival];
            self.backlog[a.movement.lane()].push_back(a);
            self.next_arrival += 1;
        }
        let permitted = self.permitted();
        for lane in 0..NUM_LANES {
            if self.backlog[lane].is_empty() {
                continue;
            }
            let space = match self.lanes[lane].last() {
                Some(last) => last.position - self.params.vehicle_length - self.params.min_gap,
                None => f64::INFINITY,
            };
            if space < 0.0 {
                continue;
            }
            let mut room = space;
            if !permitted[lane] {
                room = room.min(self.layout.lane_length);
            }
            let speed = (2.0 * self.params.decel * room)
                .sqrt()
                .min(self.params.max_speed);
            self.backlog[lane].pop_front();
            let id = self.next_id;
            self.next_id += 1;
            self.spawned += 1;
            self.lanes[lane].push(Vehicle {
                id,
                lane,
                position: 0.0,
                speed,
                spawn_time: self.clock,
                startup_timer: None,
            });
        }
    }

    fn complete(&mut self, v: &Vehicle, prev_position: f64) {
        let exit = self.layout.route_length();
        let moved = v.position - prev_position;
        let frac = if moved > 0.0 {
            (exit - prev_position) / moved
        } else {
            1.0
        };
        self.completed.push(CompletedVehicle {
            id: v.id,
            lane: v.lane,
            spawn_time: v.spawn_time,
            completion_time: self.clock + frac.clamp(0.0, 1.0) * self.config.tick,
            free_flow_time: self.free_flow_time(),
        });
    }

    fn tick(&mut self) {
        self.insert_arrivals();
        let permitted = self.permitted();
        let tau = self.config.tick;
        let lane_length = self.layout.lane_length;
        let exit = self.layout.route_length();

        // Crossing vehicles have no conflicts; they accelerate freely.
        let crossing = std::mem::take(&mut self.crossing);
        for mut v in crossing {
            let prev = v.position;
            v.speed = (v.speed + self.params.accel * tau).min(self.params.max_speed);
            v.position += v.speed * tau;
            if v.position >= exit {
                self.complete(&v, prev);
            } else {
                self.crossing.push(v);
            }
        }

        for lane in 0..NUM_LANES {
            let mut vehicles = std::mem::take(&mut self.lanes[lane]);
            let mut kept: Vec<Vehicle> = Vec::with_capacity(vehicles.len());
            // Followers react to where their leader was at the start of the
            // tick, so a queue discharges one vehicle per tick at most.
            let mut leader_rear: Option<f64> = None;
            for mut v in vehicles.drain(..) {
                let mut obstacle = f64::INFINITY;
                if let Some(rear) = leader_rear {
                    obstacle = rear - self.params.min_gap;
                }
                leader_rear = Some(v.position - self.params.vehicle_length);
                if !permitted[lane] && v.position <= lane_length {
                    obstacle = obstacle.min(lane_length);
                }
                let allowed = if obstacle.is_finite() {
                    self.safe_speed(obstacle - v.position)
                } else {
                    f64::INFINITY
                };
                let mut timer = v.startup_timer;
                v.speed = self.next_speed(v.speed, allowed, &mut timer);
                v.startup_timer = timer;
                let prev = v.position;
                v.position += v.speed * tau;
                if v.position > lane_length {
                    if !permitted[lane] {
                        self.safety.signal_violations += 1;
                        warn!(
                            "vehicle {} crossed a red stop line on lane {lane} at t={} (speed {:.2})",
                            v.id, self.clock, v.speed
                        );
                    }
                    if v.position >= exit {
                        self.complete(&v, prev);
                    } else {
                        self.crossing.push(v);
                    }
                } else {
                    kept.push(v);
                }
            }
            self.lanes[lane] = kept;
        }

        self.clock = (self.ticks + 1) as f64 * tau;
        self.ticks += 1;
        if let Signal::AllRed { remaining_ticks } = self.signal {
            self.signal = if remaining_ticks <= 1 {
                Signal::Green
            } else {
                Signal::AllRed {
                    remaining_ticks: remaining_ticks - 1,
                }
            };
        }
        self.audit_gaps();
    }

    fn audit_gaps(&mut self) {
        for lane in &self.lanes {
            for pair in lane.windows(2) {
                let gap = pair[0].position - self.params.vehicle_length - pair[1].position;
                self.safety.min_observed_gap = self.safety.min_observed_gap.min(gap);
                if gap < self.params.min_gap - GAP_SLACK {
                    self.safety.min_gap_violations += 1;
                    warn!(
                        "min-gap violation: gap {gap:.4} between {} and {}",
                        pair[0].id, pair[1].id
                    );
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::layout::{Approach, Movement, Turn};
    use crate::sim::params::Scenario;

    fn sim(scenario: Scenario) -> Simulator {
        Simulator::new(
            IntersectionLayout::default(),
            scenario.params(),
            SimConfig::default(),
        )
        .unwrap()
    }

    fn ns_through_lane() -> usize {
        Movement {
            approach: Approach::North,
            turn: Turn::Through,
        }
        .lane()
    }

    #[test]
    fn reset_gives_empty_state_in_phase_zero() {
        let mut s = sim(Scenario::Default);
        let st = s.reset(DemandSchedule::empty());
        assert_eq!(st.lane_counts, [0; 12]);
        assert_eq!(st.phase_onehot(), [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn lifecycle_errors() {
        let mut s = sim(Scenario::Default);
        assert!(matches!(s.step(0), Err(Error::Lifecycle(_))));
        s.reset(DemandSchedule::empty());
        assert!(matches!(s.step(8), Err(Error::Input(_))));
        assert!(matches!(s.finalize_metrics(), Err(Error::Lifecycle(_))));
        while !s.step(0).unwrap().done {}
        assert!(matches!(s.step(0), Err(Error::Lifecycle(_))));
    }

    #[test]
    fn arrival_at_zero_is_present_after_first_tick() {
        let mut s = sim(Scenario::Default);
        let m = Movement::from_lane(4);
        s.reset(
            DemandSchedule::new(vec![Arrival {
                time: 0.0,
                movement: m,
            }])
            .unwrap(),
        );
        s.tick();
        assert_eq!(s.observe().lane_counts[4], 1);
        assert_eq!(s.spawned(), 1);
        // Inserted at full speed on an empty lane: 13.89 m after one second.
        assert_eq!(s.lane_vehicles(4)[0].position, 13.89);
    }

    #[test]
    fn empty_network_reward_is_zero_and_stopped_vehicle_costs_one() {
        let mut s = sim(Scenario::Default);
        s.reset(DemandSchedule::empty());
        assert_eq!(s.step(0).unwrap().reward, 0.0);
        // Phase 2 (EW through) keeps the north-through lane red.
        let lane = ns_through_lane();
        s.place_vehicle(lane, 300.0, 0.0);
        let out = s.step(2).unwrap();
        assert_eq!(out.reward, -1.0);
        assert_eq!(s.lane_vehicles(lane)[0].position, 300.0);
    }

    #[test]
    fn start_from_rest_under_green_follows_kinematics() {
        let mut s = sim(Scenario::Default);
        s.reset(DemandSchedule::empty());
        let lane = ns_through_lane();
        s.place_vehicle(lane, 100.0, 0.0);
        s.tick();
        let v = &s.lane_vehicles(lane)[0];
        assert_eq!(v.speed, 2.60);
        assert_eq!(v.position, 100.0 + 2.60);
        s.tick();
        let v = &s.lane_vehicles(lane)[0];
        assert!((v.speed - 5.20).abs() < 1e-12);
        assert!((v.position - (102.6 + 5.2)).abs() < 1e-12);
    }

    #[test]
    fn startup_delay_consumes_part_of_the_first_tick() {
        let mut s = sim(Scenario::V1);
        s.reset(DemandSchedule::empty());
        let lane = ns_through_lane();
        s.place_vehicle(lane, 300.0, 0.0);
        // Red under phase 2 for one decision, then switch to phase 0.
        s.step(2).unwrap();
        assert_eq!(s.lane_vehicles(lane)[0].speed, 0.0);
        // Switch to phase 0: three all-red ticks, then green.
        s.phase = 0;
        s.signal = Signal::AllRed { remaining_ticks: 3 };
        for _ in 0..3 {
            s.tick();
            assert_eq!(s.lane_vehicles(lane)[0].speed, 0.0);
        }
        s.tick();
        // 0.5 s of the first green tick is spent in start-up delay.
        let v = &s.crossing_vehicles()[0];
        assert!((v.speed - 0.5).abs() < 1e-12, "{}", v.speed);
    }

    #[test]
    fn red_light_far_vehicle_cruises() {
        let mut s = sim(Scenario::Default);
        s.reset(DemandSchedule::empty());
        s.step(2).unwrap();
        let lane = ns_through_lane();
        s.place_vehicle(lane, 0.0, 13.89);
        s.tick();
        assert_eq!(s.lane_vehicles(lane)[0].speed, 13.89);
    }

    #[test]
    fn unimpeded_vehicle_has_free_flow_travel_time() {
        let mut cfg = SimConfig::default();
        cfg.episode_length = 100.0;
        let mut s = Simulator::new(
            IntersectionLayout::default(),
            Scenario::Default.params(),
            cfg,
        )
        .unwrap();
        let m = Movement::from_lane(ns_through_lane());
        s.reset(
            DemandSchedule::new(vec![Arrival {
                time: 0.0,
                movement: m,
            }])
            .unwrap(),
        );
        while !s.step(0).unwrap().done {}
        let metrics = s.finalize_metrics().unwrap();
        assert_eq!(metrics.tp, 1.0);
        let ff = 330.0 / 13.89;
        assert!((metrics.att - ff).abs() < 1e-9, "{} vs {ff}", metrics.att);
        assert!(metrics.delay.abs() < 1e-12);
    }

    #[test]
    fn no_vehicles_gives_zero_metrics() {
        let mut cfg = SimConfig::default();
        cfg.episode_length = 50.0;
        let mut s = Simulator::new(
            IntersectionLayout::default(),
            Scenario::Default.params(),
            cfg,
        )
        .unwrap();
        s.reset(DemandSchedule::empty());
        while !s.step(3).unwrap().done {}
        let m = s.finalize_metrics().unwrap();
        assert_eq!((m.att, m.tp, m.delay, m.reward_mean), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn observe_counts_placed_vehicles() {
        let mut s = sim(Scenario::Default);
        s.reset(DemandSchedule::empty());
        for p in [10.0, 50.0, 90.0] {
            s.place_vehicle(0, p, 0.0);
        }
        assert_eq!(s.observe().lane_counts[0], 3);
    }
}
