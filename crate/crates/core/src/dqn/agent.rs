use rand::Rng;
use serde::{Deserialize, Serialize};

use super::replay::{ReplayBuffer, Transition};
use crate::numnet::{
    adam_step, argmax, Activation, AdamConfig, AdamState, Gradients, MlpModel, MlpSpec, Mode,
};
use crate::sim::{Environment, TrafficState, NUM_PHASES, STATE_DIM};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DqnConfig {
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Decision steps over which ε decays linearly.
    pub epsilon_decay_steps: u64,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Learn steps between target-network syncs.
    pub target_sync_period: u64,
    pub hidden_sizes: Vec<usize>,
    pub replay_capacity: usize,
    /// Rewards are multiplied by this before entering TD targets.
    pub reward_scale: f64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_steps: 5000,
            batch_size: 64,
            learning_rate: 1e-3,
            target_sync_period: 500,
            hidden_sizes: vec![64, 64],
            replay_capacity: 10_000,
            reward_scale: 0.05,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("dqn: {m}")));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) || !(0.0..=1.0).contains(&self.epsilon_end) {
            return bad("epsilon values must lie in [0, 1]");
        }
        if self.epsilon_end > self.epsilon_start {
            return bad("epsilon_end must not exceed epsilon_start");
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return bad("batch size must be positive and fit in the replay buffer");
        }
        if self.target_sync_period == 0 || !(self.learning_rate > 0.0) || !(self.reward_scale > 0.0)
        {
            return bad("sync period, learning rate and reward scale must be positive");
        }
        Ok(())
    }

    pub fn network_spec(&self) -> MlpSpec {
        let mut sizes = vec![STATE_DIM];
        sizes.extend(&self.hidden_sizes);
        sizes.push(NUM_PHASES);
        MlpSpec::new(sizes, Activation::Identity)
    }

    pub fn epsilon_at(&self, decision_step: u64) -> f64 {
        if self.epsilon_decay_steps == 0 {
            return self.epsilon_end;
        }
        let frac = (decision_step as f64 / self.epsilon_decay_steps as f64).min(1.0);
        self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)
    }
}

/// ε-greedy choice over `q_values`; greedy ties go to the lowest index.
pub fn act<R: Rng + ?Sized>(q_values: &[f64], epsilon: f64, rng: &mut R) -> usize {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        rng.random_range(0..q_values.len())
    } else {
        argmax(q_values)
    }
}

/// One Adam step on the mean squared TD error of a uniform minibatch.
/// Returns the minibatch loss.
pub fn learn<R: Rng + ?Sized>(
    buffer: &ReplayBuffer,
    online: &mut MlpModel,
    target: &MlpModel,
    optimizer: &mut AdamState,
    config: &DqnConfig,
    rng: &mut R,
) -> Result<f64> {
    if buffer.len() < config.batch_size {
        return Err(Error::NotReady {
            have: buffer.len(),
            need: config.batch_size,
        });
    }
    let batch = buffer.sample(config.batch_size, rng);
    let n = batch.len() as f64;
    let mut grads = Gradients::zeros_like(online);
    let mut loss = 0.0;
    for t in batch {
        let y = td_target(t, target, config)?;
        let (q, cache) = online.forward(&t.state.features(), Mode::Infer, rng)?;
        let err = q[t.action] - y;
        loss += err * err;
        let mut g = vec![0.0; q.len()];
        g[t.action] = 2.0 * err / n;
        online.accumulate_backward(&cache, &g, &mut grads)?;
    }
    adam_step(online, &grads, optimizer)?;
    Ok(loss / n)
}

fn td_target(t: &Transition, target: &MlpModel, config: &DqnConfig) -> Result<f64> {
    let r = t.reward * config.reward_scale;
    if t.terminal {
        return Ok(r);
    }
    let next = target.predict(&t.next_state.features())?;
    let best = next.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(r + config.gamma * best)
}

/// Copy online parameters into the target network.
pub fn sync_target(online: &MlpModel, target: &mut MlpModel) -> Result<()> {
    target.copy_params_from(online)
}

/// Passed to the per-step executor hook during training.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    pub episode: u64,
    pub step: usize,
    pub state: &'a TrafficState,
    pub policy_action: usize,
}

/// Per-episode training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: u64,
    pub total_return: f64,
    /// Mean TD loss over the learn steps taken (0 if none).
    pub mean_loss: f64,
    /// ε at the end of the episode.
    pub epsilon: f64,
    pub steps: usize,
    pub policy_actions: Vec<usize>,
    pub executed_actions: Vec<usize>,
}

/// Online/target networks, optimizer, replay, and schedule counters.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub config: DqnConfig,
    online: MlpModel,
    target: MlpModel,
    optimizer: AdamState,
    buffer: ReplayBuffer,
    learn_steps: u64,
    decision_steps: u64,
    episodes: u64,
}

impl DqnAgent {
    pub fn new<R: Rng + ?Sized>(config: DqnConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let online = MlpModel::new(config.network_spec(), rng)?;
        let target = online.clone();
        let optimizer = AdamState::new(
            &online,
            AdamConfig {
                learning_rate: config.learning_rate,
                ..AdamConfig::default()
            },
        );
        let buffer = ReplayBuffer::new(config.replay_capacity);
        Ok(Self {
            config,
            online,
            target,
            optimizer,
            buffer,
            learn_steps: 0,
            decision_steps: 0,
            episodes: 0,
        })
    }

    pub fn online(&self) -> &MlpModel {
        &self.online
    }

    pub fn target(&self) -> &MlpModel {
        &self.target
    }

    pub fn online_mut(&mut self) -> &mut MlpModel {
        &mut self.online
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn learn_steps(&self) -> u64 {
        self.learn_steps
    }

    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    pub fn epsilon(&self) -> f64 {
        self.config.epsilon_at(self.decision_steps)
    }

    pub fn q_values(&self, state: &TrafficState) -> Vec<f64> {
        self.online
            .predict(&state.features())
            .expect("state dimension is fixed")
    }

    pub fn greedy(&self, state: &TrafficState) -> usize {
        argmax(&self.q_values(state))
    }

    pub fn act<R: Rng + ?Sized>(&self, state: &TrafficState, epsilon: f64, rng: &mut R) -> usize {
        act(&self.q_values(state), epsilon, rng)
    }

    pub fn remember(&mut self, t: Transition) {
        self.buffer.push(t);
    }

    /// One learn step plus target sync when the period elapses.
    pub fn learn<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<f64> {
        let loss = learn(
            &self.buffer,
            &mut self.online,
            &self.target,
            &mut self.optimizer,
            &self.config,
            rng,
        )?;
        self.learn_steps += 1;
        if self.learn_steps % self.config.target_sync_period == 0 {
            sync_target(&self.online, &mut self.target)?;
        }
        Ok(loss)
    }

    /// Run one ε-greedy training episode of at most `max_steps` decisions.
    /// `execute` maps the policy's action to the action actually applied to
    /// the environment; the stored transition keeps the policy's action.
    pub fn train_episode<E, R, X>(
        &mut self,
        env: &mut E,
        max_steps: Option<usize>,
        rng: &mut R,
        mut execute: X,
    ) -> Result<EpisodeLog>
    where
        E: Environment + ?Sized,
        R: Rng + ?Sized,
        X: FnMut(StepContext<'_>) -> Result<usize>,
    {
        let episode = self.episodes;
        let mut state = env.reset_episode(episode)?;
        let mut log = EpisodeLog {
            episode,
            total_return: 0.0,
            mean_loss: 0.0,
            epsilon: self.epsilon(),
            steps: 0,
            policy_actions: Vec::new(),
            executed_actions: Vec::new(),
        };
        let mut losses = 0.0;
        let mut learned = 0usize;
        loop {
            let eps = self.epsilon();
            let action = self.act(&state, eps, rng);
            let executed = execute(StepContext {
                episode,
                step: log.steps,
                state: &state,
                policy_action: action,
            })?;
            let out = env.step(executed)?;
            self.decision_steps += 1;
            log.steps += 1;
            log.total_return += out.reward;
            log.policy_actions.push(action);
            log.executed_actions.push(executed);
            self.remember(Transition {
                state,
                action,
                reward: out.reward,
                next_state: out.state,
                // Episodes end on a time limit, which is not a terminal state.
                terminal: false,
            });
            if self.buffer.len() >= self.config.batch_size {
                losses += self.learn(rng)?;
                learned += 1;
            }
            state = out.state;
            if out.done || max_steps.is_some_and(|m| log.steps >= m) {
                break;
            }
        }
        self.episodes += 1;
        log.mean_loss = if learned > 0 {
            losses / learned as f64
        } else {
            0.0
        };
        log.epsilon = self.epsilon();
        Ok(log)
    }
}

/// Train for `episodes` full episodes without action grounding.
pub fn train_policy<E, R>(
    agent: &mut DqnAgent,
    env: &mut E,
    episodes: usize,
    rng: &mut R,
) -> Result<Vec<EpisodeLog>>
where
    E: Environment + ?Sized,
    R: Rng + ?Sized,
{
    (0..episodes)
        .map(|_| agent.train_episode(env, None, rng, |ctx| Ok(ctx.policy_action)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::sim::StepOutcome;

    fn state(lane0: u32, phase: usize) -> TrafficState {
        let mut s = TrafficState::empty(phase);
        s.lane_counts[0] = lane0;
        s
    }

    #[test]
    fn greedy_picks_argmax_with_low_tie_break() {
        let mut r = stream(1, "act", 0);
        let mut q = vec![0.0; 8];
        q[7] = 5.0;
        assert_eq!(act(&q, 0.0, &mut r), 7);
        let mut q = vec![0.0; 8];
        q[2] = 1.0;
        q[5] = 1.0;
        assert_eq!(act(&q, 0.0, &mut r), 2);
    }

    #[test]
    fn greedy_choice_is_shift_invariant() {
        let mut r = stream(2, "act", 0);
        use rand::Rng;
        for _ in 0..200 {
            let q: Vec<f64> = (0..8).map(|_| r.random_range(-5.0..5.0)).collect();
            let c = r.random_range(-100.0..100.0);
            let shifted: Vec<f64> = q.iter().map(|v| v + c).collect();
            assert_eq!(act(&q, 0.0, &mut r), act(&shifted, 0.0, &mut r));
        }
    }

    #[test]
    fn full_exploration_is_uniform() {
        let mut r = stream(3, "act", 0);
        let q = vec![0.0; 8];
        let n = 100_000;
        let mut counts = [0usize; 8];
        for _ in 0..n {
            counts[act(&q, 1.0, &mut r)] += 1;
        }
        let p = 1.0 / 8.0;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    fn small_config() -> DqnConfig {
        DqnConfig {
            batch_size: 1,
            hidden_sizes: vec![16],
            replay_capacity: 16,
            learning_rate: 1e-2,
            reward_scale: 1.0,
            ..DqnConfig::default()
        }
    }

    #[test]
    fn underfilled_buffer_is_not_ready() {
        let cfg = DqnConfig::default();
        let mut agent = DqnAgent::new(cfg, &mut stream(4, "q", 0)).unwrap();
        assert!(matches!(
            agent.learn(&mut stream(4, "q", 1)),
            Err(Error::NotReady { have: 0, need: 64 })
        ));
    }

    #[test]
    fn zero_discount_regresses_to_reward() {
        let cfg = DqnConfig {
            gamma: 0.0,
            ..small_config()
        };
        let mut r = stream(5, "q", 0);
        let mut agent = DqnAgent::new(cfg, &mut r).unwrap();
        let s = state(10, 2);
        agent.remember(Transition {
            state: s,
            action: 3,
            reward: -0.7,
            next_state: state(30, 3),
            terminal: false,
        });
        for _ in 0..3000 {
            agent.learn(&mut r).unwrap();
        }
        assert!((agent.q_values(&s)[3] + 0.7).abs() < 1e-3);
    }

    #[test]
    fn terminal_target_ignores_next_state() {
        let cfg = small_config();
        let mut r = stream(6, "q", 0);
        let target = MlpModel::new(cfg.network_spec(), &mut r).unwrap();
        let t = Transition {
            state: state(1, 0),
            action: 0,
            reward: -2.0,
            next_state: state(40, 5),
            terminal: true,
        };
        assert_eq!(td_target(&t, &target, &cfg).unwrap(), -2.0);
        let t2 = Transition {
            next_state: state(3, 1),
            ..t
        };
        assert_eq!(td_target(&t2, &target, &cfg).unwrap(), -2.0);
    }

    #[test]
    fn learn_never_touches_the_target_network() {
        let cfg = DqnConfig {
            target_sync_period: 1_000_000,
            ..small_config()
        };
        let mut r = stream(7, "q", 0);
        let mut agent = DqnAgent::new(cfg, &mut r).unwrap();
        let before = agent.target().clone();
        agent.remember(Transition {
            state: state(1, 0),
            action: 1,
            reward: -1.0,
            next_state: state(2, 1),
            terminal: false,
        });
        for _ in 0..10 {
            agent.learn(&mut r).unwrap();
        }
        assert_eq!(agent.target(), &before);
        assert_ne!(agent.online(), &before);
        sync_target(&agent.online.clone(), &mut agent.target).unwrap();
        let x = state(7, 4).features();
        assert_eq!(
            agent.online().predict(&x).unwrap(),
            agent.target().predict(&x).unwrap()
        );
    }

    #[test]
    fn sync_rejects_mismatched_specs() {
        let mut r = stream(8, "q", 0);
        let a = MlpModel::new(small_config().network_spec(), &mut r).unwrap();
        let mut b = MlpModel::new(DqnConfig::default().network_spec(), &mut r).unwrap();
        assert!(sync_target(&a, &mut b).is_err());
    }

    #[test]
    fn td_target_is_fixed_within_a_call_when_online_changes() {
        // The target value depends only on the target network.
        let cfg = small_config();
        let mut r = stream(9, "q", 0);
        let mut agent = DqnAgent::new(cfg.clone(), &mut r).unwrap();
        let t = Transition {
            state: state(1, 0),
            action: 1,
            reward: -1.0,
            next_state: state(2, 1),
            terminal: false,
        };
        let y0 = td_target(&t, agent.target(), &cfg).unwrap();
        agent.online_mut().set_param(0, 123.0);
        assert_eq!(td_target(&t, agent.target(), &cfg).unwrap(), y0);
    }

    /// Two states; action 0 stays (reward 0 from A, −1 from B), action 1
    /// switches (reward −1 from A, 0 from B). Value iteration is the oracle.
    struct Chain {
        at_b: bool,
    }

    fn chain_state(at_b: bool) -> TrafficState {
        state(if at_b { 10 } else { 0 }, 0)
    }

    impl Environment for Chain {
        fn reset_episode(&mut self, episode: u64) -> Result<TrafficState> {
            self.at_b = episode % 2 == 1;
            Ok(chain_state(self.at_b))
        }

        fn step(&mut self, action: usize) -> Result<StepOutcome> {
            let reward = match (self.at_b, action) {
                (false, 0) | (true, 1) => 0.0,
                (false, _) | (true, _) => -1.0,
            };
            if action == 1 {
                self.at_b = !self.at_b;
            } else if action > 1 {
                self.at_b = true;
            }
            Ok(StepOutcome {
                state: chain_state(self.at_b),
                reward,
                done: false,
            })
        }
    }

    #[test]
    fn two_state_chain_matches_value_iteration() {
        let gamma = 0.9;
        // Oracle: tabular value iteration over (state, action).
        let next = |b: bool, a: usize| if a == 1 { !b } else { a > 1 || b };
        let rew = |b: bool, a: usize| {
            if (!b && a == 0) || (b && a == 1) {
                0.0
            } else {
                -1.0
            }
        };
        let mut qt = [[0.0f64; 8]; 2];
        for _ in 0..2000 {
            let v = [
                qt[0].iter().copied().fold(f64::MIN, f64::max),
                qt[1].iter().copied().fold(f64::MIN, f64::max),
            ];
            for (si, b) in [false, true].into_iter().enumerate() {
                for a in 0..8 {
                    let n = next(b, a) as usize;
                    qt[si][a] = rew(b, a) + gamma * v[n];
                }
            }
        }
        let cfg = DqnConfig {
            gamma,
            batch_size: 32,
            hidden_sizes: vec![32],
            replay_capacity: 5000,
            target_sync_period: 100,
            epsilon_decay_steps: 1,
            epsilon_start: 1.0,
            epsilon_end: 1.0,
            reward_scale: 1.0,
            learning_rate: 3e-3,
        };
        let mut r = stream(10, "chain", 0);
        let mut agent = DqnAgent::new(cfg, &mut r).unwrap();
        let mut env = Chain { at_b: false };
        for _ in 0..60 {
            agent
                .train_episode(&mut env, Some(100), &mut r, |c| Ok(c.policy_action))
                .unwrap();
        }
        for (si, b) in [false, true].into_iter().enumerate() {
            let q = agent.q_values(&chain_state(b));
            for a in 0..8 {
                assert!(
                    (q[a] - qt[si][a]).abs() < 0.05,
                    "s{si} a{a}: {} vs {}",
                    q[a],
                    qt[si][a]
                );
            }
        }
    }
}
