use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Algorithm, ExperimentConfig};
use super::report::{GapReport, SeedGap};
use super::stats::Aggregate;
use crate::dqn::{act, DqnAgent, EpisodeLog, Transition};
use crate::grounding::{gate, ActionGrounder, AuditRecord, GroundingRate, LearnedGrounder};
use crate::rng::{stream, SeedRng};
use crate::sim::{
    CompletedVehicle, DecisionRecord, DemandSource, Environment, MetricsRecord, Scenario,
    SimConfig, TrafficEnv, VehicleParams,
};
use crate::{Error, Result};

/// One row of the training curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRow {
    /// `pretrain`, `direct` or `grounded`.
    pub stage: String,
    /// Grounding iteration (0 outside grounded training).
    pub iteration: usize,
    /// Epoch within the iteration (0 outside grounded training).
    pub epoch: usize,
    pub episode: u64,
    pub total_return: f64,
    pub mean_td_loss: f64,
    pub epsilon: f64,
}

impl TrainingRow {
    fn from_log(stage: &str, iteration: usize, epoch: usize, log: &EpisodeLog) -> Self {
        Self {
            stage: stage.into(),
            iteration,
            epoch,
            episode: log.episode,
            total_return: log.total_return,
            mean_td_loss: log.mean_loss,
            epsilon: log.epsilon,
        }
    }
}

/// α bookkeeping for one grounding iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaRow {
    pub iteration: usize,
    /// Threshold in force during the iteration's epochs.
    pub alpha_used: f64,
    /// Threshold after the iteration's update (equal to `alpha_used` when
    /// α is pinned).
    pub alpha_next: f64,
    pub logged: usize,
    pub mean_uncertainty: f64,
    pub accepted: usize,
}

/// One evaluation episode with the raw logs its metrics derive from.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeEval {
    pub episode: u64,
    pub metrics: MetricsRecord,
    pub decisions: Vec<DecisionRecord>,
    pub vehicles: Vec<CompletedVehicle>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub episodes: Vec<EpisodeEval>,
    pub summary: Aggregate,
}

impl Evaluation {
    pub fn records(&self) -> Vec<MetricsRecord> {
        self.episodes.iter().map(|e| e.metrics).collect()
    }
}

/// Everything produced by one protocol on one seed.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub label: String,
    pub scenario: Scenario,
    pub seed: u64,
    pub training: Vec<TrainingRow>,
    pub audit: Vec<AuditRecord>,
    pub alpha_trace: Vec<AlphaRow>,
    /// Actions applied to the simulator during grounded training, in order.
    pub executed: Vec<usize>,
    pub sim_eval: Evaluation,
    pub real_eval: Evaluation,
    pub agent: DqnAgent,
}

impl SeedRun {
    pub fn gap(&self) -> SeedGap {
        SeedGap::new(
            self.seed,
            self.sim_eval.summary.mean,
            self.real_eval.summary.mean,
        )
    }
}

/// A protocol over all configured seeds.
#[derive(Debug, Clone)]
pub struct ProtocolRun {
    pub config: ExperimentConfig,
    pub runs: Vec<SeedRun>,
    pub report: GapReport,
}

fn training_env(
    cfg: &ExperimentConfig,
    params: VehicleParams,
    demand: DemandSource,
) -> Result<TrafficEnv> {
    TrafficEnv::new(params, cfg.training_sim_config(), demand)
}

/// Greedy rollouts of a frozen policy over `episodes` held-out demand
/// episodes. Metrics are aggregated with the population standard deviation.
pub fn evaluate(
    agent: &DqnAgent,
    params: VehicleParams,
    config: SimConfig,
    demand: &DemandSource,
    episodes: usize,
) -> Result<Evaluation> {
    let mut env = TrafficEnv::new(params, config, demand.clone())?;
    let mut out = Vec::with_capacity(episodes);
    for episode in 0..episodes as u64 {
        let mut state = env.reset_episode(episode)?;
        loop {
            let step = env.step(agent.greedy(&state))?;
            state = step.state;
            if step.done {
                break;
            }
        }
        let sim = env.sim();
        out.push(EpisodeEval {
            episode,
            metrics: sim.finalize_metrics()?,
            decisions: sim.decisions().to_vec(),
            vehicles: sim.completed().to_vec(),
        });
    }
    let summary = Aggregate::over_episodes(&out.iter().map(|e| e.metrics).collect::<Vec<_>>());
    Ok(Evaluation {
        episodes: out,
        summary,
    })
}

/// ε-greedy episode that does not train the agent.
fn rollout(
    agent: &DqnAgent,
    env: &mut TrafficEnv,
    episode: u64,
    epsilon: f64,
    rng: &mut SeedRng,
    into: &mut Vec<Transition>,
) -> Result<()> {
    let mut state = env.reset_episode(episode)?;
    loop {
        let action = act(&agent.q_values(&state), epsilon, rng);
        let step = env.step(action)?;
        into.push(Transition {
            state,
            action,
            reward: step.reward,
            next_state: step.state,
            terminal: false,
        });
        state = step.state;
        if step.done {
            return Ok(());
        }
    }
}

fn train_plain(
    agent: &mut DqnAgent,
    env: &mut TrafficEnv,
    episodes: usize,
    steps: usize,
    rng: &mut SeedRng,
    stage: &str,
    rows: &mut Vec<TrainingRow>,
) -> Result<()> {
    for _ in 0..episodes {
        let log = agent.train_episode(env, Some(steps), rng, |c| Ok(c.policy_action))?;
        rows.push(TrainingRow::from_log(stage, 0, 0, &log));
    }
    Ok(())
}

fn finish(
    cfg: &ExperimentConfig,
    seed: u64,
    agent: DqnAgent,
    training: Vec<TrainingRow>,
    audit: Vec<AuditRecord>,
    alpha_trace: Vec<AlphaRow>,
    executed: Vec<usize>,
) -> Result<SeedRun> {
    let eval_demand = cfg.demand(seed, "eval")?;
    let sim_eval = evaluate(
        &agent,
        Scenario::Default.params(),
        cfg.sim,
        &eval_demand,
        cfg.eval_episodes,
    )?;
    let real_eval = evaluate(
        &agent,
        cfg.scenario.params(),
        cfg.sim,
        &eval_demand,
        cfg.eval_episodes,
    )?;
    Ok(SeedRun {
        label: cfg.label(),
        scenario: cfg.scenario,
        seed,
        training,
        audit,
        alpha_trace,
        executed,
        sim_eval,
        real_eval,
        agent,
    })
}

/// Direct transfer on one seed: train in simulation, evaluate in both
/// environments.
pub fn run_direct_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    let mut rng = stream(seed, "agent", 0);
    let mut agent = DqnAgent::new(cfg.dqn.clone(), &mut rng)?;
    let mut env = training_env(cfg, Scenario::Default.params(), cfg.demand(seed, "train")?)?;
    let mut rows = Vec::new();
    train_plain(
        &mut agent,
        &mut env,
        cfg.direct_episodes,
        cfg.steps,
        &mut rng,
        "direct",
        &mut rows,
    )?;
    finish(cfg, seed, agent, rows, Vec::new(), Vec::new(), Vec::new())
}

/// The grounded training loop on one seed with a caller-supplied grounder.
///
/// Pre-train, then per iteration: collect rollouts in both environments,
/// refit the grounder, clear the uncertainty log, run `epochs` training
/// episodes in which every policy action is grounded and gated, and finally
/// update α (dynamic protocol only).
pub fn run_grounded_seed<G: ActionGrounder>(
    cfg: &ExperimentConfig,
    seed: u64,
    mut grounder: G,
) -> Result<SeedRun> {
    let algorithm = cfg.algorithm();
    let mut rate = match algorithm {
        Algorithm::Direct => {
            return Err(Error::Config(
                "direct transfer has no grounding loop".into(),
            ));
        }
        Algorithm::Gat | Algorithm::Ugat => GroundingRate::new(),
        Algorithm::UgatStatic(a) => GroundingRate::with_alpha(a),
    };
    let mut rng = stream(seed, "agent", 0);
    let mut agent = DqnAgent::new(cfg.dqn.clone(), &mut rng)?;
    let mut sim_env = training_env(cfg, Scenario::Default.params(), cfg.demand(seed, "train")?)?;
    let mut rows = Vec::new();
    train_plain(
        &mut agent,
        &mut sim_env,
        cfg.pretrain_episodes,
        cfg.steps,
        &mut rng,
        "pretrain",
        &mut rows,
    )?;

    let mut sim_rollouts = training_env(
        cfg,
        Scenario::Default.params(),
        cfg.demand(seed, "sim-rollout")?,
    )?;
    let mut real_rollouts = training_env(
        cfg,
        cfg.scenario.params(),
        cfg.demand(seed, "real-rollout")?,
    )?;
    let mut rollout_rng = stream(seed, "rollout", 0);
    let mut fit_rng = stream(seed, "fit", 0);
    let mut ground_rng = stream(seed, "ground", 0);
    let (mut d_sim, mut d_real) = (Vec::new(), Vec::new());
    let mut audit = Vec::new();
    let mut alpha_trace = Vec::new();
    let mut executed = Vec::new();

    for iteration in 0..cfg.iterations {
        for r in 0..cfg.rollouts {
            let episode = (iteration * cfg.rollouts + r) as u64;
            rollout(
                &agent,
                &mut sim_rollouts,
                episode,
                cfg.rollout_epsilon,
                &mut rollout_rng,
                &mut d_sim,
            )?;
            rollout(
                &agent,
                &mut real_rollouts,
                episode,
                cfg.rollout_epsilon,
                &mut rollout_rng,
                &mut d_real,
            )?;
        }
        grounder.fit(&d_sim, &d_real, &mut fit_rng)?;
        rate.reset_log();
        let alpha_used = rate.alpha;
        let mut accepted = 0;
        for epoch in 0..cfg.epochs {
            let log = agent.train_episode(&mut sim_env, Some(cfg.steps), &mut rng, |ctx| {
                let g = grounder.ground(
                    ctx.state,
                    ctx.policy_action,
                    &mut ground_rng as &mut dyn RngCore,
                )?;
                let alpha = rate.alpha;
                let (executed, ok) = gate(ctx.policy_action, g, &mut rate);
                accepted += usize::from(ok);
                audit.push(AuditRecord {
                    iteration,
                    epoch,
                    step: ctx.step,
                    state_hash: ctx.state.hash64(),
                    policy_action: ctx.policy_action,
                    grounded_action: g.grounded_action,
                    uncertainty: g.uncertainty,
                    alpha,
                    accepted: ok,
                });
                Ok(executed)
            })?;
            executed.extend_from_slice(&log.executed_actions);
            rows.push(TrainingRow::from_log("grounded", iteration, epoch, &log));
        }
        let logged = rate.logged().len();
        if logged != cfg.steps * cfg.epochs {
            return Err(Error::Contract(format!(
                "iteration {iteration} logged {logged} uncertainties, expected {}",
                cfg.steps * cfg.epochs
            )));
        }
        let mean_uncertainty = super::stats::mean(rate.logged());
        let alpha_next = if algorithm == Algorithm::Ugat {
            rate.update_alpha()
        } else {
            rate.reset_log();
            rate.alpha
        };
        log::debug!("seed {seed} iteration {iteration}: alpha {alpha_used} -> {alpha_next}, accepted {accepted}/{logged}");
        alpha_trace.push(AlphaRow {
            iteration,
            alpha_used,
            alpha_next,
            logged,
            mean_uncertainty,
            accepted,
        });
    }
    finish(cfg, seed, agent, rows, audit, alpha_trace, executed)
}

/// One seed of whatever protocol `cfg` selects, with learned models.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    match cfg.algorithm() {
        Algorithm::Direct => run_direct_seed(cfg, seed),
        _ => {
            let grounder = LearnedGrounder::new(
                cfg.effective_head(),
                cfg.forward_model.clone(),
                cfg.inverse_model.clone(),
                &mut stream(seed, "grounder", 0),
            )?;
            run_grounded_seed(cfg, seed, grounder)
        }
    }
}

/// Run every seed (in parallel on the current rayon pool) and build the
/// gap report.
pub fn run_protocol(cfg: &ExperimentConfig) -> Result<ProtocolRun> {
    cfg.validate()?;
    let runs = cfg
        .seeds
        .par_iter()
        .map(|&seed| run_seed(cfg, seed))
        .collect::<Result<Vec<_>>>()?;
    let report = GapReport::from_seeds(
        &cfg.label(),
        cfg.scenario,
        runs.iter().map(SeedRun::gap).collect(),
    );
    Ok(ProtocolRun {
        config: cfg.clone(),
        runs,
        report,
    })
}

pub fn run_direct_transfer(cfg: &ExperimentConfig) -> Result<ProtocolRun> {
    run_protocol(&cfg.clone().with_algorithm(Algorithm::Direct))
}

/// Grounded training with the algorithm in `cfg` (gat, ugat or
/// ugat_static).
pub fn run_ugat(cfg: &ExperimentConfig) -> Result<ProtocolRun> {
    if !cfg.algorithm().is_grounded() {
        return Err(Error::Config(
            "run_ugat needs algorithm gat, ugat or ugat_static".into(),
        ));
    }
    run_protocol(cfg)
}

/// Full method, fixed α = 0.5, vanilla GAT, and no grounding, on shared
/// seeds and demand.
pub fn run_ablation(cfg: &ExperimentConfig) -> Result<Vec<ProtocolRun>> {
    [
        Algorithm::Ugat,
        Algorithm::UgatStatic(0.5),
        Algorithm::Gat,
        Algorithm::Direct,
    ]
    .into_iter()
    .map(|a| run_protocol(&cfg.clone().with_algorithm(a)))
    .collect()
}

/// One pinned-α run per entry of `alphas`, then the dynamic run.
pub fn sweep_static_alpha(cfg: &ExperimentConfig, alphas: &[f64]) -> Result<Vec<ProtocolRun>> {
    if alphas.is_empty() {
        return Err(Error::Config("alpha sweep needs at least one value".into()));
    }
    alphas
        .iter()
        .map(|&a| Algorithm::UgatStatic(a))
        .chain([Algorithm::Ugat])
        .map(|a| run_protocol(&cfg.clone().with_algorithm(a)))
        .collect()
}

/// The dynamic protocol with each uncertainty head, plus vanilla GAT.
pub fn compare_uncertainty_methods(cfg: &ExperimentConfig) -> Result<Vec<ProtocolRun>> {
    use crate::grounding::HeadKind;
    let mut out = Vec::new();
    for head in [
        HeadKind::Edl,
        HeadKind::DROPOUT_DEFAULT,
        HeadKind::ENSEMBLE_DEFAULT,
    ] {
        let c = ExperimentConfig {
            head,
            ..cfg.clone().with_algorithm(Algorithm::Ugat)
        };
        out.push(run_protocol(&c)?);
    }
    out.push(run_protocol(&cfg.clone().with_algorithm(Algorithm::Gat))?);
    Ok(out)
}
