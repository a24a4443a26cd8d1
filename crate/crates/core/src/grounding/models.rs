use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::uncertainty::{edl_decision, entropy_decision, mean_softmax, UncertainAction};
use crate::dqn::Transition;
use crate::numnet::{
    adam_step, cce_loss, edl_loss, mse_loss, Activation, AdamConfig, AdamState, Gradients,
    MlpModel, MlpSpec, Mode,
};
use crate::sim::{TrafficState, LANE_COUNT_SCALE, NUM_PHASES, STATE_DIM};
use crate::{Error, Result};

pub const FORWARD_INPUT_DIM: usize = STATE_DIM + NUM_PHASES;
pub const INVERSE_INPUT_DIM: usize = 2 * STATE_DIM;

/// How the inverse model turns its outputs into an uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HeadKind {
    /// Evidential outputs, u = K/S.
    Edl,
    /// Fixed-rate dropout kept on at inference; normalized entropy of the
    /// mean softmax over `passes` forward passes.
    StochasticDropout { passes: usize, rate: f64 },
    /// Independently initialized members; normalized entropy of the mean
    /// softmax.
    Ensemble { members: usize },
    /// Single softmax trained with cross-entropy; normalized entropy.
    Softmax,
}

impl HeadKind {
    pub const DROPOUT_DEFAULT: HeadKind = HeadKind::StochasticDropout {
        passes: 10,
        rate: 0.1,
    };
    pub const ENSEMBLE_DEFAULT: HeadKind = HeadKind::Ensemble { members: 5 };

    pub fn validate(&self) -> Result<()> {
        match *self {
            HeadKind::StochasticDropout { passes, rate } => {
                if passes < 2 {
                    return Err(Error::Config(format!(
                        "dropout head needs at least 2 passes, got {passes}"
                    )));
                }
                if !(0.0..1.0).contains(&rate) {
                    return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
                }
            }
            HeadKind::Ensemble { members } if members < 2 => {
                return Err(Error::Config(format!(
                    "ensemble head needs at least 2 members, got {members}"
                )));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn label(&self) -> &'static str {
        match self {
            HeadKind::Edl => "edl",
            HeadKind::StochasticDropout { .. } => "dropout",
            HeadKind::Ensemble { .. } => "ensemble",
            HeadKind::Softmax => "softmax",
        }
    }

    fn member_count(&self) -> usize {
        match *self {
            HeadKind::Ensemble { members } => members,
            _ => 1,
        }
    }
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for HeadKind {
    type Err = Error;

    /// Names map to the default head parameters.
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "edl" => Ok(HeadKind::Edl),
            "dropout" | "stochastic_dropout" => Ok(HeadKind::DROPOUT_DEFAULT),
            "ensemble" => Ok(HeadKind::ENSEMBLE_DEFAULT),
            "softmax" | "cce" => Ok(HeadKind::Softmax),
            _ => Err(Error::Input(format!(
                "unknown uncertainty head {s:?} (expected edl, dropout, ensemble or softmax)"
            ))),
        }
    }
}

/// Topology and optimizer settings shared by the forward and inverse models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelTrainConfig {
    pub hidden_sizes: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for ModelTrainConfig {
    fn default() -> Self {
        Self {
            hidden_sizes: vec![64, 64],
            epochs: 20,
            batch_size: 32,
            learning_rate: 1e-3,
        }
    }
}

impl ModelTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::Config(
                "model batch size and learning rate must be positive".into(),
            ));
        }
        Ok(())
    }

    fn spec(&self, input: usize, output: usize, act: Activation) -> MlpSpec {
        let mut sizes = vec![input];
        sizes.extend(&self.hidden_sizes);
        sizes.push(output);
        MlpSpec::new(sizes, act)
    }

    fn adam(&self, model: &MlpModel) -> AdamState {
        AdamState::new(
            model,
            AdamConfig {
                learning_rate: self.learning_rate,
                ..AdamConfig::default()
            },
        )
    }
}

pub fn forward_input(state: &TrafficState, action: usize) -> [f64; FORWARD_INPUT_DIM] {
    let mut x = [0.0; FORWARD_INPUT_DIM];
    x[..STATE_DIM].copy_from_slice(&state.features());
    x[STATE_DIM + action] = 1.0;
    x
}

pub fn inverse_input(
    next_features: &[f64; STATE_DIM],
    state: &TrafficState,
) -> [f64; INVERSE_INPUT_DIM] {
    let mut x = [0.0; INVERSE_INPUT_DIM];
    x[..STATE_DIM].copy_from_slice(next_features);
    x[STATE_DIM..].copy_from_slice(&state.features());
    x
}

/// Predicts next-state features (lane counts scaled by
/// [`LANE_COUNT_SCALE`], then the phase one-hot).
pub trait ForwardPredictor {
    fn predict_next(&self, state: &TrafficState, action: usize) -> Result<[f64; STATE_DIM]>;
}

/// Recovers the action that leads from `state` to `next_features`.
pub trait InversePredictor {
    fn infer(
        &self,
        next_features: &[f64; STATE_DIM],
        state: &TrafficState,
        rng: &mut dyn RngCore,
    ) -> Result<UncertainAction>;
}

/// Learned next-state predictor trained on real-world transitions.
#[derive(Debug, Clone)]
pub struct ForwardModel {
    net: MlpModel,
    optimizer: AdamState,
    config: ModelTrainConfig,
    epochs_trained: usize,
}

impl ForwardModel {
    pub fn new<R: Rng + ?Sized>(config: ModelTrainConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let net = MlpModel::new(
            config.spec(FORWARD_INPUT_DIM, STATE_DIM, Activation::Identity),
            rng,
        )?;
        let optimizer = config.adam(&net);
        Ok(Self {
            net,
            optimizer,
            config,
            epochs_trained: 0,
        })
    }

    pub fn net(&self) -> &MlpModel {
        &self.net
    }

    pub fn epochs_trained(&self) -> usize {
        self.epochs_trained
    }

    /// Normalized count scale; lane channels are counts / this value.
    pub fn count_scale(&self) -> f64 {
        LANE_COUNT_SCALE
    }
}

impl ForwardPredictor for ForwardModel {
    fn predict_next(&self, state: &TrafficState, action: usize) -> Result<[f64; STATE_DIM]> {
        if self.epochs_trained == 0 {
            return Err(Error::Untrained("forward model"));
        }
        check_action(action)?;
        let y = self.net.predict(&forward_input(state, action))?;
        let mut out = [0.0; STATE_DIM];
        out.copy_from_slice(&y);
        Ok(out)
    }
}

/// Minibatch Adam on the MSE between predicted and observed next-state
/// features for `epochs` passes. Returns the mean loss of each epoch.
pub fn train_forward<R: Rng + ?Sized>(
    model: &mut ForwardModel,
    data: &[Transition],
    epochs: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::EmptyDataset("forward model"));
    }
    let batch = model.config.batch_size;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut trace = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for chunk in order.chunks(batch) {
            let mut grads = Gradients::zeros_like(&model.net);
            for &i in chunk {
                let t = &data[i];
                check_action(t.action)?;
                let (y, cache) =
                    model
                        .net
                        .forward(&forward_input(&t.state, t.action), Mode::Infer, rng)?;
                let (l, g) = mse_loss(&y, &t.next_state.features())?;
                total += l;
                model.net.accumulate_backward(&cache, &g, &mut grads)?;
            }
            grads.scale(1.0 / chunk.len() as f64);
            adam_step(&mut model.net, &grads, &mut model.optimizer)?;
        }
        model.epochs_trained += 1;
        trace.push(total / data.len() as f64);
    }
    Ok(trace)
}

/// Learned action recovery with a pluggable uncertainty head.
#[derive(Debug, Clone)]
pub struct InverseModel {
    head: HeadKind,
    members: Vec<MlpModel>,
    optimizers: Vec<AdamState>,
    config: ModelTrainConfig,
    epochs_trained: usize,
}

impl InverseModel {
    pub fn new<R: Rng + ?Sized>(
        head: HeadKind,
        config: ModelTrainConfig,
        rng: &mut R,
    ) -> Result<Self> {
        head.validate()?;
        config.validate()?;
        let spec = Self::member_spec(head, &config);
        let members = (0..head.member_count())
            .map(|_| MlpModel::new(spec.clone(), rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::assemble(head, members, config, 0))
    }

    /// Wrap already-trained networks, e.g. for inspection or tests.
    pub fn from_members(head: HeadKind, members: Vec<MlpModel>) -> Result<Self> {
        head.validate()?;
        if members.len() != head.member_count() {
            return Err(Error::Config(format!(
                "{head} head expects {} networks, got {}",
                head.member_count(),
                members.len()
            )));
        }
        for m in &members {
            if m.spec().input_dim() != INVERSE_INPUT_DIM || m.spec().output_dim() != NUM_PHASES {
                return Err(Error::Shape {
                    expected: INVERSE_INPUT_DIM,
                    got: m.spec().input_dim(),
                });
            }
        }
        Ok(Self::assemble(
            head,
            members,
            ModelTrainConfig::default(),
            1,
        ))
    }

    fn member_spec(head: HeadKind, config: &ModelTrainConfig) -> MlpSpec {
        match head {
            HeadKind::Edl => config.spec(INVERSE_INPUT_DIM, NUM_PHASES, Activation::Softplus),
            HeadKind::StochasticDropout { rate, .. } => config
                .spec(INVERSE_INPUT_DIM, NUM_PHASES, Activation::Identity)
                .with_dropout(rate),
            HeadKind::Ensemble { .. } | HeadKind::Softmax => {
                config.spec(INVERSE_INPUT_DIM, NUM_PHASES, Activation::Identity)
            }
        }
    }

    fn assemble(
        head: HeadKind,
        members: Vec<MlpModel>,
        config: ModelTrainConfig,
        epochs_trained: usize,
    ) -> Self {
        let optimizers = members.iter().map(|m| config.adam(m)).collect();
        Self {
            head,
            members,
            optimizers,
            config,
            epochs_trained,
        }
    }

    pub fn head(&self) -> HeadKind {
        self.head
    }

    pub fn members(&self) -> &[MlpModel] {
        &self.members
    }

    pub fn epochs_trained(&self) -> usize {
        self.epochs_trained
    }

    /// Decision and uncertainty for a raw 40-dimensional input.
    pub fn decide(&self, input: &[f64], rng: &mut dyn RngCore) -> Result<UncertainAction> {
        if self.epochs_trained == 0 {
            return Err(Error::Untrained("inverse model"));
        }
        match self.head {
            HeadKind::Edl => edl_decision(&self.members[0].predict(input)?),
            HeadKind::Softmax => Ok(entropy_decision(&mean_softmax([self.members[0]
                .predict(input)?
                .as_slice()]))),
            HeadKind::StochasticDropout { passes, .. } => {
                let outs = (0..passes)
                    .map(|_| Ok(self.members[0].forward(input, Mode::Stochastic, rng)?.0))
                    .collect::<Result<Vec<_>>>()?;
                Ok(entropy_decision(&mean_softmax(
                    outs.iter().map(Vec::as_slice),
                )))
            }
            HeadKind::Ensemble { .. } => {
                let outs = self
                    .members
                    .iter()
                    .map(|m| m.predict(input))
                    .collect::<Result<Vec<_>>>()?;
                Ok(entropy_decision(&mean_softmax(
                    outs.iter().map(Vec::as_slice),
                )))
            }
        }
    }
}

impl InversePredictor for InverseModel {
    fn infer(
        &self,
        next_features: &[f64; STATE_DIM],
        state: &TrafficState,
        rng: &mut dyn RngCore,
    ) -> Result<UncertainAction> {
        self.decide(&inverse_input(next_features, state), rng)
    }
}

/// EDL regularizer weight for a given cumulative epoch index.
pub fn edl_anneal(epoch: usize) -> f64 {
    (epoch as f64 / 10.0).min(1.0)
}

/// Train the inverse model to recover the executed action from (s', s) for
/// `epochs` passes. Evidential heads use the EDL objective with the
/// regularizer annealed over the model's cumulative epoch count; the other
/// heads use cross-entropy on logits. Ensemble members each see their own
/// shuffle order. Returns the mean loss of each epoch (averaged over
/// members).
pub fn train_inverse<R: Rng + ?Sized>(
    model: &mut InverseModel,
    data: &[Transition],
    epochs: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::EmptyDataset("inverse model"));
    }
    let inputs: Vec<[f64; INVERSE_INPUT_DIM]> = data
        .iter()
        .map(|t| check_action(t.action).map(|_| inverse_input(&t.next_state.features(), &t.state)))
        .collect::<Result<_>>()?;
    let batch = model.config.batch_size;
    let mode = match model.head {
        HeadKind::StochasticDropout { .. } => Mode::Train,
        _ => Mode::Infer,
    };
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut trace = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let anneal = edl_anneal(model.epochs_trained);
        let mut total = 0.0;
        for (net, opt) in model.members.iter_mut().zip(&mut model.optimizers) {
            order.shuffle(rng);
            for chunk in order.chunks(batch) {
                let mut grads = Gradients::zeros_like(net);
                for &i in chunk {
                    let (y, cache) = net.forward(&inputs[i], mode, rng)?;
                    let (l, g) = match model.head {
                        HeadKind::Edl => edl_loss(&y, data[i].action, anneal)?,
                        _ => cce_loss(&y, data[i].action)?,
                    };
                    total += l;
                    net.accumulate_backward(&cache, &g, &mut grads)?;
                }
                grads.scale(1.0 / chunk.len() as f64);
                adam_step(net, &grads, opt)?;
            }
        }
        model.epochs_trained += 1;
        trace.push(total / (data.len() * model.members.len()) as f64);
    }
    Ok(trace)
}

/// Predict the next state under `action`, then ask the inverse model which
/// action produces it: ŝ' = f(s, a), (â, u) = h(ŝ', s).
pub fn ground<F, I>(
    state: &TrafficState,
    action: usize,
    forward: &F,
    inverse: &I,
    rng: &mut dyn RngCore,
) -> Result<UncertainAction>
where
    F: ForwardPredictor + ?Sized,
    I: InversePredictor + ?Sized,
{
    let next = forward.predict_next(state, action)?;
    let out = inverse.infer(&next, state, rng)?;
    if out.grounded_action >= NUM_PHASES || !(0.0..=1.0).contains(&out.uncertainty) {
        return Err(Error::Contract(format!("inverse model produced {out:?}")));
    }
    Ok(out)
}

fn check_action(action: usize) -> Result<()> {
    if action >= NUM_PHASES {
        return Err(Error::Input(format!(
            "action {action} out of range (0..{NUM_PHASES})"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grounding::uncertainty::normalized_entropy;
    use crate::numnet::softmax;
    use crate::rng::stream;
    use crate::sim::NUM_LANES;

    fn random_state<R: Rng>(rng: &mut R) -> TrafficState {
        let mut s = TrafficState::empty(rng.random_range(0..NUM_PHASES));
        for c in s.lane_counts.iter_mut() {
            *c = rng.random_range(0..40);
        }
        s
    }

    fn small() -> ModelTrainConfig {
        ModelTrainConfig {
            hidden_sizes: vec![32],
            epochs: 0,
            batch_size: 16,
            learning_rate: 3e-3,
        }
    }

    /// Next state of a toy linear system: lane i takes lane i+1's count plus
    /// three vehicles on the lanes the action indexes; the phase becomes the
    /// action.
    fn linear_next(s: &TrafficState, a: usize) -> TrafficState {
        let mut n = TrafficState::empty(a);
        for i in 0..NUM_LANES {
            n.lane_counts[i] =
                s.lane_counts[(i + 1) % NUM_LANES] + if i % NUM_PHASES == a { 3 } else { 0 };
        }
        n
    }

    fn dataset(n: usize, seed: u64) -> Vec<Transition> {
        let mut r = stream(seed, "fwd-data", 0);
        (0..n)
            .map(|_| {
                let s = random_state(&mut r);
                let a = r.random_range(0..NUM_PHASES);
                Transition {
                    state: s,
                    action: a,
                    reward: 0.0,
                    next_state: linear_next(&s, a),
                    terminal: false,
                }
            })
            .collect()
    }

    #[test]
    fn forward_memorizes_a_repeated_transition() {
        let mut r = stream(1, "fwd", 0);
        let mut m = ForwardModel::new(small(), &mut r).unwrap();
        let one = dataset(1, 1)[0];
        let data = vec![one; 64];
        let trace = train_forward(&mut m, &data, 150, &mut r).unwrap();
        assert!(
            *trace.last().unwrap() < 1e-4,
            "{:?}",
            &trace[trace.len() - 5..]
        );
    }

    #[test]
    fn forward_learns_linear_dynamics() {
        let mut r = stream(2, "fwd", 0);
        let cfg = ModelTrainConfig {
            learning_rate: 1e-3,
            ..small()
        };
        let mut m = ForwardModel::new(cfg, &mut r).unwrap();
        let train = dataset(800, 2);
        let test = dataset(200, 3);
        let trace = train_forward(&mut m, &train, 60, &mut r).unwrap();
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] * 1.05, "loss trace jumped: {trace:?}");
        }
        let targets: Vec<[f64; STATE_DIM]> = test.iter().map(|t| t.next_state.features()).collect();
        let mut mean = [0.0; STATE_DIM];
        for t in &targets {
            mean.iter_mut()
                .zip(t)
                .for_each(|(m, x)| *m += x / targets.len() as f64);
        }
        let var: f64 = targets
            .iter()
            .flat_map(|t| t.iter().zip(&mean).map(|(x, m)| (x - m).powi(2)))
            .sum::<f64>()
            / (targets.len() * STATE_DIM) as f64;
        let mse: f64 = test
            .iter()
            .zip(&targets)
            .map(|(t, y)| {
                mse_loss(&m.predict_next(&t.state, t.action).unwrap(), y)
                    .unwrap()
                    .0
            })
            .sum::<f64>()
            / test.len() as f64;
        assert!(mse * 10.0 < var, "mse {mse} var {var}");
    }

    #[test]
    fn empty_datasets_are_rejected() {
        let mut r = stream(3, "fwd", 0);
        let mut f = ForwardModel::new(small(), &mut r).unwrap();
        assert!(matches!(
            train_forward(&mut f, &[], 1, &mut r),
            Err(Error::EmptyDataset(_))
        ));
        let mut i = InverseModel::new(HeadKind::Edl, small(), &mut r).unwrap();
        assert!(matches!(
            train_inverse(&mut i, &[], 1, &mut r),
            Err(Error::EmptyDataset(_))
        ));
    }

    #[test]
    fn untrained_models_refuse_to_ground() {
        let mut r = stream(4, "fwd", 0);
        let f = ForwardModel::new(small(), &mut r).unwrap();
        let i = InverseModel::new(HeadKind::Edl, small(), &mut r).unwrap();
        let s = TrafficState::empty(0);
        assert!(matches!(
            ground(&s, 0, &f, &i, &mut r),
            Err(Error::Untrained(_))
        ));
    }

    #[test]
    fn inverse_recovers_phase_setting_actions() {
        for head in [HeadKind::Edl, HeadKind::Softmax, HeadKind::DROPOUT_DEFAULT] {
            let mut r = stream(5, "inv", 0);
            let mut m = InverseModel::new(head, small(), &mut r).unwrap();
            train_inverse(&mut m, &dataset(600, 5), 15, &mut r).unwrap();
            let test = dataset(300, 6);
            let hits = test
                .iter()
                .filter(|t| {
                    let d = m.infer(&t.next_state.features(), &t.state, &mut r).unwrap();
                    d.grounded_action == t.action
                })
                .count();
            assert!(
                hits as f64 >= 0.99 * test.len() as f64,
                "{head}: {hits}/300"
            );
        }
    }

    #[test]
    fn single_class_evidence_grows_each_epoch() {
        let mut r = stream(6, "inv", 0);
        let cfg = ModelTrainConfig {
            learning_rate: 1e-3,
            ..small()
        };
        let mut m = InverseModel::new(HeadKind::Edl, cfg, &mut r).unwrap();
        let data: Vec<Transition> = dataset(200, 7)
            .into_iter()
            .map(|t| Transition {
                action: 5,
                next_state: linear_next(&t.state, 5),
                ..t
            })
            .collect();
        let probe = &data[0];
        let mut trace = Vec::new();
        for _ in 0..30 {
            train_inverse(&mut m, &data, 1, &mut r).unwrap();
            let d = m
                .infer(&probe.next_state.features(), &probe.state, &mut r)
                .unwrap();
            assert_eq!(d.grounded_action, 5);
            trace.push(d.uncertainty);
        }
        // While the regularizer weight ramps up it strips evidence from the
        // other classes, which can raise u; afterwards u falls every epoch.
        for w in trace[10..].windows(2) {
            assert!(w[1] < w[0], "{trace:?}");
        }
        assert!(trace[29] < trace[0]);
    }

    struct TrueDynamics;
    impl ForwardPredictor for TrueDynamics {
        fn predict_next(&self, s: &TrafficState, a: usize) -> Result<[f64; STATE_DIM]> {
            Ok(linear_next(s, a).features())
        }
    }

    struct ExactInverse;
    impl InversePredictor for ExactInverse {
        fn infer(
            &self,
            next: &[f64; STATE_DIM],
            s: &TrafficState,
            _: &mut dyn RngCore,
        ) -> Result<UncertainAction> {
            let a = (0..NUM_PHASES)
                .find(|&a| &linear_next(s, a).features() == next)
                .ok_or_else(|| Error::Contract("no action explains the transition".into()))?;
            Ok(UncertainAction {
                grounded_action: a,
                uncertainty: 0.0,
            })
        }
    }

    #[test]
    fn exact_models_ground_to_the_identity() {
        let mut r = stream(7, "stub", 0);
        for _ in 0..100 {
            let s = random_state(&mut r);
            for a in 0..NUM_PHASES {
                assert_eq!(
                    ground(&s, a, &TrueDynamics, &ExactInverse, &mut r)
                        .unwrap()
                        .grounded_action,
                    a
                );
            }
        }
    }

    fn trained_like(head: HeadKind, seed: u64) -> InverseModel {
        let mut r = stream(seed, "heads", 0);
        let spec = InverseModel::member_spec(head, &small());
        let members = (0..head.member_count())
            .map(|_| MlpModel::new(spec.clone(), &mut r).unwrap())
            .collect();
        InverseModel::from_members(head, members).unwrap()
    }

    #[test]
    fn identical_ensemble_members_share_one_entropy() {
        let base = trained_like(HeadKind::Softmax, 8).members()[0].clone();
        let ens =
            InverseModel::from_members(HeadKind::Ensemble { members: 5 }, vec![base.clone(); 5])
                .unwrap();
        let x = [0.3; INVERSE_INPUT_DIM];
        let expected = normalized_entropy(&softmax(&base.predict(&x).unwrap()));
        let got = ens.decide(&x, &mut stream(0, "x", 0)).unwrap().uncertainty;
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn confident_agreeing_members_have_no_uncertainty() {
        let spec = InverseModel::member_spec(HeadKind::Softmax, &small());
        let mut m = MlpModel::zeros(spec).unwrap();
        // Only the output bias is nonzero: class 2 dominates every input.
        let last = m.param_count() - NUM_PHASES + 2;
        m.set_param(last, 60.0);
        let ens =
            InverseModel::from_members(HeadKind::Ensemble { members: 3 }, vec![m; 3]).unwrap();
        let d = ens
            .decide(&[0.1; INVERSE_INPUT_DIM], &mut stream(0, "x", 0))
            .unwrap();
        assert_eq!(d.grounded_action, 2);
        assert!(d.uncertainty < 1e-20);
    }

    #[test]
    fn zero_rate_dropout_is_deterministic() {
        let head = HeadKind::StochasticDropout {
            passes: 10,
            rate: 0.0,
        };
        let m = trained_like(head, 9);
        let x = [0.2; INVERSE_INPUT_DIM];
        let single = normalized_entropy(&softmax(&m.members()[0].predict(&x).unwrap()));
        let d = m.decide(&x, &mut stream(1, "x", 0)).unwrap();
        assert!((d.uncertainty - single).abs() < 1e-12);
    }

    #[test]
    fn dropout_uncertainty_matches_scalar_recomputation() {
        let m = trained_like(HeadKind::DROPOUT_DEFAULT, 10);
        let net = &m.members()[0];
        let x: Vec<f64> = (0..INVERSE_INPUT_DIM)
            .map(|i| (i as f64 * 0.37).sin())
            .collect();
        let d = m.decide(&x, &mut stream(11, "mc", 0)).unwrap();

        // Recompute with plain loops on the same random stream.
        let mut r = stream(11, "mc", 0);
        let mut mean = [0.0f64; NUM_PHASES];
        for _ in 0..10 {
            let mut a = x.clone();
            let layers = net.layers();
            for (li, layer) in layers.iter().enumerate() {
                let mut z = vec![0.0; layer.bias.len()];
                for (o, zo) in z.iter_mut().enumerate() {
                    *zo = layer.bias[o]
                        + (0..a.len())
                            .map(|j| layer.weights.get(o, j) * a[j])
                            .sum::<f64>();
                }
                if li + 1 < layers.len() {
                    for v in z.iter_mut() {
                        *v = v.max(0.0);
                        let drop = r.random::<f64>() < 0.1;
                        *v = if drop { 0.0 } else { *v / 0.9 };
                    }
                }
                a = z;
            }
            let mx = a.iter().cloned().fold(f64::MIN, f64::max);
            let s: f64 = a.iter().map(|v| (v - mx).exp()).sum();
            for (k, v) in a.iter().enumerate() {
                mean[k] += (v - mx).exp() / s / 10.0;
            }
        }
        let h: f64 = mean.iter().map(|p| -p * p.ln()).sum::<f64>() / (NUM_PHASES as f64).ln();
        assert!(
            (d.uncertainty - h).abs() < 1e-12,
            "{} vs {h}",
            d.uncertainty
        );
    }

    #[test]
    fn logit_argmax_survives_positive_rescaling() {
        let mut r = stream(12, "scale", 0);
        for _ in 0..50 {
            let m = trained_like(HeadKind::Softmax, r.random());
            let scale: f64 = r.random_range(0.1..10.0);
            let mut scaled = m.members()[0].clone();
            let n = scaled.spec().layer_sizes.len();
            let out_start = scaled.param_count()
                - scaled.spec().layer_sizes[n - 1] * (scaled.spec().layer_sizes[n - 2] + 1);
            scaled.for_each_param_mut(|i, p| {
                if i >= out_start {
                    *p *= scale
                }
            });
            let scaled = InverseModel::from_members(HeadKind::Softmax, vec![scaled]).unwrap();
            let x: Vec<f64> = (0..INVERSE_INPUT_DIM)
                .map(|_| r.random_range(-1.0..1.0))
                .collect();
            assert_eq!(
                m.decide(&x, &mut r).unwrap().grounded_action,
                scaled.decide(&x, &mut r).unwrap().grounded_action
            );
        }
    }

    #[test]
    fn head_validation() {
        assert!(HeadKind::StochasticDropout {
            passes: 1,
            rate: 0.1
        }
        .validate()
        .is_err());
        assert!(HeadKind::Ensemble { members: 1 }.validate().is_err());
        assert_eq!(
            "ENSEMBLE".parse::<HeadKind>().unwrap(),
            HeadKind::ENSEMBLE_DEFAULT
        );
        assert!("bayes".parse::<HeadKind>().is_err());
    }
}
