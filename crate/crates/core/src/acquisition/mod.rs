//! Sequential feature acquisition: per motion, an agent queries features at
//! a fixed cost and then classifies. Solved with Double DQN over masked
//! observations.

mod compare;
mod env;
mod replay;

pub use env::{
    action_count, legal_from_observation, Action, EnvState, Rewards, FEATURE_COST,
    MISCLASSIFICATION_REWARD,
};
pub use compare::{compare_with_rfe, holdout_subjects, RfeComparison};
pub use replay::{ReplayBuffer, Transition};

use std::borrow::Borrow;
use std::io::Write;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::{Component, Exercise, Quality};
use crate::numerics::{Head, MlpParams, MlpSpec, OptimizerState};
use crate::prediction::{accuracy, f1, reference_architecture, LabeledDataset, Standardizer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub hidden: Vec<usize>,
    /// Soft target update factor.
    pub rho: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Linear decrement per episode.
    pub epsilon_decay: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    /// Transitions collected before the first update.
    pub warmup: usize,
    pub learning_rate: f64,
    /// When set, the learning rate decays linearly to this value over the
    /// episodes.
    #[serde(default)]
    pub final_learning_rate: Option<f64>,
    pub clip_norm: f64,
    pub episodes: usize,
    pub rewards: Rewards,
    pub seed: u64,
    /// Moving-average window of the training curve.
    pub curve_window: usize,
    /// Also store the untaken classify actions of every visited state, whose
    /// rewards follow from the label.
    pub counterfactual_classify: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            hidden: vec![64, 64],
            rho: 0.1,
            gamma: 1.0,
            epsilon_start: 0.5,
            epsilon_end: 0.05,
            epsilon_decay: 2e-3,
            replay_capacity: 10_000,
            batch_size: 64,
            warmup: 500,
            learning_rate: 0.001,
            final_learning_rate: None,
            clip_norm: 1.0,
            episodes: 20_000,
            rewards: Rewards::default(),
            seed: 0,
            curve_window: 100,
            counterfactual_classify: true,
        }
    }
}

impl AgentConfig {
    /// Defaults with the reference network of the task.
    pub fn for_task(exercise: Exercise, component: Component, seed: u64) -> Self {
        AgentConfig {
            hidden: reference_architecture(exercise, component).0,
            seed,
            ..AgentConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return bad(format!("rho {} not in (0, 1]", self.rho));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma {} not in [0, 1]", self.gamma));
        }
        if !(0.0 <= self.epsilon_end
            && self.epsilon_end <= self.epsilon_start
            && self.epsilon_start <= 1.0)
        {
            return bad(format!(
                "need 0 <= epsilon_end ({}) <= epsilon_start ({}) <= 1",
                self.epsilon_end, self.epsilon_start
            ));
        }
        if !(self.epsilon_decay >= 0.0) {
            return bad(format!("epsilon_decay {} < 0", self.epsilon_decay));
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return bad(format!(
                "need 1 <= batch_size ({}) <= replay_capacity ({})",
                self.batch_size, self.replay_capacity
            ));
        }
        if self.final_learning_rate.is_some_and(|lr| !(lr > 0.0)) {
            return bad("final_learning_rate must be > 0".into());
        }
        if !(self.learning_rate > 0.0) || !(self.clip_norm > 0.0) {
            return bad("learning_rate and clip_norm must be > 0".into());
        }
        if self.curve_window == 0 {
            return bad("curve_window must be >= 1".into());
        }
        if self.hidden.contains(&0) {
            return bad(format!("hidden widths must be >= 1: {:?}", self.hidden));
        }
        Ok(())
    }

    pub fn epsilon_at(&self, episode: usize) -> f64 {
        (self.epsilon_start - self.epsilon_decay * episode as f64).max(self.epsilon_end)
    }

    pub fn learning_rate_at(&self, episode: usize) -> f64 {
        match self.final_learning_rate {
            Some(end) if self.episodes > 1 => {
                let t = episode.min(self.episodes - 1) as f64 / (self.episodes - 1) as f64;
                self.learning_rate + (end - self.learning_rate) * t
            }
            _ => self.learning_rate,
        }
    }

    pub fn network_spec(&self, n: usize) -> MlpSpec {
        MlpSpec::new(
            2 * n,
            &self.hidden,
            action_count(n),
            Head::Identity,
            self.seed,
        )
    }
}

/// Index of the largest legal value; lowest index wins ties.
pub fn masked_argmax(values: &[f64], legal: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, (&v, &ok)) in values.iter().zip(legal).enumerate() {
        if ok && best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// Epsilon-greedy choice over legal actions.
pub fn act(
    params: &MlpParams,
    observation: &[f64],
    epsilon: f64,
    legal: &[bool],
    rng: &mut impl Rng,
) -> Result<usize> {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        let choices: Vec<usize> = (0..legal.len()).filter(|&i| legal[i]).collect();
        if choices.is_empty() {
            return Err(Error::IllegalAction {
                action: 0,
                reason: "no legal action",
            });
        }
        return Ok(choices[rng.random_range(0..choices.len())]);
    }
    greedy_action(params, observation, legal)
}

pub fn greedy_action(params: &MlpParams, observation: &[f64], legal: &[bool]) -> Result<usize> {
    let q = params.forward(observation)?;
    if q.len() != legal.len() {
        return Err(Error::shape(q.len(), legal.len()));
    }
    masked_argmax(&q, legal).ok_or(Error::IllegalAction {
        action: 0,
        reason: "no legal action",
    })
}

fn stack(rows: &[&[f64]]) -> Array2<f64> {
    let width = rows.first().map_or(0, |r| r.len());
    let mut m = Array2::zeros((rows.len(), width));
    for (mut dst, src) in m.rows_mut().into_iter().zip(rows) {
        dst.iter_mut().zip(src.iter()).for_each(|(d, &s)| *d = s);
    }
    m
}

/// Double Q-learning targets: `r` for terminal transitions, otherwise
/// `r + gamma * Q_target(s', argmax_legal Q_online(s', .))`.
pub fn double_q_targets<T: Borrow<Transition>>(
    batch: &[T],
    online: &MlpParams,
    target: &MlpParams,
    gamma: f64,
) -> Result<Vec<f64>> {
    let mut targets: Vec<f64> = batch.iter().map(|t| t.borrow().reward).collect();
    let open: Vec<usize> = (0..batch.len())
        .filter(|&i| !batch[i].borrow().done)
        .collect();
    if open.is_empty() {
        return Ok(targets);
    }
    let next: Vec<&[f64]> = open
        .iter()
        .map(|&i| batch[i].borrow().next_observation.as_slice())
        .collect();
    let next = stack(&next);
    let q_online = online.logits_batch(next.view())?;
    let q_target = target.logits_batch(next.view())?;
    for (row, &i) in open.iter().enumerate() {
        let obs = &batch[i].borrow().next_observation;
        let legal = legal_from_observation(obs);
        let values = q_online.row(row).to_vec();
        let best = masked_argmax(&values, &legal).ok_or(Error::IllegalAction {
            action: 0,
            reason: "no legal action in next state",
        })?;
        targets[i] += gamma * q_target[[row, best]];
    }
    Ok(targets)
}

/// `target <- rho * online + (1 - rho) * target`.
pub fn soft_update(target: &mut MlpParams, online: &MlpParams, rho: f64) -> Result<()> {
    target.soft_update_from(online, rho)
}

/// One squared-TD-error gradient step on a sampled batch. Returns the loss.
pub fn learn_step<T: Borrow<Transition>>(
    batch: &[T],
    online: &mut MlpParams,
    target: &MlpParams,
    optimizer: &mut OptimizerState,
    gamma: f64,
) -> Result<f64> {
    let targets = double_q_targets(batch, online, target, gamma)?;
    let obs: Vec<&[f64]> = batch
        .iter()
        .map(|t| t.borrow().observation.as_slice())
        .collect();
    let obs = stack(&obs);
    let (q, cache) = online.forward_cached(obs.view())?;
    let b = batch.len() as f64;
    let mut grad = Array2::zeros(q.raw_dim());
    let mut loss = 0.0;
    for (i, (t, y)) in batch.iter().zip(&targets).enumerate() {
        let a = t.borrow().action;
        let d = q[[i, a]] - y;
        loss += d * d;
        grad[[i, a]] = 2.0 * d / b;
    }
    loss /= b;
    if !loss.is_finite() {
        return Err(Error::Diverged { epoch: 0, loss });
    }
    let grads = online.backward(&cache, grad.view())?;
    optimizer.apply(online, &grads)?;
    Ok(loss)
}

/// Per-episode returns and queried-feature counts.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingCurve {
    pub window: usize,
    pub returns: Vec<f64>,
    pub queried: Vec<usize>,
}

impl TrainingCurve {
    pub fn new(window: usize) -> Self {
        TrainingCurve {
            window,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    /// Trailing moving averages `(avg_return, avg_features)` per episode.
    pub fn moving_averages(&self) -> Vec<(f64, f64)> {
        let w = self.window.max(1);
        let mut out = Vec::with_capacity(self.len());
        let (mut sr, mut sq) = (0.0, 0.0);
        for i in 0..self.len() {
            sr += self.returns[i];
            sq += self.queried[i] as f64;
            if i >= w {
                sr -= self.returns[i - w];
                sq -= self.queried[i - w] as f64;
            }
            let k = (i + 1).min(w) as f64;
            out.push((sr / k, sq / k));
        }
        out
    }

    /// Mean return and mean queried count over the first and last `fraction`
    /// of episodes: `((first_return, last_return), (first_queried, last_queried))`.
    pub fn head_tail(&self, fraction: f64) -> ((f64, f64), (f64, f64)) {
        let k = ((self.len() as f64 * fraction).round() as usize).clamp(1, self.len().max(1));
        let mean = |v: &[f64]| {
            if v.is_empty() {
                0.0
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            }
        };
        let q: Vec<f64> = self.queried.iter().map(|&c| c as f64).collect();
        let n = self.len();
        let tail = n.saturating_sub(k);
        (
            (mean(&self.returns[..k.min(n)]), mean(&self.returns[tail..])),
            (mean(&q[..k.min(n)]), mean(&q[tail..])),
        )
    }

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["episode", "avg_return", "avg_features"])?;
        for (i, (r, q)) in self.moving_averages().into_iter().enumerate() {
            w.write_record([i.to_string(), format!("{r:.6}"), format!("{q:.6}")])?;
        }
        w.flush().map_err(|e| Error::io("csv output", e))?;
        Ok(())
    }
}

/// Trains a Q-network on standardized rows. Zero episodes return the
/// initial network and an empty curve.
pub fn train_q_network(
    x: ArrayView2<f64>,
    labels: &[Quality],
    config: &AgentConfig,
) -> Result<(MlpParams, TrainingCurve)> {
    config.validate()?;
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::InvalidArgument(
            "agent needs a non-empty dataset".into(),
        ));
    }
    if labels.len() != x.nrows() {
        return Err(Error::shape(x.nrows(), labels.len()));
    }
    let n = x.ncols();
    let spec = config.network_spec(n);
    let mut online = MlpParams::init(&spec)?;
    let mut target = online.clone();
    let mut optimizer =
        OptimizerState::rms_prop(&online, config.learning_rate, Some(config.clip_norm))?;
    let mut replay = ReplayBuffer::new(config.replay_capacity);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut curve = TrainingCurve::new(config.curve_window);
    let ready = config.warmup.max(config.batch_size);

    for episode in 0..config.episodes {
        let epsilon = config.epsilon_at(episode);
        optimizer.learning_rate = config.learning_rate_at(episode);
        let row = rng.random_range(0..x.nrows());
        let sample = x.row(row).to_vec();
        let mut state = EnvState::reset(&sample, labels[row]);
        let mut total = 0.0;
        loop {
            let observation = state.observation();
            let legal = state.legal_actions();
            let action = act(&online, &observation, epsilon, &legal, &mut rng)?;
            let (reward, done) = state.apply(action, &config.rewards)?;
            total += reward;
            if config.counterfactual_classify {
                for q in [Quality::Correct, Quality::Incorrect] {
                    let other = Action::Classify(q).index(n);
                    if other != action {
                        let r = if q == labels[row] {
                            config.rewards.correct
                        } else {
                            config.rewards.misclassification
                        };
                        replay.push(Transition {
                            observation: observation.clone(),
                            action: other,
                            reward: r,
                            next_observation: observation.clone(),
                            done: true,
                        });
                    }
                }
            }
            replay.push(Transition {
                observation,
                action,
                reward,
                next_observation: state.observation(),
                done,
            });
            if replay.len() >= ready {
                let batch = replay.sample(config.batch_size, &mut rng);
                learn_step(&batch, &mut online, &target, &mut optimizer, config.gamma).map_err(
                    |e| match e {
                        Error::Diverged { loss, .. } => Error::Diverged {
                            epoch: episode,
                            loss,
                        },
                        other => other,
                    },
                )?;
                soft_update(&mut target, &online, config.rho)?;
            }
            if done {
                break;
            }
        }
        curve.returns.push(total);
        curve.queried.push(state.acquired().len());
    }
    Ok((online, curve))
}

/// One greedy rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionEpisode {
    pub sample_id: String,
    /// Queried feature indices in order.
    pub queried: Vec<usize>,
    pub prediction: Quality,
    /// Rewards of every step; the terminal reward is present only when the
    /// true label is known.
    pub rewards: Vec<f64>,
    pub total_return: Option<f64>,
    pub greedy: bool,
}

/// Greedy rollout on a standardized sample.
pub fn rollout(
    params: &MlpParams,
    z: &[f64],
    label: Option<Quality>,
    rewards: &Rewards,
    sample_id: &str,
) -> Result<AcquisitionEpisode> {
    let n = z.len();
    if params.spec.input != 2 * n {
        return Err(Error::shape(params.spec.input / 2, n));
    }
    // Without a label the terminal reward is unknown; run against a
    // placeholder and drop it.
    let mut state = EnvState::reset(z, label.unwrap_or(Quality::Correct));
    let mut step_rewards = Vec::new();
    loop {
        let action = greedy_action(params, &state.observation(), &state.legal_actions())?;
        let (reward, done) = state.apply(action, rewards)?;
        if done {
            if label.is_some() {
                step_rewards.push(reward);
            }
            let prediction = match Action::from_index(action, n)? {
                Action::Classify(q) => q,
                Action::Query(_) => unreachable!("queries never terminate"),
            };
            return Ok(AcquisitionEpisode {
                sample_id: sample_id.to_string(),
                queried: state.acquired().to_vec(),
                prediction,
                total_return: label.map(|_| step_rewards.iter().sum()),
                rewards: step_rewards,
                greedy: true,
            });
        }
        step_rewards.push(reward);
    }
}

pub const AGENT_FILE_VERSION: u32 = 1;

/// A trained acquisition agent with everything needed to score raw vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub version: u32,
    pub exercise: Exercise,
    pub component: Component,
    pub feature_ids: Vec<String>,
    pub standardizer: Standardizer,
    pub config: AgentConfig,
    pub network: MlpParams,
    pub training: AgentTraining,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTraining {
    pub episodes: usize,
    pub rows: usize,
    pub final_avg_return: Option<f64>,
    pub final_avg_features: Option<f64>,
}

impl Agent {
    pub fn width(&self) -> usize {
        self.feature_ids.len()
    }

    /// Greedy rollout on a raw feature vector.
    pub fn assess(
        &self,
        x: &[f64],
        label: Option<Quality>,
        sample_id: &str,
    ) -> Result<AcquisitionEpisode> {
        let z = self.standardizer.apply(x)?;
        rollout(&self.network, &z, label, &self.config.rewards, sample_id)
    }

    pub fn check_version(&self) -> Result<()> {
        if self.version != AGENT_FILE_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported agent file version {}",
                self.version
            )));
        }
        Ok(())
    }
}

/// Standardizes `dataset` with its own statistics and trains an agent.
pub fn train_agent(
    dataset: &LabeledDataset,
    config: &AgentConfig,
) -> Result<(Agent, TrainingCurve)> {
    let standardizer = Standardizer::fit(dataset)?;
    let x = standardizer.transform(dataset)?.matrix();
    let (network, curve) = train_q_network(x.view(), &dataset.labels(), config)?;
    let last = curve.moving_averages().last().copied();
    Ok((
        Agent {
            version: AGENT_FILE_VERSION,
            exercise: dataset.exercise,
            component: dataset.component,
            feature_ids: dataset.feature_ids.clone(),
            standardizer,
            config: config.clone(),
            network,
            training: AgentTraining {
                episodes: config.episodes,
                rows: dataset.len(),
                final_avg_return: last.map(|l| l.0),
                final_avg_features: last.map(|l| l.1),
            },
        },
        curve,
    ))
}

/// Greedy performance of an agent over labeled rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentEvaluation {
    pub f1: f64,
    pub accuracy: f64,
    pub mean_queried: f64,
    pub mean_return: f64,
    pub episodes: Vec<AcquisitionEpisode>,
}

pub fn evaluate(agent: &Agent, dataset: &LabeledDataset) -> Result<AgentEvaluation> {
    if dataset.feature_ids != agent.feature_ids {
        return Err(Error::InvalidArgument(
            "dataset features differ from the agent's".into(),
        ));
    }
    let episodes: Vec<AcquisitionEpisode> = dataset
        .rows
        .iter()
        .map(|r| agent.assess(&r.x, Some(r.label), &r.motion_id))
        .collect::<Result<_>>()?;
    let predictions: Vec<Quality> = episodes.iter().map(|e| e.prediction).collect();
    let labels = dataset.labels();
    let n = episodes.len().max(1) as f64;
    Ok(AgentEvaluation {
        f1: f1(&predictions, &labels),
        accuracy: accuracy(&predictions, &labels),
        mean_queried: episodes.iter().map(|e| e.queried.len() as f64).sum::<f64>() / n,
        mean_return: episodes.iter().filter_map(|e| e.total_return).sum::<f64>() / n,
        episodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Single linear layer, 2 inputs to 2 outputs.
    fn linear_net(weights: [[f64; 2]; 2], bias: [f64; 2]) -> MlpParams {
        let spec = MlpSpec::new(2, &[], 2, Head::Identity, 0);
        let mut p = MlpParams::zeros(&spec).unwrap();
        for (i, row) in weights.iter().enumerate() {
            for (j, &w) in row.iter().enumerate() {
                p.layers[0].weights[[i, j]] = w;
            }
            p.layers[0].bias[i] = bias[i];
        }
        p
    }

    #[test]
    fn epsilon_schedule() {
        let c = AgentConfig::default();
        assert_eq!(c.epsilon_at(0), 0.5);
        assert!((c.epsilon_at(100) - 0.3).abs() < 1e-12);
        assert_eq!(c.epsilon_at(225), 0.05);
        assert_eq!(c.epsilon_at(10_000), 0.05);
    }

    #[test]
    fn config_validation() {
        assert!(AgentConfig::default().validate().is_ok());
        for bad in [
            AgentConfig {
                rho: 0.0,
                ..AgentConfig::default()
            },
            AgentConfig {
                epsilon_end: 0.6,
                ..AgentConfig::default()
            },
            AgentConfig {
                batch_size: 20_000,
                ..AgentConfig::default()
            },
            AgentConfig {
                clip_norm: 0.0,
                ..AgentConfig::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn masked_argmax_ties_and_mask() {
        assert_eq!(masked_argmax(&[1.0, 3.0, 3.0], &[true; 3]), Some(1));
        assert_eq!(
            masked_argmax(&[1.0, 3.0, 3.0], &[true, false, true]),
            Some(2)
        );
        assert_eq!(masked_argmax(&[1.0], &[false]), None);
    }

    #[test]
    fn greedy_picks_fixed_action() {
        let net = linear_net([[0.0, 0.0], [0.0, 0.0]], [0.2, 0.7]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10 {
            assert_eq!(
                act(&net, &[0.0, 0.0], 0.0, &[true, true], &mut rng).unwrap(),
                1
            );
        }
        assert_eq!(
            act(&net, &[0.0, 0.0], 0.0, &[true, false], &mut rng).unwrap(),
            0
        );
    }

    #[test]
    fn soft_update_cases() {
        let online = linear_net([[1.0, 1.0], [1.0, 1.0]], [1.0, 1.0]);
        let mut target = linear_net([[0.0; 2]; 2], [0.0; 2]);
        soft_update(&mut target, &online, 0.1).unwrap();
        assert!(target.flatten().iter().all(|&v| (v - 0.1).abs() < 1e-15));
        soft_update(&mut target, &online, 1.0).unwrap();
        assert_eq!(target, online);
        let before = target.clone();
        soft_update(&mut target, &online, 0.1).unwrap();
        assert_eq!(target, before);
        assert!(soft_update(&mut target, &online, 0.0).is_err());
    }

    #[test]
    fn curve_statistics() {
        let curve = TrainingCurve {
            window: 2,
            returns: vec![-1.0, -0.5, 0.0, -0.02],
            queried: vec![4, 3, 1, 2],
        };
        let expected = [(-1.0, 4.0), (-0.75, 3.5), (-0.25, 2.0), (-0.01, 1.5)];
        for (got, want) in curve.moving_averages().into_iter().zip(expected) {
            assert!((got.0 - want.0).abs() < 1e-12 && got.1 == want.1);
        }
        let ((r0, r1), (q0, q1)) = curve.head_tail(0.5);
        assert_eq!(r0, -0.75);
        assert!((r1 + 0.01).abs() < 1e-12);
        assert_eq!((q0, q1), (3.5, 1.5));
        let mut buf = Vec::new();
        curve.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 5);
    }

    #[test]
    fn zero_episodes_returns_initial_network() {
        let x = Array2::from_shape_fn((4, 3), |(i, j)| (i + j) as f64);
        let labels = [
            Quality::Correct,
            Quality::Incorrect,
            Quality::Correct,
            Quality::Incorrect,
        ];
        let config = AgentConfig {
            episodes: 0,
            hidden: vec![8],
            ..AgentConfig::default()
        };
        let (params, curve) = train_q_network(x.view(), &labels, &config).unwrap();
        assert!(curve.is_empty());
        assert_eq!(params, MlpParams::init(&config.network_spec(3)).unwrap());
    }
}
