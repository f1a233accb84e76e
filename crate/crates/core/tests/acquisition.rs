use std::sync::OnceLock;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rehab_core::acquisition::{
    act, action_count, double_q_targets, evaluate, greedy_action, train_agent, train_q_network,
    Agent, AgentConfig, EnvState, Rewards, TrainingCurve, Transition,
};
use rehab_core::numerics::{Head, MlpParams, MlpSpec};
use rehab_core::prediction::{LabeledDataset, Row};
use rehab_core::{Component, Exercise, Group, Quality, Side};

fn quality(bit: bool) -> Quality {
    if bit {
        Quality::Incorrect
    } else {
        Quality::Correct
    }
}

fn sign_task(rows: usize, seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..rows)
        .map(|i| {
            let x: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let label = quality(x[0] > 0.0);
            Row {
                motion_id: format!("m{i}"),
                subject: format!("s{}", i % 20),
                group: Group::Stroke,
                side: Side::Affected,
                score: if label == Quality::Correct { 2 } else { 0 },
                x,
                label,
            }
        })
        .collect();
    let ids = (0..8).map(|j| format!("x{j}")).collect();
    LabeledDataset::with_features(Exercise::E1, Component::Rom, ids, rows).unwrap()
}

fn sign_agent() -> &'static (Agent, TrainingCurve) {
    static AGENT: OnceLock<(Agent, TrainingCurve)> = OnceLock::new();
    AGENT.get_or_init(|| {
        let config = AgentConfig {
            hidden: vec![32, 32],
            episodes: 80_000,
            batch_size: 32,
            warmup: 200,
            learning_rate: 3e-4,
            final_learning_rate: Some(1e-6),
            seed: 4,
            ..AgentConfig::default()
        };
        train_agent(&sign_task(10_000, 1), &config).unwrap()
    })
}

/// Plays uniformly random legal actions to the end; returns the total reward,
/// the step count and the state.
fn random_episode(x: &[f64], label: Quality, rewards: &Rewards, rng: &mut ChaCha8Rng) -> (f64, usize, EnvState, usize) {
    let mut state = EnvState::reset(x, label);
    let (mut total, mut steps) = (0.0, 0);
    loop {
        let legal: Vec<usize> = (0..action_count(x.len())).filter(|&a| state.legal_actions()[a]).collect();
        let action = legal[rng.random_range(0..legal.len())];
        let (r, done) = state.apply(action, rewards).unwrap();
        total += r;
        steps += 1;
        if done {
            return (total, steps, state, action);
        }
    }
}

#[test]
fn reset_and_first_steps() {
    let x = [0.3, -1.2, 0.7];
    let state = EnvState::reset(&x, Quality::Correct);
    assert_eq!(state.observation(), vec![0.0; 6]);
    assert_eq!(state.legal_actions(), vec![true; 5]);
    assert_eq!(EnvState::reset(&x, Quality::Correct), state);

    let rewards = Rewards::default();
    let mut s = state.clone();
    let (r, done) = s.apply(2, &rewards).unwrap();
    assert_eq!((r, done), (-0.01, false));
    assert_eq!(s.mask(), &[false, false, true]);
    assert_eq!(s.observation(), vec![0.0, 0.0, 0.7, 0.0, 0.0, 1.0]);

    let mut wrong = state.clone();
    assert_eq!(wrong.apply(4, &rewards).unwrap(), (-1.0, true));
    assert!(wrong.apply(0, &rewards).is_err());
}

#[test]
fn four_queries_then_correct_classification() {
    let x = [0.1, 0.2, 0.3, 0.4, 0.5];
    let mut s = EnvState::reset(&x, Quality::Incorrect);
    let rewards = Rewards::default();
    let mut total = 0.0;
    for a in [4, 0, 3, 1] {
        total += s.apply(a, &rewards).unwrap().0;
    }
    total += s.apply(6, &rewards).unwrap().0;
    assert!((total + 0.04).abs() < 1e-15);
}

#[test]
fn exhausted_queries_leave_only_classification() {
    let x = [1.0, 2.0];
    let mut s = EnvState::reset(&x, Quality::Correct);
    s.apply(0, &Rewards::default()).unwrap();
    s.apply(1, &Rewards::default()).unwrap();
    let spec = MlpSpec::new(4, &[], 4, Head::Identity, 0);
    let mut q = MlpParams::zeros(&spec).unwrap();
    q.layers[0].bias[0] = 10.0;
    q.layers[0].bias[1] = 10.0;
    q.layers[0].bias[3] = 1.0;
    assert_eq!(greedy_action(&q, &s.observation(), &s.legal_actions()).unwrap(), 3);
}

#[test]
fn full_exploration_is_uniform_over_legal_actions() {
    let x = [0.5, -0.5, 1.0, 2.0];
    let mut s = EnvState::reset(&x, Quality::Correct);
    s.apply(1, &Rewards::default()).unwrap();
    let legal = s.legal_actions();
    let spec = MlpSpec::new(8, &[4], 6, Head::Identity, 3);
    let q = MlpParams::init(&spec).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let draws = 10_000;
    let mut counts = [0usize; 6];
    for _ in 0..draws {
        counts[act(&q, &s.observation(), 1.0, &legal, &mut rng).unwrap()] += 1;
    }
    assert_eq!(counts[1], 0);
    let p = 1.0 / 5.0;
    let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
    for (a, &c) in counts.iter().enumerate().filter(|(a, _)| legal[*a]) {
        assert!((c as f64 - draws as f64 * p).abs() < 5.0 * sigma, "action {a}: {c}");
    }
}

#[test]
fn zero_discount_and_terminal_targets_are_rewards() {
    let spec = MlpSpec::new(4, &[3], 4, Head::Identity, 9);
    let online = MlpParams::init(&spec).unwrap();
    let target = MlpParams::init(&MlpSpec { seed: 10, ..spec.clone() }).unwrap();
    let open = Transition {
        observation: vec![0.0; 4],
        action: 1,
        reward: -0.01,
        next_observation: vec![0.0, 0.7, 0.0, 1.0],
        done: false,
    };
    let closed = Transition {
        done: true,
        reward: -1.0,
        action: 2,
        ..open.clone()
    };
    assert_eq!(double_q_targets(&[&open, &closed], &online, &target, 0.0).unwrap(), vec![-0.01, -1.0]);
    assert_eq!(double_q_targets(&[&closed], &online, &target, 1.0).unwrap(), vec![-1.0]);
}

#[test]
fn training_is_reproducible() {
    let data = sign_task(200, 8);
    let config = AgentConfig {
        hidden: vec![16],
        episodes: 300,
        warmup: 64,
        batch_size: 16,
        seed: 21,
        ..AgentConfig::default()
    };
    let x = data.matrix();
    let (a, ca) = train_q_network(x.view(), &data.labels(), &config).unwrap();
    let (b, cb) = train_q_network(x.view(), &data.labels(), &config).unwrap();
    assert_eq!(ca, cb);
    let (fa, fb) = (a.flatten(), b.flatten());
    assert!(fa.iter().zip(&fb).all(|(p, q)| p.to_bits() == q.to_bits()));
}

#[test]
fn sign_task_is_learned() {
    let (agent, curve) = sign_agent();
    let tail = &curve.moving_averages()[curve.len() - 1];
    assert!(tail.1 < 2.0, "final average queried {}", tail.1);
    assert!(tail.0 > -0.05, "final average return {}", tail.0);

    let test = sign_task(1000, 2);
    let scored = evaluate(agent, &test).unwrap();
    assert!(scored.accuracy >= 0.98);
    let mut only_informative = 0;
    for row in &test.rows {
        let episode = agent.assess(&row.x, Some(row.label), &row.motion_id).unwrap();
        assert_eq!(episode.queried.first(), Some(&0));
        only_informative += usize::from(episode.queried == [0]);
    }
    assert!(only_informative >= 950, "{only_informative} of 1000 episodes queried only feature 0");
}

#[test]
fn scaled_rewards_keep_the_greedy_policy() {
    let (agent, _) = sign_agent();
    let c = 7.5;
    let mut scaled = agent.network.clone();
    let last = scaled.layers.last_mut().unwrap();
    last.weights.mapv_inplace(|w| w * c);
    last.bias.mapv_inplace(|b| b * c);

    let rewards = agent.config.rewards;
    let big = rewards.scaled(c);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut batch = Vec::new();
    for row in sign_task(200, 5).rows {
        let mut state = EnvState::reset(&agent.standardizer.apply(&row.x).unwrap(), row.label);
        for _ in 0..rng.random_range(0..4) {
            state.apply(rng.random_range(1..8), &rewards).ok();
        }
        let legal = state.legal_actions();
        let obs = state.observation();
        assert_eq!(
            greedy_action(&agent.network, &obs, &legal).unwrap(),
            greedy_action(&scaled, &obs, &legal).unwrap()
        );
        let action = (0..legal.len()).filter(|&a| legal[a]).nth(rng.random_range(0..3)).unwrap();
        let mut next = state.clone();
        let (r, done) = next.apply(action, &rewards).unwrap();
        batch.push((
            Transition { observation: obs.clone(), action, reward: r, next_observation: next.observation(), done },
            r * c,
        ));
    }
    let base: Vec<Transition> = batch.iter().map(|(t, _)| t.clone()).collect();
    let grown: Vec<Transition> = batch.iter().map(|(t, r)| Transition { reward: *r, ..t.clone() }).collect();
    let t1 = double_q_targets(&base, &agent.network, &agent.network, 1.0).unwrap();
    let t2 = double_q_targets(&grown, &scaled, &scaled, 1.0).unwrap();
    for (a, b) in t1.iter().zip(&t2) {
        assert!((a * c - b).abs() < 1e-9 * (1.0 + b.abs()));
    }
    assert_eq!(big.feature_cost, rewards.feature_cost * c);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn every_episode_obeys_the_ledger(
        seed in any::<u64>(),
        x in prop::collection::vec(-3.0f64..3.0, 1..12),
        label in any::<bool>(),
        cost in 0.0f64..0.2,
        penalty in -3.0f64..-0.1,
    ) {
        let rewards = Rewards { feature_cost: cost, misclassification: penalty, correct: 0.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (total, steps, state, last) = random_episode(&x, quality(label), &rewards, &mut rng);
        let k = state.acquired().len();
        prop_assert!(steps <= x.len() + 1);
        prop_assert_eq!(steps, k + 1);
        let mut sorted = state.acquired().to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), k);
        let terminal = if quality(last - x.len() == 1) == quality(label) { 0.0 } else { penalty };
        prop_assert!((total - (-cost * k as f64 + terminal)).abs() <= 1e-12);
        prop_assert!(state.is_terminal());
    }

    #[test]
    fn mask_matches_acquired_set(x in prop::collection::vec(-3.0f64..3.0, 1..10), picks in prop::collection::vec(0usize..10, 0..10)) {
        let mut s = EnvState::reset(&x, Quality::Correct);
        for p in picks {
            if p < x.len() && s.legal_actions()[p] {
                s.apply(p, &Rewards::default()).unwrap();
            }
        }
        let obs = s.observation();
        for i in 0..x.len() {
            let acquired = s.acquired().contains(&i);
            prop_assert_eq!(s.mask()[i], acquired);
            prop_assert_eq!(obs[x.len() + i], if acquired { 1.0 } else { 0.0 });
            prop_assert_eq!(obs[i], if acquired { x[i] } else { 0.0 });
        }
        prop_assert!(s.legal_actions()[x.len()] && s.legal_actions()[x.len() + 1]);
    }
}
