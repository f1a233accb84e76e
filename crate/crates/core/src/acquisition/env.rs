use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::Quality;

pub const FEATURE_COST: f64 = 0.01;
pub const MISCLASSIFICATION_REWARD: f64 = -1.0;

/// Per-step rewards of the acquisition task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rewards {
    /// Cost charged for each queried feature (rewarded as its negative).
    pub feature_cost: f64,
    pub misclassification: f64,
    pub correct: f64,
}

impl Default for Rewards {
    fn default() -> Self {
        Rewards {
            feature_cost: FEATURE_COST,
            misclassification: MISCLASSIFICATION_REWARD,
            correct: 0.0,
        }
    }
}

impl Rewards {
    pub fn scaled(&self, factor: f64) -> Rewards {
        Rewards {
            feature_cost: self.feature_cost * factor,
            misclassification: self.misclassification * factor,
            correct: self.correct * factor,
        }
    }
}

/// Query feature `i` for `i < n`; `n` classifies as correct and `n + 1` as
/// incorrect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Query(usize),
    Classify(Quality),
}

impl Action {
    pub fn index(self, n: usize) -> usize {
        match self {
            Action::Query(i) => i,
            Action::Classify(q) => n + q.class_index(),
        }
    }

    pub fn from_index(index: usize, n: usize) -> Result<Action> {
        match index {
            i if i < n => Ok(Action::Query(i)),
            i if i == n => Ok(Action::Classify(Quality::Correct)),
            i if i == n + 1 => Ok(Action::Classify(Quality::Incorrect)),
            i => Err(Error::IllegalAction {
                action: i,
                reason: "outside the action space",
            }),
        }
    }
}

pub fn action_count(n: usize) -> usize {
    n + 2
}

/// One sample being classified with the features acquired so far.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    x: Vec<f64>,
    label: Quality,
    mask: Vec<bool>,
    acquired: Vec<usize>,
    terminal: bool,
}

impl EnvState {
    pub fn reset(x: &[f64], label: Quality) -> EnvState {
        EnvState {
            x: x.to_vec(),
            label,
            mask: vec![false; x.len()],
            acquired: Vec::new(),
            terminal: false,
        }
    }

    /// Like [`EnvState::reset`] but checks the sample width.
    pub fn reset_checked(x: &[f64], label: Quality, n: usize) -> Result<EnvState> {
        if x.len() != n {
            return Err(Error::shape(n, x.len()));
        }
        Ok(Self::reset(x, label))
    }

    pub fn width(&self) -> usize {
        self.x.len()
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Queried features in acquisition order.
    pub fn acquired(&self) -> &[usize] {
        &self.acquired
    }

    pub fn is_terminal(&self) -> bool {
        self.terminal
    }

    pub fn label(&self) -> Quality {
        self.label
    }

    /// `[x * m, m]`, width `2n`.
    pub fn observation(&self) -> Vec<f64> {
        let mut obs = Vec::with_capacity(2 * self.x.len());
        obs.extend(
            self.x
                .iter()
                .zip(&self.mask)
                .map(|(&v, &m)| if m { v } else { 0.0 }),
        );
        obs.extend(self.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }));
        obs
    }

    pub fn legal_actions(&self) -> Vec<bool> {
        if self.terminal {
            return vec![false; action_count(self.width())];
        }
        let mut legal: Vec<bool> = self.mask.iter().map(|&m| !m).collect();
        legal.extend([true, true]);
        legal
    }

    /// Applies `action` in place; returns `(reward, done)`.
    pub fn apply(&mut self, action: usize, rewards: &Rewards) -> Result<(f64, bool)> {
        if self.terminal {
            return Err(Error::IllegalAction {
                action,
                reason: "episode already terminated",
            });
        }
        match Action::from_index(action, self.width())? {
            Action::Query(i) => {
                if self.mask[i] {
                    return Err(Error::IllegalAction {
                        action,
                        reason: "feature already acquired",
                    });
                }
                self.mask[i] = true;
                self.acquired.push(i);
                Ok((-rewards.feature_cost, false))
            }
            Action::Classify(q) => {
                self.terminal = true;
                let r = if q == self.label {
                    rewards.correct
                } else {
                    rewards.misclassification
                };
                Ok((r, true))
            }
        }
    }

    pub fn step(&self, action: usize, rewards: &Rewards) -> Result<(EnvState, f64, bool)> {
        let mut next = self.clone();
        let (r, done) = next.apply(action, rewards)?;
        Ok((next, r, done))
    }
}

/// Legal actions implied by an observation: unqueried features plus both
/// classify actions.
pub fn legal_from_observation(obs: &[f64]) -> Vec<bool> {
    let n = obs.len() / 2;
    let mut legal: Vec<bool> = obs[n..].iter().map(|&m| m == 0.0).collect();
    legal.extend([true, true]);
    legal
}
