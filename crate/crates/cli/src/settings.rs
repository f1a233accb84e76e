//! TOML run configuration shared by every subcommand.

use std::path::Path;

use rehab_core::acquisition::{AgentConfig, Rewards};
use rehab_core::prediction::{compact_mlp_grid, default_grid, full_mlp_grid, Algorithm, Hyperparameters};
use rehab_core::synthdata::GeneratorConfig;
use rehab_core::{Component, Error, Exercise, QualityThreshold, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub seed: Option<u64>,
    pub synth: GeneratorConfig,
    pub prediction: PredictionSettings,
    pub agent: AgentSettings,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Settings> {
        let Some(path) = path else {
            return Ok(Settings::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text)
            .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
    }

    /// Command-line seed, else the file's, else 0.
    pub fn seed(&self, flag: Option<u64>) -> u64 {
        flag.or(self.seed).unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridChoice {
    /// Per-algorithm default grid (compact for the MLP).
    #[default]
    Default,
    /// Every MLP architecture and learning rate.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictionSettings {
    pub algorithm: Algorithm,
    pub grid: GridChoice,
    /// Count scores of 1 as correct.
    pub lenient: bool,
}

impl Default for PredictionSettings {
    fn default() -> Self {
        PredictionSettings {
            algorithm: Algorithm::Mlp,
            grid: GridChoice::Default,
            lenient: false,
        }
    }
}

impl PredictionSettings {
    pub fn threshold(&self) -> QualityThreshold {
        if self.lenient {
            QualityThreshold::AtLeastOne
        } else {
            QualityThreshold::FullScore
        }
    }

    pub fn grid(&self, algorithm: Algorithm) -> Vec<Hyperparameters> {
        match (algorithm, self.grid) {
            (Algorithm::Mlp, GridChoice::Full) => full_mlp_grid(),
            (Algorithm::Mlp, GridChoice::Default) => compact_mlp_grid(),
            (other, _) => default_grid(other),
        }
    }
}

/// Agent training knobs; unset fields fall back to desk-scale defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSettings {
    pub episodes: usize,
    pub batch_size: usize,
    pub warmup: usize,
    pub learning_rate: f64,
    pub replay_capacity: usize,
    /// Hidden layers; the task's reference architecture when absent.
    pub hidden: Option<Vec<usize>>,
    pub counterfactual_classify: bool,
    pub curve_window: usize,
    pub feature_cost: f64,
    pub misclassification: f64,
}

impl Default for AgentSettings {
    fn default() -> Self {
        let rewards = Rewards::default();
        AgentSettings {
            episodes: 3000,
            batch_size: 32,
            warmup: 200,
            learning_rate: 1e-4,
            replay_capacity: 10_000,
            hidden: Some(vec![64, 64]),
            counterfactual_classify: true,
            curve_window: 100,
            feature_cost: rewards.feature_cost,
            misclassification: rewards.misclassification,
        }
    }
}

impl AgentSettings {
    pub fn config(&self, exercise: Exercise, component: Component, seed: u64) -> AgentConfig {
        let mut config = AgentConfig::for_task(exercise, component, task_seed(seed, exercise, component));
        if let Some(hidden) = &self.hidden {
            config.hidden = hidden.clone();
        }
        config.episodes = self.episodes;
        config.batch_size = self.batch_size;
        config.warmup = self.warmup;
        config.learning_rate = self.learning_rate;
        config.replay_capacity = self.replay_capacity;
        config.counterfactual_classify = self.counterfactual_classify;
        config.curve_window = self.curve_window;
        config.rewards = Rewards {
            feature_cost: self.feature_cost,
            misclassification: self.misclassification,
            correct: 0.0,
        };
        config
    }
}

/// Distinct deterministic seed per task.
pub fn task_seed(seed: u64, exercise: Exercise, component: Component) -> u64 {
    let e = Exercise::ALL.iter().position(|&x| x == exercise).unwrap_or(0) as u64;
    let c = Component::ALL.iter().position(|&x| x == component).unwrap_or(0) as u64;
    seed.wrapping_mul(31).wrapping_add(3 * e + c)
}

/// Every (exercise, component) pair in canonical order.
pub fn tasks() -> Vec<(Exercise, Component)> {
    Exercise::ALL
        .into_iter()
        .flat_map(|e| Component::ALL.into_iter().map(move |c| (e, c)))
        .collect()
}

/// File stem of a task, such as `E1_rom`.
pub fn task_name(exercise: Exercise, component: Component) -> String {
    format!("{exercise}_{component}")
}
