//! Small dense neural-network core: multilayer perceptron with ReLU hidden
//! layers, backpropagation, Adam and RMSProp, and a full-batch classifier
//! trainer.

mod mlp;
mod optim;

pub use mlp::{
    softmax_cross_entropy, softmax_rows, Dense, ForwardCache, Gradients, Head, MlpParams, MlpSpec,
    GRID_WIDTHS,
};
pub use optim::{
    clip_global_norm, rms_step, OptimizerKind, OptimizerState, ADAM_BETA1, ADAM_BETA2, EPSILON,
    RMS_DECAY,
};

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-4;
pub const DEFAULT_MAX_EPOCHS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearningRateSchedule {
    Constant,
    /// Halve the step after `patience` epochs without a new best loss.
    PlateauHalving {
        patience: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub learning_rate: f64,
    pub tolerance: f64,
    pub max_epochs: usize,
    pub schedule: LearningRateSchedule,
}

impl FitConfig {
    pub fn new(learning_rate: f64) -> Self {
        FitConfig {
            learning_rate,
            tolerance: DEFAULT_TOLERANCE,
            max_epochs: DEFAULT_MAX_EPOCHS,
            schedule: LearningRateSchedule::Constant,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: MlpParams,
    /// Full-batch loss at the start of each epoch.
    pub history: Vec<f64>,
}

impl FitResult {
    pub fn final_loss(&self) -> Option<f64> {
        self.history.last().copied()
    }
}

/// Full-batch Adam training of a softmax classifier.
///
/// Stops once consecutive epoch losses differ by less than the tolerance, or
/// after `max_epochs` epochs.
pub fn fit_classifier(
    spec: &MlpSpec,
    inputs: ArrayView2<f64>,
    labels: &[usize],
    config: &FitConfig,
) -> Result<FitResult> {
    if inputs.nrows() == 0 {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    if labels.len() != inputs.nrows() {
        return Err(Error::shape(inputs.nrows(), labels.len()));
    }
    if !inputs.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite training input".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= spec.output) {
        return Err(Error::Range {
            what: "label",
            detail: format!("{bad} >= {} classes", spec.output),
        });
    }
    let mut params = MlpParams::init(spec)?;
    let mut optimizer = OptimizerState::adam(&params, config.learning_rate);
    let mut history = Vec::new();
    let mut best = f64::INFINITY;
    let mut stale = 0usize;

    for epoch in 0..config.max_epochs {
        let (logits, cache) = params.forward_cached(inputs)?;
        let (loss, grad) = softmax_cross_entropy(&logits, labels);
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss });
        }
        let converged = history
            .last()
            .is_some_and(|&prev: &f64| (prev - loss).abs() < config.tolerance);
        history.push(loss);
        if converged {
            break;
        }
        let grads = params.backward(&cache, grad.view())?;
        optimizer.apply(&mut params, &grads)?;

        if let LearningRateSchedule::PlateauHalving { patience } = config.schedule {
            if loss < best {
                best = loss;
                stale = 0;
            } else {
                stale += 1;
                if stale >= patience {
                    optimizer.learning_rate *= 0.5;
                    stale = 0;
                }
            }
        }
    }
    Ok(FitResult { params, history })
}

/// Predicted class (argmax, lowest index on ties) and its probability.
pub fn classify(params: &MlpParams, input: &[f64]) -> Result<(usize, f64)> {
    let probs = params.forward(input)?;
    Ok(argmax(&probs))
}

/// Index and value of the largest element; the first index wins ties.
pub fn argmax(values: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, &v) in values.iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

/// Versioned on-disk form of a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkFile {
    pub version: u32,
    pub spec: MlpSpec,
    pub weights: Vec<f64>,
    pub training: TrainingMetadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub final_loss: Option<f64>,
}

pub const NETWORK_FILE_VERSION: u32 = 1;

impl NetworkFile {
    pub fn new(params: &MlpParams, training: TrainingMetadata) -> Self {
        NetworkFile {
            version: NETWORK_FILE_VERSION,
            spec: params.spec.clone(),
            weights: params.flatten(),
            training,
        }
    }

    pub fn params(&self) -> Result<MlpParams> {
        if self.version != NETWORK_FILE_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported network file version {}",
                self.version
            )));
        }
        MlpParams::from_flat(&self.spec, &self.weights)
    }
}
