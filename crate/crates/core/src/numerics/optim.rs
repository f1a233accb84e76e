use ndarray::{Array, Dimension, Zip};
use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, MlpParams};
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const RMS_DECAY: f64 = 0.99;
pub const EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    /// Bias-corrected adaptive moments.
    Adam,
    RmsProp,
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    /// Global gradient-norm ceiling applied before each update.
    pub clip_norm: Option<f64>,
    pub step: u64,
    first_moment: Gradients,
    second_moment: Gradients,
}

impl OptimizerState {
    pub fn new(
        kind: OptimizerKind,
        params: &MlpParams,
        learning_rate: f64,
        clip_norm: Option<f64>,
    ) -> Result<Self> {
        if let Some(c) = clip_norm {
            if !(c > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "clip threshold must be > 0, got {c}"
                )));
            }
        }
        Ok(OptimizerState {
            kind,
            learning_rate,
            clip_norm,
            step: 0,
            first_moment: Gradients::zeros_like(params),
            second_moment: Gradients::zeros_like(params),
        })
    }

    pub fn adam(params: &MlpParams, learning_rate: f64) -> Self {
        // No clip threshold, so construction cannot fail.
        Self::new(OptimizerKind::Adam, params, learning_rate, None).expect("valid adam state")
    }

    pub fn rms_prop(
        params: &MlpParams,
        learning_rate: f64,
        clip_norm: Option<f64>,
    ) -> Result<Self> {
        Self::new(OptimizerKind::RmsProp, params, learning_rate, clip_norm)
    }

    /// Applies one update in place. Returns the gradient norm before clipping.
    pub fn apply(&mut self, params: &mut MlpParams, grads: &Gradients) -> Result<f64> {
        if grads.layers.len() != params.layers.len()
            || grads
                .layers
                .iter()
                .zip(&params.layers)
                .any(|(g, p)| g.weights.dim() != p.weights.dim() || g.bias.dim() != p.bias.dim())
        {
            return Err(Error::shape(
                "gradients shaped like params",
                "mismatched gradients",
            ));
        }
        let norm = grads.global_norm();
        let scale = match self.clip_norm {
            Some(max) if norm > max => max / norm,
            _ => 1.0,
        };
        self.step += 1;
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Adam => {
                let c1 = 1.0 - ADAM_BETA1.powi(self.step as i32);
                let c2 = 1.0 - ADAM_BETA2.powi(self.step as i32);
                let step = |w: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
                    let g = g * scale;
                    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                    *w -= lr * (*m / c1) / ((*v / c2).sqrt() + EPSILON);
                };
                for (((p, g), m), v) in params
                    .layers
                    .iter_mut()
                    .zip(&grads.layers)
                    .zip(&mut self.first_moment.layers)
                    .zip(&mut self.second_moment.layers)
                {
                    update(&mut p.weights, &g.weights, &mut m.weights, &mut v.weights, step);
                    update(&mut p.bias, &g.bias, &mut m.bias, &mut v.bias, step);
                }
            }
            OptimizerKind::RmsProp => {
                let step = |w: &mut f64, g: f64, _: &mut f64, v: &mut f64| {
                    let g = g * scale;
                    *v = RMS_DECAY * *v + (1.0 - RMS_DECAY) * g * g;
                    *w -= lr * g / (v.sqrt() + EPSILON);
                };
                for (((p, g), m), v) in params
                    .layers
                    .iter_mut()
                    .zip(&grads.layers)
                    .zip(&mut self.first_moment.layers)
                    .zip(&mut self.second_moment.layers)
                {
                    update(&mut p.weights, &g.weights, &mut m.weights, &mut v.weights, step);
                    update(&mut p.bias, &g.bias, &mut m.bias, &mut v.bias, step);
                }
            }
        }
        Ok(norm)
    }
}

/// Elementwise update over parameters, gradients and both moment buffers.
fn update<D: Dimension>(
    w: &mut Array<f64, D>,
    g: &Array<f64, D>,
    m: &mut Array<f64, D>,
    v: &mut Array<f64, D>,
    step: impl Fn(&mut f64, f64, &mut f64, &mut f64),
) {
    match (w.as_slice_mut(), g.as_slice(), m.as_slice_mut(), v.as_slice_mut()) {
        (Some(w), Some(g), Some(m), Some(v)) => {
            for (((w, &g), m), v) in w.iter_mut().zip(g).zip(m).zip(v) {
                step(w, g, m, v);
            }
        }
        _ => Zip::from(w)
            .and(g)
            .and(m)
            .and(v)
            .for_each(|w, &g, m, v| step(w, g, m, v)),
    }
}

/// One RMSProp update with global-norm clipping.
pub fn rms_step(
    state: &mut OptimizerState,
    params: &mut MlpParams,
    grads: &Gradients,
) -> Result<f64> {
    if state.kind != OptimizerKind::RmsProp {
        return Err(Error::InvalidArgument(
            "rms_step needs an RMSProp state".into(),
        ));
    }
    state.apply(params, grads)
}

/// Scales `grads` so its global norm is at most `max_norm`; returns the
/// original norm.
pub fn clip_global_norm(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}
