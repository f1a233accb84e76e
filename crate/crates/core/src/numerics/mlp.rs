use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hidden-layer widths the architecture grid draws from.
pub const GRID_WIDTHS: [usize; 6] = [16, 32, 64, 128, 256, 512];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// Class probabilities; trained with cross-entropy.
    Softmax,
    /// Raw outputs, used for Q-values.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
    pub head: Head,
    pub seed: u64,
}

impl MlpSpec {
    pub fn new(input: usize, hidden: &[usize], output: usize, head: Head, seed: u64) -> Self {
        MlpSpec {
            input,
            hidden: hidden.to_vec(),
            output,
            head,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.output == 0 || self.hidden.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "layer widths must be >= 1: {} -> {:?} -> {}",
                self.input, self.hidden, self.output
            )));
        }
        Ok(())
    }

    /// Checks the constraints of the prediction-model architecture grid.
    pub fn validate_grid(&self) -> Result<()> {
        self.validate()?;
        if !(1..=3).contains(&self.hidden.len()) {
            return Err(Error::InvalidArgument(format!(
                "grid architectures have 1-3 hidden layers, got {}",
                self.hidden.len()
            )));
        }
        if let Some(w) = self.hidden.iter().find(|w| !GRID_WIDTHS.contains(w)) {
            return Err(Error::InvalidArgument(format!(
                "width {w} is not in the grid"
            )));
        }
        Ok(())
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input);
        w.extend(&self.hidden);
        w.push(self.output);
        w
    }
}

/// A dense layer, `out = in . weights + bias` with `weights` shaped `(in, out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros_like(&self) -> Dense {
        Dense {
            weights: Array2::zeros(self.weights.raw_dim()),
            bias: Array1::zeros(self.bias.raw_dim()),
        }
    }
}

/// Serialized as its [`MlpSpec`] plus flattened weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "FlatParams", try_from = "FlatParams")]
pub struct MlpParams {
    pub spec: MlpSpec,
    pub layers: Vec<Dense>,
}

#[derive(Serialize, Deserialize)]
struct FlatParams {
    spec: MlpSpec,
    weights: Vec<f64>,
}

impl From<MlpParams> for FlatParams {
    fn from(p: MlpParams) -> Self {
        FlatParams {
            weights: p.flatten(),
            spec: p.spec,
        }
    }
}

impl TryFrom<FlatParams> for MlpParams {
    type Error = Error;

    fn try_from(f: FlatParams) -> Result<Self> {
        MlpParams::from_flat(&f.spec, &f.weights)
    }
}

/// Per-layer inputs and pre-activations from a batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `inputs[k]` is what layer `k` consumed; `inputs[0]` is the batch itself.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of every hidden layer.
    pre_activations: Vec<Array2<f64>>,
}

/// Gradients with the same shapes as [`MlpParams::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(params: &MlpParams) -> Gradients {
        Gradients {
            layers: params.layers.iter().map(Dense::zeros_like).collect(),
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.layers
            .iter()
            .fold(0.0, |acc, l| {
                let acc = l.weights.iter().fold(acc, |a, g| a + g * g);
                l.bias.iter().fold(acc, |a, g| a + g * g)
            })
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for layer in &mut self.layers {
            layer.weights *= factor;
            layer.bias *= factor;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
    }
}

impl MlpParams {
    /// He-style uniform initialization, `U(-sqrt(6/fan_in), sqrt(6/fan_in))`,
    /// with zero biases.
    pub fn init(spec: &MlpSpec) -> Result<MlpParams> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let widths = spec.widths();
        let layers = widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / fan_in as f64).sqrt();
                let weights = Array2::from_shape_simple_fn((fan_in, fan_out), || {
                    rng.random_range(-bound..bound)
                });
                Dense {
                    weights,
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(MlpParams {
            spec: spec.clone(),
            layers,
        })
    }

    pub fn zeros(spec: &MlpSpec) -> Result<MlpParams> {
        let mut params = MlpParams::init(spec)?;
        for layer in &mut params.layers {
            layer.weights.fill(0.0);
        }
        Ok(params)
    }

    pub fn input_width(&self) -> usize {
        self.spec.input
    }

    pub fn output_width(&self) -> usize {
        self.spec.output
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.spec.input {
            return Err(Error::shape(
                format!("input width {}", self.spec.input),
                cols,
            ));
        }
        Ok(())
    }

    /// Output-layer values before the head, one row per input row.
    pub fn logits_batch(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(inputs.ncols())?;
        let last = self.layers.len() - 1;
        let mut act = inputs.to_owned();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = act.dot(&layer.weights);
            z += &layer.bias;
            if k < last {
                z.mapv_inplace(relu);
            }
            act = z;
        }
        Ok(act)
    }

    /// Batched forward pass with the head applied.
    pub fn forward_batch(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut out = self.logits_batch(inputs)?;
        if self.spec.head == Head::Softmax {
            softmax_rows(&mut out);
        }
        Ok(out)
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|e| Error::shape(self.spec.input, e))?;
        Ok(self.forward_batch(view)?.row(0).to_vec())
    }

    /// Forward pass that keeps what [`MlpParams::backward`] needs. Returns
    /// the pre-head outputs.
    pub fn forward_cached(&self, inputs: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_input(inputs.ncols())?;
        let last = self.layers.len() - 1;
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre_activations: Vec::with_capacity(last),
        };
        let mut act = inputs.to_owned();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = act.dot(&layer.weights);
            z += &layer.bias;
            cache.inputs.push(act);
            if k < last {
                act = z.mapv(relu);
                cache.pre_activations.push(z);
            } else {
                act = z;
            }
        }
        Ok((act, cache))
    }

    /// Backpropagates `grad_output`, the loss gradient with respect to the
    /// pre-head outputs, through the network.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_output: ArrayView2<f64>,
    ) -> Result<Gradients> {
        let batch = cache.inputs.first().map(|a| a.nrows()).unwrap_or(0);
        if cache.inputs.len() != self.layers.len() || grad_output.dim() != (batch, self.spec.output)
        {
            return Err(Error::shape(
                format!("({batch}, {}) from matching forward", self.spec.output),
                format!("{:?}", grad_output.dim()),
            ));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = grad_output.to_owned();
        for k in (0..self.layers.len()).rev() {
            let input = &cache.inputs[k];
            let weights = input.t().dot(&delta);
            let bias = delta.sum_axis(Axis(0));
            if k > 0 {
                let mut upstream = delta.dot(&self.layers[k].weights.t());
                upstream.zip_mut_with(&cache.pre_activations[k - 1], |g, &z| {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                });
                delta = upstream;
            }
            grads.push(Dense { weights, bias });
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }

    /// All weights and biases, layer by layer, weights row-major first.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub fn from_flat(spec: &MlpSpec, flat: &[f64]) -> Result<MlpParams> {
        let mut params = MlpParams::zeros(spec)?;
        if flat.len() != params.param_count() {
            return Err(Error::shape(params.param_count(), flat.len()));
        }
        let mut values = flat.iter().copied();
        for layer in &mut params.layers {
            for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *w = values.next().unwrap_or_default();
            }
        }
        if !params.flatten().iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite parameter".into()));
        }
        Ok(params)
    }

    /// `self <- rho * online + (1 - rho) * self`.
    pub fn soft_update_from(&mut self, online: &MlpParams, rho: f64) -> Result<()> {
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "soft update factor {rho} not in (0, 1]"
            )));
        }
        if self.spec.widths() != online.spec.widths() {
            return Err(Error::shape(
                format!("{:?}", self.spec.widths()),
                format!("{:?}", online.spec.widths()),
            ));
        }
        for (t, o) in self.layers.iter_mut().zip(&online.layers) {
            t.weights
                .zip_mut_with(&o.weights, |t, &o| *t = rho * o + (1.0 - rho) * *t);
            t.bias
                .zip_mut_with(&o.bias, |t, &o| *t = rho * o + (1.0 - rho) * *t);
        }
        Ok(())
    }
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub fn softmax_rows(values: &mut Array2<f64>) {
    for mut row in values.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

/// Mean softmax cross-entropy over a batch and its gradient with respect to
/// the logits.
pub fn softmax_cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> (f64, Array2<f64>) {
    let mut probs = logits.clone();
    softmax_rows(&mut probs);
    let n = labels.len().max(1) as f64;
    let mut loss = 0.0;
    for ((mut row, z), &y) in probs.rows_mut().into_iter().zip(logits.rows()).zip(labels) {
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - z[y];
        row[y] -= 1.0;
    }
    probs /= n;
    (loss / n, probs)
}
