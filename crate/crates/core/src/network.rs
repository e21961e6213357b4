//! Fully-connected network evaluated either on plain reals or on
//! second-order jets in the target input.
//!
//! Parameters live in one flat buffer, layer-major; within a layer the
//! weight matrix comes first (row-major, `fan_out × fan_in`) followed by the
//! bias vector. The same layout is used for gradients, the Adam moments and
//! the serialized model file.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jets::Jet2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    /// `(g, g', g'', g''')` at `z`.
    #[inline]
    fn derivatives(self, z: f64) -> (f64, f64, f64, f64) {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                let s = 1.0 - t * t;
                (t, s, -2.0 * t * s, s * (6.0 * t * t - 2.0))
            }
            Activation::Relu => {
                if z > 0.0 {
                    (z, 1.0, 0.0, 0.0)
                } else {
                    (0.0, 0.0, 0.0, 0.0)
                }
            }
            Activation::Identity => (z, 1.0, 0.0, 0.0),
        }
    }

    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    #[inline]
    pub fn apply_jet(self, z: Jet2) -> Jet2 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.relu(),
            Activation::Identity => z,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "identity" | "linear" => Ok(Activation::Identity),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    /// Number of network inputs. For the implicit model this counts the
    /// appended target `y` as the last input.
    pub input_dim: usize,
    pub hidden_sizes: Vec<usize>,
    pub activation: Activation,
    pub output_activation: Activation,
    #[serde(default = "one")]
    pub output_dim: usize,
}

fn one() -> usize {
    1
}

impl NetConfig {
    /// Implicit network `f(x, y)` over `feature_dim` features: tanh units
    /// everywhere, scalar output.
    pub fn implicit(feature_dim: usize, hidden_sizes: &[usize]) -> Self {
        Self {
            input_dim: feature_dim + 1,
            hidden_sizes: hidden_sizes.to_vec(),
            activation: Activation::Tanh,
            output_activation: Activation::Tanh,
            output_dim: 1,
        }
    }

    /// Plain regressor `x -> y` with identity output.
    pub fn regressor(feature_dim: usize, hidden_sizes: &[usize]) -> Self {
        Self {
            input_dim: feature_dim,
            hidden_sizes: hidden_sizes.to_vec(),
            activation: Activation::Tanh,
            output_activation: Activation::Identity,
            output_dim: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_sizes.is_empty() {
            return Err(Error::Config("hidden_sizes must be nonempty".into()));
        }
        if self.hidden_sizes.contains(&0) || self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` for each layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.hidden_sizes.len() + 1);
        let mut fan_in = self.input_dim;
        for &h in &self.hidden_sizes {
            shapes.push((fan_in, h));
            fan_in = h;
        }
        shapes.push((fan_in, self.output_dim));
        shapes
    }

    fn layer_activation(&self, layer: usize) -> Activation {
        if layer == self.hidden_sizes.len() {
            self.output_activation
        } else {
            self.activation
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layer {
    fan_in: usize,
    fan_out: usize,
    offset: usize,
}

impl Layer {
    fn weights_range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.fan_in * self.fan_out
    }

    fn bias_range(&self) -> std::ops::Range<usize> {
        let start = self.offset + self.fan_in * self.fan_out;
        start..start + self.fan_out
    }
}

/// Network parameters (also used to hold a gradient of the same shape).
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    config: NetConfig,
    layers: Vec<Layer>,
    data: Vec<f64>,
}

impl MlpParams {
    pub fn zeros(config: &NetConfig) -> Result<Self> {
        config.validate()?;
        let mut layers = Vec::new();
        let mut offset = 0;
        for (fan_in, fan_out) in config.layer_shapes() {
            layers.push(Layer {
                fan_in,
                fan_out,
                offset,
            });
            offset += fan_in * fan_out + fan_out;
        }
        Ok(Self {
            config: config.clone(),
            layers,
            data: vec![0.0; offset],
        })
    }

    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn init_xavier(config: &NetConfig, seed: u64) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in params.layers.clone() {
            let bound = (6.0 / (layer.fan_in + layer.fan_out) as f64).sqrt();
            for w in &mut params.data[layer.weights_range()] {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(params)
    }

    /// Zero-filled buffer with this parameter shape.
    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config.clone(),
            layers: self.layers.clone(),
            data: vec![0.0; self.data.len()],
        }
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        &self.data[self.layers[layer].weights_range()]
    }

    pub fn weights_mut(&mut self, layer: usize) -> &mut [f64] {
        let r = self.layers[layer].weights_range();
        &mut self.data[r]
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        &self.data[self.layers[layer].bias_range()]
    }

    pub fn biases_mut(&mut self, layer: usize) -> &mut [f64] {
        let r = self.layers[layer].bias_range();
        &mut self.data[r]
    }

    pub fn same_shape(&self, other: &MlpParams) -> bool {
        self.layers == other.layers
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Plain forward pass; `inputs.len()` must equal `input_dim`.
    pub fn forward(&self, inputs: &[f64]) -> Result<Vec<f64>> {
        let mut trace = PlainTrace::default();
        self.forward_plain_into(inputs, &mut trace)?;
        Ok(trace.output().to_vec())
    }

    /// Plain forward pass retaining activations for [`MlpParams::backward_plain_into`].
    pub fn forward_plain_into(&self, inputs: &[f64], trace: &mut PlainTrace) -> Result<()> {
        check_dim(self.config.input_dim, inputs.len())?;
        trace.prepare(self);
        trace.acts[0].copy_from_slice(inputs);
        for (l, layer) in self.layers.iter().enumerate() {
            let act = self.config.layer_activation(l);
            let w = &self.data[layer.weights_range()];
            let b = &self.data[layer.bias_range()];
            let (before, after) = trace.acts.split_at_mut(l + 1);
            let input = &before[l];
            let pre = &mut trace.pre[l];
            let out = &mut after[0];
            for j in 0..layer.fan_out {
                let row = &w[j * layer.fan_in..(j + 1) * layer.fan_in];
                let mut acc = b[j];
                for (wi, hi) in row.iter().zip(input.iter()) {
                    acc += wi * hi;
                }
                pre[j] = acc;
                out[j] = act.apply(acc);
            }
        }
        Ok(())
    }

    /// Accumulates `∂(upstream · output)/∂θ` into `grad`.
    pub fn backward_plain_into(
        &self,
        trace: &PlainTrace,
        upstream: &[f64],
        grad: &mut MlpParams,
        scratch: &mut Vec<f64>,
    ) -> Result<()> {
        if !self.same_shape(grad) || trace.acts.len() != self.layers.len() + 1 {
            return Err(Error::Shape("trace or gradient does not match params".into()));
        }
        check_dim(self.config.output_dim, upstream.len())?;
        let mut g_out: Vec<f64> = upstream.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = self.layers[l];
            let act = self.config.layer_activation(l);
            let input = &trace.acts[l];
            let pre = &trace.pre[l];
            for (g, &z) in g_out.iter_mut().zip(pre.iter()) {
                *g *= act.derivatives(z).1;
            }
            let w = &self.data[layer.weights_range()];
            {
                let gw = &mut grad.data[layer.weights_range()];
                for j in 0..layer.fan_out {
                    let gz = g_out[j];
                    for (gwi, hi) in gw[j * layer.fan_in..(j + 1) * layer.fan_in]
                        .iter_mut()
                        .zip(input.iter())
                    {
                        *gwi += gz * hi;
                    }
                }
            }
            for (gb, gz) in grad.data[layer.bias_range()].iter_mut().zip(&g_out) {
                *gb += gz;
            }
            if l > 0 {
                scratch.clear();
                scratch.resize(layer.fan_in, 0.0);
                for j in 0..layer.fan_out {
                    let gz = g_out[j];
                    for (s, wi) in scratch
                        .iter_mut()
                        .zip(&w[j * layer.fan_in..(j + 1) * layer.fan_in])
                    {
                        *s += wi * gz;
                    }
                }
                std::mem::swap(&mut g_out, scratch);
            }
        }
        Ok(())
    }

    /// Jet forward pass of the implicit network: `x` entries are lifted as
    /// constants and `y` is seeded, giving `(f, ∂f/∂y, ∂²f/∂y²)`.
    pub fn forward_jet(&self, x: &[f64], y: f64) -> Result<(Jet2, ForwardTrace)> {
        let mut trace = ForwardTrace::default();
        let out = self.forward_jet_into(x, y, &mut trace)?;
        Ok((out, trace))
    }

    pub fn forward_jet_into(&self, x: &[f64], y: f64, trace: &mut ForwardTrace) -> Result<Jet2> {
        check_dim(self.config.input_dim, x.len() + 1)?;
        if self.config.output_dim != 1 {
            return Err(Error::Shape("jet forward needs a scalar output".into()));
        }
        trace.prepare(self);
        for (slot, &xi) in trace.acts[0].iter_mut().zip(x) {
            *slot = Jet2::constant(xi);
        }
        trace.acts[0][x.len()] = Jet2::seed(y);

        for (l, layer) in self.layers.iter().enumerate() {
            let act = self.config.layer_activation(l);
            let w = &self.data[layer.weights_range()];
            let b = &self.data[layer.bias_range()];
            let (before, after) = trace.acts.split_at_mut(l + 1);
            let input = &before[l];
            let pre = &mut trace.pre[l];
            let out = &mut after[0];
            for j in 0..layer.fan_out {
                let row = &w[j * layer.fan_in..(j + 1) * layer.fan_in];
                let (mut v, mut d1, mut d2) = (b[j], 0.0, 0.0);
                for (wi, hi) in row.iter().zip(input.iter()) {
                    v += wi * hi.v;
                    d1 += wi * hi.d1;
                    d2 += wi * hi.d2;
                }
                let z = Jet2::new(v, d1, d2);
                pre[j] = z;
                out[j] = act.apply_jet(z);
            }
        }
        Ok(trace.acts[self.layers.len()][0])
    }

    /// Gradient of `gf·f + gd1·f_y + gd2·f_yy` with respect to every parameter.
    pub fn backward(&self, trace: &ForwardTrace, upstream: (f64, f64, f64)) -> Result<MlpParams> {
        let mut grad = self.zeros_like();
        let mut scratch = JetScratch::default();
        self.backward_jet_into(trace, upstream, &mut grad, &mut scratch)?;
        Ok(grad)
    }

    /// Reverse accumulation over the three-channel jet circuit; adds into `grad`.
    pub fn backward_jet_into(
        &self,
        trace: &ForwardTrace,
        upstream: (f64, f64, f64),
        grad: &mut MlpParams,
        scratch: &mut JetScratch,
    ) -> Result<()> {
        if !self.same_shape(grad) {
            return Err(Error::Shape("gradient buffer does not match params".into()));
        }
        if trace.pre.len() != self.layers.len()
            || trace
                .pre
                .iter()
                .zip(&self.layers)
                .any(|(p, layer)| p.len() != layer.fan_out)
            || trace.acts[0].len() != self.config.input_dim
        {
            return Err(Error::Shape("trace does not match params".into()));
        }

        let g_out = &mut scratch.current;
        g_out.clear();
        g_out.push(Jet2::new(upstream.0, upstream.1, upstream.2));

        for l in (0..self.layers.len()).rev() {
            let layer = self.layers[l];
            let act = self.config.layer_activation(l);

            // Adjoint through the activation: a = (g(z.v), g'·z.d1, g'·z.d2 + g''·z.d1²).
            for (ga, z) in g_out.iter_mut().zip(&trace.pre[l]) {
                let (_, g1, g2, g3) = act.derivatives(z.v);
                let gz_v = ga.v * g1
                    + ga.d1 * g2 * z.d1
                    + ga.d2 * (g2 * z.d2 + g3 * z.d1 * z.d1);
                let gz_d1 = ga.d1 * g1 + ga.d2 * 2.0 * g2 * z.d1;
                let gz_d2 = ga.d2 * g1;
                *ga = Jet2::new(gz_v, gz_d1, gz_d2);
            }

            let input = &trace.acts[l];
            {
                let gw = &mut grad.data[layer.weights_range()];
                for (j, gz) in g_out.iter().enumerate() {
                    for (gwi, hi) in gw[j * layer.fan_in..(j + 1) * layer.fan_in]
                        .iter_mut()
                        .zip(input.iter())
                    {
                        *gwi += gz.v * hi.v + gz.d1 * hi.d1 + gz.d2 * hi.d2;
                    }
                }
            }
            for (gb, gz) in grad.data[layer.bias_range()].iter_mut().zip(g_out.iter()) {
                *gb += gz.v;
            }

            if l > 0 {
                let w = &self.data[layer.weights_range()];
                let g_in = &mut scratch.previous;
                g_in.clear();
                g_in.resize(layer.fan_in, Jet2::default());
                for (j, gz) in g_out.iter().enumerate() {
                    for (gi, wi) in g_in
                        .iter_mut()
                        .zip(&w[j * layer.fan_in..(j + 1) * layer.fan_in])
                    {
                        gi.v += wi * gz.v;
                        gi.d1 += wi * gz.d1;
                        gi.d2 += wi * gz.d2;
                    }
                }
                std::mem::swap(g_out, g_in);
            }
        }
        Ok(())
    }

    pub fn to_model_file(&self) -> ModelFile {
        ModelFile {
            format: MODEL_FORMAT.to_string(),
            config: self.config.clone(),
            layers: self
                .layers
                .iter()
                .map(|layer| LayerRecord {
                    fan_in: layer.fan_in,
                    fan_out: layer.fan_out,
                    weights: self.data[layer.weights_range()].to_vec(),
                    biases: self.data[layer.bias_range()].to_vec(),
                })
                .collect(),
        }
    }

    pub fn from_model_file(file: &ModelFile) -> Result<Self> {
        if file.format != MODEL_FORMAT {
            return Err(Error::Format(format!("unknown format `{}`", file.format)));
        }
        let mut params = Self::zeros(&file.config)?;
        if params.layers.len() != file.layers.len() {
            return Err(Error::Format("layer count does not match config".into()));
        }
        for (l, rec) in file.layers.iter().enumerate() {
            let layer = params.layers[l];
            if rec.fan_in != layer.fan_in
                || rec.fan_out != layer.fan_out
                || rec.weights.len() != layer.fan_in * layer.fan_out
                || rec.biases.len() != layer.fan_out
            {
                return Err(Error::Format(format!("layer {l} has inconsistent shape")));
            }
            params.data[layer.weights_range()].copy_from_slice(&rec.weights);
            params.data[layer.bias_range()].copy_from_slice(&rec.biases);
        }
        if !params.is_finite() {
            return Err(Error::Format("non-finite parameter".into()));
        }
        Ok(params)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_model_file()).expect("model file serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        Self::from_model_file(&file)
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}

pub const MODEL_FORMAT: &str = "implicit-modal/mlp-v1";

/// Serialized network: layer-major, row-major weights then biases.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub config: NetConfig,
    pub layers: Vec<LayerRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerRecord {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Per-layer jets kept by the forward pass. `acts[0]` holds the inputs,
/// `acts[l + 1]` the output of layer `l`, `pre[l]` its pre-activation.
#[derive(Debug, Clone, Default)]
pub struct ForwardTrace {
    acts: Vec<Vec<Jet2>>,
    pre: Vec<Vec<Jet2>>,
}

impl ForwardTrace {
    fn prepare(&mut self, params: &MlpParams) {
        let n = params.layers.len();
        self.acts.resize_with(n + 1, Vec::new);
        self.pre.resize_with(n, Vec::new);
        self.acts[0].resize(params.config.input_dim, Jet2::default());
        for (l, layer) in params.layers.iter().enumerate() {
            self.acts[l + 1].resize(layer.fan_out, Jet2::default());
            self.pre[l].resize(layer.fan_out, Jet2::default());
        }
    }

    pub fn num_layers(&self) -> usize {
        self.pre.len()
    }

    pub fn pre_activation(&self, layer: usize) -> &[Jet2] {
        &self.pre[layer]
    }

    pub fn post_activation(&self, layer: usize) -> &[Jet2] {
        &self.acts[layer + 1]
    }
}

/// Reusable adjoint buffers for [`MlpParams::backward_jet_into`].
#[derive(Debug, Clone, Default)]
pub struct JetScratch {
    current: Vec<Jet2>,
    previous: Vec<Jet2>,
}

#[derive(Debug, Clone, Default)]
pub struct PlainTrace {
    acts: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl PlainTrace {
    fn prepare(&mut self, params: &MlpParams) {
        let n = params.layers.len();
        self.acts.resize_with(n + 1, Vec::new);
        self.pre.resize_with(n, Vec::new);
        self.acts[0].resize(params.config.input_dim, 0.0);
        for (l, layer) in params.layers.iter().enumerate() {
            self.acts[l + 1].resize(layer.fan_out, 0.0);
            self.pre[l].resize(layer.fan_out, 0.0);
        }
    }

    pub fn output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Output of hidden layer `layer` (e.g. for feature export).
    pub fn hidden(&self, layer: usize) -> &[f64] {
        &self.acts[layer + 1]
    }
}
