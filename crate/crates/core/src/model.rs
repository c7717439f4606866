//! Fully-connected encoder with optional VIB head, plus the classifier head.
//!
//! Hidden layers apply the activation; the last encoder layer is linear and its
//! output is the feature used for ranking. In VIB mode two affine maps turn the
//! feature into the latent mean and the raw σ parameter, and the classifier
//! reads the sampled latent instead of the feature.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_len, Error, Result};
use crate::rng::RngStream;
use crate::vib::{sigmoid, LatentGaussian};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative given the pre-activation.
    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
        }
    }
}

/// Affine map `y = W x + b`, `W` stored row-major as outputs × inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Weights uniform in `±√(6 / fan_in)`, biases zero.
    pub fn init(inputs: usize, outputs: usize, rng: &mut RngStream) -> Self {
        let bound = (6.0 / inputs as f64).sqrt();
        let weights = (0..inputs * outputs)
            .map(|_| rng.uniform_range(-bound, bound))
            .collect();
        Self {
            inputs,
            outputs,
            weights,
            bias: vec![0.0; outputs],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut d = Self::zeros(dim, dim);
        for i in 0..dim {
            d.weights[i * dim + i] = 1.0;
        }
        d
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.inputs);
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b)
            .collect()
    }

    /// `Wᵀ g`.
    pub fn pull_back(&self, grad_out: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.inputs];
        for (row, g) in self.weights.chunks_exact(self.inputs).zip(grad_out) {
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * g;
            }
        }
        out
    }

    /// Treating `self` as a gradient buffer: `dW += g xᵀ`, `db += g`.
    pub(crate) fn accumulate(&mut self, grad_out: &[f64], input: &[f64]) {
        for ((row, g), b) in self
            .weights
            .chunks_exact_mut(self.inputs)
            .zip(grad_out)
            .zip(self.bias.iter_mut())
        {
            for (w, x) in row.iter_mut().zip(input) {
                *w += g * x;
            }
            *b += g;
        }
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.inputs, self.outputs)
    }

    fn slices(&self) -> [&[f64]; 2] {
        [&self.weights, &self.bias]
    }

    fn slices_mut(&mut self) -> [&mut [f64]; 2] {
        [&mut self.weights, &mut self.bias]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VibHead {
    pub mean: Dense,
    pub raw_sigma: Dense,
}

/// Architecture of the encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// Input width, hidden widths, then feature width.
    pub layer_sizes: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    /// Latent width of the VIB head; `None` for a plain encoder.
    #[serde(default)]
    pub latent_dim: Option<usize>,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::Config(
                "layer spec needs at least an input and a feature width".into(),
            ));
        }
        if let Some(i) = self.layer_sizes.iter().position(|&n| n == 0) {
            return Err(Error::Config(format!("layer {i} has zero width")));
        }
        if self.latent_dim == Some(0) {
            return Err(Error::Config("latent dimension must be positive".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn feature_dim(&self) -> usize {
        *self.layer_sizes.last().expect("validated spec")
    }

    /// Width the classifier sees and the ranking feature width.
    pub fn embedding_dim(&self) -> usize {
        self.latent_dim.unwrap_or_else(|| self.feature_dim())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderModel {
    pub spec: ModelSpec,
    pub layers: Vec<Dense>,
    pub vib: Option<VibHead>,
}

/// Initial bias of the raw-σ map: `softplus(ln(e − 1)) = 1`, so σ starts at the prior.
const RAW_SIGMA_BIAS: f64 = 0.541_324_854_612_918_1;

pub fn init_model(spec: &ModelSpec, seed: u64) -> Result<EncoderModel> {
    spec.validate()?;
    let rng = RngStream::new(seed).fork_named("encoder-init");
    let layers = spec
        .layer_sizes
        .windows(2)
        .enumerate()
        .map(|(i, w)| Dense::init(w[0], w[1], &mut rng.fork(i as u64)))
        .collect();
    let vib = spec.latent_dim.map(|latent| {
        let feature = spec.feature_dim();
        let mut raw_sigma = Dense::init(feature, latent, &mut rng.fork_named("raw-sigma"));
        raw_sigma.bias.fill(RAW_SIGMA_BIAS);
        VibHead {
            mean: Dense::init(feature, latent, &mut rng.fork_named("mean")),
            raw_sigma,
        }
    });
    Ok(EncoderModel {
        spec: spec.clone(),
        layers,
        vib,
    })
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each hidden layer.
    pre_activations: Vec<Vec<f64>>,
    pub feature: Vec<f64>,
}

impl EncoderModel {
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        ensure_len("encoder input", self.spec.input_dim(), input.len())?;
        ensure_finite("encoder input", input)?;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(last);
        let mut x = input.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let h = layer.apply(&x);
            inputs.push(std::mem::take(&mut x));
            if i < last {
                x = h.iter().map(|&v| self.spec.activation.apply(v)).collect();
                pre_activations.push(h);
            } else {
                x = h;
            }
        }
        let cache = ForwardCache {
            inputs,
            pre_activations,
            feature: x.clone(),
        };
        Ok((x, cache))
    }

    /// Latent posterior and the raw σ outputs for a feature.
    pub fn latent(&self, feature: &[f64]) -> Result<(LatentGaussian, Vec<f64>)> {
        let head = self
            .vib
            .as_ref()
            .ok_or_else(|| Error::Config("model has no VIB head".into()))?;
        let raw = head.raw_sigma.apply(feature);
        Ok((LatentGaussian::from_raw(head.mean.apply(feature), &raw)?, raw))
    }

    /// Accumulates parameter gradients into `grads` given `∂L/∂feature`.
    pub fn backward(&self, cache: &ForwardCache, grad_feature: &[f64], grads: &mut EncoderModel) {
        let mut g = grad_feature.to_vec();
        for i in (0..self.layers.len()).rev() {
            if i < self.layers.len() - 1 {
                for (gj, h) in g.iter_mut().zip(&cache.pre_activations[i]) {
                    *gj *= self.spec.activation.derivative(*h);
                }
            }
            grads.layers[i].accumulate(&g, &cache.inputs[i]);
            if i > 0 {
                g = self.layers[i].pull_back(&g);
            }
        }
    }

    /// Accumulates VIB-head gradients and returns `∂L/∂feature`.
    pub(crate) fn backward_latent(
        &self,
        feature: &[f64],
        raw_sigma: &[f64],
        grad_mu: &[f64],
        grad_sigma: &[f64],
        grads: &mut EncoderModel,
    ) -> Vec<f64> {
        let head = self.vib.as_ref().expect("caller checked VIB head");
        let grad_raw: Vec<f64> = grad_sigma
            .iter()
            .zip(raw_sigma)
            .map(|(g, s)| g * sigmoid(*s))
            .collect();
        let gh = grads.vib.as_mut().expect("gradient buffer mirrors model");
        gh.mean.accumulate(grad_mu, feature);
        gh.raw_sigma.accumulate(&grad_raw, feature);
        let mut gf = head.mean.pull_back(grad_mu);
        for (a, b) in gf.iter_mut().zip(head.raw_sigma.pull_back(&grad_raw)) {
            *a += b;
        }
        gf
    }

    fn zeros_like(&self) -> Self {
        Self {
            spec: self.spec.clone(),
            layers: self.layers.iter().map(Dense::zeros_like).collect(),
            vib: self.vib.as_ref().map(|v| VibHead {
                mean: v.mean.zeros_like(),
                raw_sigma: v.raw_sigma.zeros_like(),
            }),
        }
    }

    fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.layers.iter().flat_map(Dense::slices).collect();
        if let Some(v) = &self.vib {
            out.extend(v.mean.slices());
            out.extend(v.raw_sigma.slices());
        }
        out
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = self.layers.iter_mut().flat_map(Dense::slices_mut).collect();
        if let Some(v) = &mut self.vib {
            out.extend(v.mean.slices_mut());
            out.extend(v.raw_sigma.slices_mut());
        }
        out
    }
}

/// Linear map from the embedding to class logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierHead {
    pub layer: Dense,
}

impl ClassifierHead {
    pub fn init(embedding_dim: usize, num_classes: usize, seed: u64) -> Result<Self> {
        if embedding_dim == 0 || num_classes < 2 {
            return Err(Error::Config(format!(
                "classifier needs a positive input width and >= 2 classes, got {embedding_dim} -> {num_classes}"
            )));
        }
        let mut rng = RngStream::new(seed).fork_named("classifier-init");
        Ok(Self {
            layer: Dense::init(embedding_dim, num_classes, &mut rng),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.layer.outputs
    }

    pub fn logits(&self, embedding: &[f64]) -> Result<Vec<f64>> {
        ensure_len("classifier input", self.layer.inputs, embedding.len())?;
        Ok(self.layer.apply(embedding))
    }
}

/// Encoder and classifier as one trainable unit. The same type doubles as the
/// gradient buffer, so gradients always mirror the parameter layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub encoder: EncoderModel,
    pub head: ClassifierHead,
}

impl Network {
    pub fn new(encoder: EncoderModel, head: ClassifierHead) -> Result<Self> {
        ensure_len("classifier input width", encoder.spec.embedding_dim(), head.layer.inputs)?;
        Ok(Self { encoder, head })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            encoder: self.encoder.zeros_like(),
            head: ClassifierHead {
                layer: self.head.layer.zeros_like(),
            },
        }
    }

    /// Parameter slices in a fixed order: encoder layers, VIB head, classifier.
    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = self.encoder.slices();
        out.extend(self.head.layer.slices());
        out
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.encoder.slices_mut();
        out.extend(self.head.layer.slices_mut());
        out
    }

    pub fn num_params(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.param_slices().concat()
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        ensure_len("flat parameter vector", self.num_params(), values.len())?;
        let mut offset = 0;
        for s in self.param_slices_mut() {
            s.copy_from_slice(&values[offset..offset + s.len()]);
            offset += s.len();
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &Network) {
        for (a, b) in self.param_slices_mut().into_iter().zip(other.param_slices()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for s in self.param_slices_mut() {
            for x in s {
                *x *= factor;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.param_slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}
