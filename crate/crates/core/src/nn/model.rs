use rand::distr::{Distribution, Uniform};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{self, BatchNorm, BatchNormCache};
use super::tensor::{Matrix, Real};
use super::{Mode, NnError, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Architecture {
    Dff,
    ResNet,
}

impl Architecture {
    pub fn label(self) -> &'static str {
        match self {
            Architecture::Dff => "DFF-AUD",
            Architecture::ResNet => "ResNet-AUD",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub input_dim: usize,
    pub output_dim: usize,
    /// Width α of every hidden layer.
    pub hidden_width: usize,
    /// Dense layer count for `Dff`, residual block count for `ResNet`.
    pub depth: usize,
    pub dropout: f64,
    pub bn_epsilon: f64,
    pub bn_momentum: f64,
}

impl ModelConfig {
    /// Twelve dense layers.
    pub fn dff(input_dim: usize, output_dim: usize) -> Self {
        Self {
            architecture: Architecture::Dff,
            input_dim,
            output_dim,
            hidden_width: 256,
            depth: 12,
            dropout: 0.1,
            bn_epsilon: 1e-3,
            bn_momentum: 0.99,
        }
    }

    /// Nine residual blocks.
    pub fn resnet(input_dim: usize, output_dim: usize) -> Self {
        Self {
            architecture: Architecture::ResNet,
            depth: 9,
            ..Self::dff(input_dim, output_dim)
        }
    }

    pub fn with_architecture(self, architecture: Architecture) -> Self {
        Self { architecture, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_width == 0 {
            return Err(NnError::Config("input, output and hidden widths must be positive".into()));
        }
        if self.architecture == Architecture::Dff && self.depth == 0 {
            return Err(NnError::Config("a DFF model needs at least one layer".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(NnError::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.bn_epsilon >= 0.0) || !(0.0..=1.0).contains(&self.bn_momentum) {
            return Err(NnError::Config("batch norm epsilon must be >= 0 and momentum in [0, 1]".into()));
        }
        Ok(())
    }

    /// `(fan_in, fan_out, batch_norm)` per dense layer, input to output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize, bool)> {
        let (a, i, o) = (self.hidden_width, self.input_dim, self.output_dim);
        match self.architecture {
            Architecture::Dff => {
                let mut dims = vec![i];
                dims.extend(std::iter::repeat_n(a, self.depth - 1));
                dims.push(o);
                dims.windows(2).map(|w| (w[0], w[1], false)).collect()
            }
            Architecture::ResNet => {
                let mut shapes = vec![(i, a, true)];
                shapes.extend(std::iter::repeat_n((a, a, true), self.depth));
                shapes.push((a, o, false));
                shapes
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    /// out×in
    pub weight: Matrix<T>,
    pub bias: Vec<T>,
}

/// One dense layer and the batch normalization that follows it, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub dense: Dense<T>,
    pub norm: Option<BatchNorm<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    config: ModelConfig,
    layers: Vec<Layer<T>>,
    trained: bool,
    revision: u64,
}

#[derive(Debug, Clone)]
enum ArchCache<T> {
    Dff {
        /// Input of every dense layer.
        inputs: Vec<Matrix<T>>,
        /// Pre-activation of every hidden layer.
        pre: Vec<Matrix<T>>,
        masks: Vec<Option<Vec<T>>>,
    },
    ResNet {
        /// Input of every dense layer (block inputs are already rectified).
        inputs: Vec<Matrix<T>>,
        norms: Vec<BatchNormCache<T>>,
        /// Batch-norm output of every block, before ReLU.
        block_pre: Vec<Matrix<T>>,
        masks: Vec<Option<Vec<T>>>,
    },
}

/// Everything backward needs from a train-mode forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    revision: u64,
    mode: Mode,
    probs: Matrix<T>,
    arch: ArchCache<T>,
}

impl<T: Real> ForwardCache<T> {
    pub fn probs(&self) -> &Matrix<T> {
        &self.probs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads<T> {
    pub weight: Matrix<T>,
    pub bias: Vec<T>,
    pub scale: Option<Vec<T>>,
    pub shift: Option<Vec<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<LayerGrads<T>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient tensors in canonical parameter order.
    pub fn tensors(&self) -> Vec<&[T]> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(l.weight.as_slice());
            out.push(l.bias.as_slice());
            if let (Some(s), Some(h)) = (&l.scale, &l.shift) {
                out.push(s.as_slice());
                out.push(h.as_slice());
            }
        }
        out
    }
}

impl<T: Real> Model<T> {
    /// Fan-in scaled uniform weights `U(-√(6/fan_in), √(6/fan_in))`, zero biases.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::stream_rng(seed, rng::stream::INIT);
        let layers = config
            .layer_shapes()
            .into_iter()
            .map(|(fan_in, fan_out, bn)| {
                let limit = (6.0 / fan_in as f64).sqrt();
                let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
                let weight = Matrix::from_vec(
                    fan_out,
                    fan_in,
                    (0..fan_in * fan_out).map(|_| T::lit(dist.sample(&mut rng))).collect(),
                );
                Layer {
                    dense: Dense {
                        weight,
                        bias: vec![T::zero(); fan_out],
                    },
                    norm: bn.then(|| BatchNorm::new(fan_out)),
                }
            })
            .collect();
        Ok(Self {
            config,
            layers,
            trained: false,
            revision: 0,
        })
    }

    /// Assembles a model from explicit layers after checking their shapes.
    pub fn from_layers(config: ModelConfig, layers: Vec<Layer<T>>, trained: bool) -> Result<Self> {
        config.validate()?;
        let shapes = config.layer_shapes();
        if shapes.len() != layers.len() {
            return Err(NnError::Dimension(format!(
                "config needs {} layers, got {}",
                shapes.len(),
                layers.len()
            )));
        }
        for (i, ((fan_in, fan_out, bn), layer)) in shapes.iter().zip(&layers).enumerate() {
            let d = &layer.dense;
            if d.weight.rows() != *fan_out || d.weight.cols() != *fan_in || d.bias.len() != *fan_out {
                return Err(NnError::Dimension(format!("layer {i} does not chain as {fan_in}→{fan_out}")));
            }
            match (&layer.norm, bn) {
                (Some(norm), true) if norm.width() == *fan_out => {}
                (None, false) => {}
                _ => return Err(NnError::Dimension(format!("layer {i} batch norm does not match config"))),
            }
        }
        Ok(Self {
            config,
            layers,
            trained,
            revision: 0,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    /// Mutable access to the layers; invalidates outstanding forward caches.
    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        self.revision += 1;
        &mut self.layers
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn mark_trained(&mut self) {
        self.trained = true;
    }

    pub fn architecture(&self) -> Architecture {
        self.config.architecture
    }

    pub fn parameter_count(&self) -> usize {
        self.parameter_tensors().iter().map(|t| t.len()).sum()
    }

    /// Trainable tensors in canonical order: per layer weight, bias, then
    /// batch-norm scale and shift.
    pub fn parameter_tensors(&self) -> Vec<&[T]> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(l.dense.weight.as_slice());
            out.push(l.dense.bias.as_slice());
            if let Some(n) = &l.norm {
                out.push(n.scale.as_slice());
                out.push(n.shift.as_slice());
            }
        }
        out
    }

    /// Mutable counterpart of [`Model::parameter_tensors`].
    pub fn parameter_tensors_mut(&mut self) -> Vec<&mut [T]> {
        self.revision += 1;
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.push(l.dense.weight.as_mut_slice());
            out.push(l.dense.bias.as_mut_slice());
            if let Some(n) = &mut l.norm {
                out.push(n.scale.as_mut_slice());
                out.push(n.shift.as_mut_slice());
            }
        }
        out
    }

    fn check_input(&self, x: &Matrix<T>) -> Result<()> {
        if x.cols() != self.config.input_dim {
            return Err(NnError::Dimension(format!(
                "model expects {} inputs, batch has {}",
                self.config.input_dim,
                x.cols()
            )));
        }
        Ok(())
    }

    /// Forward pass dispatched on the architecture. Train mode applies
    /// dropout and folds the batch statistics into the running statistics.
    pub fn forward<R: Rng + ?Sized>(
        &mut self,
        x: &Matrix<T>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Matrix<T>, ForwardCache<T>)> {
        match self.config.architecture {
            Architecture::Dff => self.forward_dff(x, mode, rng),
            Architecture::ResNet => self.forward_resnet(x, mode, rng),
        }
    }

    /// Inference-mode probabilities; a pure function of parameters and input.
    pub fn predict(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        // infer mode never draws from the generator
        let mut idle = rng::stream_rng(0, 0);
        let (probs, _) = match self.config.architecture {
            Architecture::Dff => self.run_dff(x, Mode::Infer, &mut idle)?,
            Architecture::ResNet => self.run_resnet(x, Mode::Infer, &mut idle)?,
        };
        Ok(probs)
    }

    pub fn forward_dff<R: Rng + ?Sized>(
        &mut self,
        x: &Matrix<T>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Matrix<T>, ForwardCache<T>)> {
        self.expect_arch(Architecture::Dff)?;
        self.run_dff(x, mode, rng)
    }

    pub fn forward_resnet<R: Rng + ?Sized>(
        &mut self,
        x: &Matrix<T>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Matrix<T>, ForwardCache<T>)> {
        self.expect_arch(Architecture::ResNet)?;
        let out = self.run_resnet(x, mode, rng)?;
        if let ArchCache::ResNet { norms, .. } = &out.1.arch {
            let momentum = self.config.bn_momentum;
            for (layer, cache) in self.layers.iter_mut().zip(norms) {
                layer.norm.as_mut().expect("resnet norm").update_running(cache, momentum);
            }
        }
        Ok(out)
    }

    fn run_dff<R: Rng + ?Sized>(&self, x: &Matrix<T>, mode: Mode, rng: &mut R) -> Result<(Matrix<T>, ForwardCache<T>)> {
        self.check_input(x)?;
        let depth = self.layers.len();
        let p = self.config.dropout;
        let mut inputs = Vec::with_capacity(depth);
        let mut pre = Vec::with_capacity(depth - 1);
        let mut masks = Vec::with_capacity(depth - 1);
        let mut a = x.clone();
        for layer in &self.layers[..depth - 1] {
            let z = a.affine(&layer.dense.weight, &layer.dense.bias);
            let (next, mask) = layers::dropout(&layers::relu(&z), p, mode, rng)?;
            inputs.push(a);
            pre.push(z);
            masks.push(mask);
            a = next;
        }
        let last = &self.layers[depth - 1].dense;
        let logits = a.affine(&last.weight, &last.bias);
        inputs.push(a);
        let probs = logits.map(layers::sigmoid);
        Ok((
            probs.clone(),
            ForwardCache {
                revision: self.revision,
                mode,
                probs,
                arch: ArchCache::Dff { inputs, pre, masks },
            },
        ))
    }

    fn run_resnet<R: Rng + ?Sized>(
        &self,
        x: &Matrix<T>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Matrix<T>, ForwardCache<T>)> {
        self.check_input(x)?;
        let (eps, p) = (self.config.bn_epsilon, self.config.dropout);
        let blocks = self.config.depth;
        let mut inputs = Vec::with_capacity(blocks + 2);
        let mut norms = Vec::with_capacity(blocks + 1);
        let mut block_pre = Vec::with_capacity(blocks);
        let mut masks = Vec::with_capacity(blocks);

        let first = &self.layers[0];
        let z = x.affine(&first.dense.weight, &first.dense.bias);
        let (mut stream, cache) = first.norm.as_ref().expect("resnet input norm").forward(&z, eps, mode)?;
        inputs.push(x.clone());
        norms.extend(cache);

        for layer in &self.layers[1..=blocks] {
            let block_in = layers::relu(&stream);
            let u = block_in.affine(&layer.dense.weight, &layer.dense.bias);
            let (v, cache) = layer.norm.as_ref().expect("block norm").forward(&u, eps, mode)?;
            let (out, mask) = layers::dropout(&layers::relu(&v), p, mode, rng)?;
            for (s, &o) in stream.as_mut_slice().iter_mut().zip(out.as_slice()) {
                *s = *s + o;
            }
            inputs.push(block_in);
            norms.extend(cache);
            block_pre.push(v);
            masks.push(mask);
        }

        let last = &self.layers[blocks + 1].dense;
        let logits = stream.affine(&last.weight, &last.bias);
        inputs.push(stream);
        let probs = logits.map(layers::sigmoid);
        Ok((
            probs.clone(),
            ForwardCache {
                revision: self.revision,
                mode,
                probs,
                arch: ArchCache::ResNet {
                    inputs,
                    norms,
                    block_pre,
                    masks,
                },
            },
        ))
    }

    fn expect_arch(&self, expected: Architecture) -> Result<()> {
        if self.config.architecture != expected {
            return Err(NnError::Architecture {
                expected,
                actual: self.config.architecture,
            });
        }
        Ok(())
    }

    /// Exact gradients of the mean binary cross-entropy of the cached pass.
    pub fn backward(&self, cache: &ForwardCache<T>, labels: &Matrix<T>) -> Result<Gradients<T>> {
        if cache.revision != self.revision {
            return Err(NnError::StaleCache);
        }
        if cache.mode != Mode::Train {
            return Err(NnError::InferCache);
        }
        let probs = &cache.probs;
        if labels.rows() != probs.rows() || labels.cols() != probs.cols() {
            return Err(NnError::Dimension(format!(
                "labels {}x{} for outputs {}x{}",
                labels.rows(),
                labels.cols(),
                probs.rows(),
                probs.cols()
            )));
        }
        // sigmoid + mean BCE: d loss / d logit = (p - y) / (Q N)
        let scale = T::one() / T::from_usize(probs.as_slice().len()).unwrap();
        let d_logits = Matrix::from_vec(
            probs.rows(),
            probs.cols(),
            probs
                .as_slice()
                .iter()
                .zip(labels.as_slice())
                .map(|(&p, &y)| (p - y) * scale)
                .collect(),
        );
        match &cache.arch {
            ArchCache::Dff { inputs, pre, masks } => Ok(self.backward_dff(d_logits, inputs, pre, masks)),
            ArchCache::ResNet {
                inputs,
                norms,
                block_pre,
                masks,
            } => Ok(self.backward_resnet(d_logits, inputs, norms, block_pre, masks)),
        }
    }

    fn backward_dff(
        &self,
        d_logits: Matrix<T>,
        inputs: &[Matrix<T>],
        pre: &[Matrix<T>],
        masks: &[Option<Vec<T>>],
    ) -> Gradients<T> {
        let depth = self.layers.len();
        let mut grads = Vec::with_capacity(depth);
        let mut delta = d_logits;
        for i in (0..depth).rev() {
            let dense = &self.layers[i].dense;
            grads.push(LayerGrads {
                weight: delta.t_matmul(&inputs[i]),
                bias: delta.sum_rows(),
                scale: None,
                shift: None,
            });
            if i == 0 {
                break;
            }
            let mut d_in = delta.matmul(&dense.weight);
            gate(&mut d_in, masks[i - 1].as_deref(), &pre[i - 1]);
            delta = d_in;
        }
        grads.reverse();
        Gradients { layers: grads }
    }

    fn backward_resnet(
        &self,
        d_logits: Matrix<T>,
        inputs: &[Matrix<T>],
        norms: &[BatchNormCache<T>],
        block_pre: &[Matrix<T>],
        masks: &[Option<Vec<T>>],
    ) -> Gradients<T> {
        let blocks = self.config.depth;
        let mut grads: Vec<Option<LayerGrads<T>>> = vec![None; blocks + 2];

        let out = &self.layers[blocks + 1].dense;
        grads[blocks + 1] = Some(LayerGrads {
            weight: d_logits.t_matmul(&inputs[blocks + 1]),
            bias: d_logits.sum_rows(),
            scale: None,
            shift: None,
        });
        // gradient w.r.t. the accumulated residual stream
        let mut d_stream = d_logits.matmul(&out.weight);

        for t in (1..=blocks).rev() {
            let layer = &self.layers[t];
            let mut d_block = d_stream.clone();
            gate(&mut d_block, masks[t - 1].as_deref(), &block_pre[t - 1]);
            let norm = layer.norm.as_ref().expect("block norm");
            let (d_u, d_scale, d_shift) = norm.backward(&norms[t], &d_block);
            grads[t] = Some(LayerGrads {
                weight: d_u.t_matmul(&inputs[t]),
                bias: d_u.sum_rows(),
                scale: Some(d_scale),
                shift: Some(d_shift),
            });
            let d_in = d_u.matmul(&layer.dense.weight);
            // block input is relu(stream): pass where the rectified input is positive
            for ((s, &g), &x) in d_stream
                .as_mut_slice()
                .iter_mut()
                .zip(d_in.as_slice())
                .zip(inputs[t].as_slice())
            {
                if x > T::zero() {
                    *s = *s + g;
                }
            }
        }

        let first = &self.layers[0];
        let (d_z, d_scale, d_shift) = first.norm.as_ref().expect("input norm").backward(&norms[0], &d_stream);
        grads[0] = Some(LayerGrads {
            weight: d_z.t_matmul(&inputs[0]),
            bias: d_z.sum_rows(),
            scale: Some(d_scale),
            shift: Some(d_shift),
        });
        Gradients {
            layers: grads.into_iter().map(|g| g.expect("every layer visited")).collect(),
        }
    }
}

/// Back through dropout then ReLU: multiply by the dropout multiplier and
/// zero where the pre-activation was not positive.
fn gate<T: Real>(delta: &mut Matrix<T>, mask: Option<&[T]>, pre: &Matrix<T>) {
    let d = delta.as_mut_slice();
    match mask {
        Some(mask) => {
            for ((g, &m), &z) in d.iter_mut().zip(mask).zip(pre.as_slice()) {
                *g = if z > T::zero() { *g * m } else { T::zero() };
            }
        }
        None => {
            for (g, &z) in d.iter_mut().zip(pre.as_slice()) {
                if z <= T::zero() {
                    *g = T::zero();
                }
            }
        }
    }
}
