//! Layer descriptors and sequential networks built from them.

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::graph::{Graph, Var};
use crate::kernels;
use crate::{Gradients, NnError, Result, Tensor};

/// One layer of a sequential network. The descriptor is also the on-disk
/// architecture record of a checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        in_features: usize,
        out_features: usize,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    ConvTranspose2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    BatchNorm {
        features: usize,
        momentum: f64,
        epsilon: f64,
    },
    CondBatchNorm {
        features: usize,
        num_conditions: usize,
        momentum: f64,
        epsilon: f64,
    },
    LeakyRelu {
        negative_slope: f64,
    },
    Sigmoid,
    Tanh,
    Flatten,
    /// Per-sample target shape; the batch dimension is kept.
    Reshape {
        shape: Vec<usize>,
    },
}

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::ConvTranspose2d { .. } => "conv_transpose2d",
            LayerSpec::BatchNorm { .. } => "batch_norm",
            LayerSpec::CondBatchNorm { .. } => "cond_batch_norm",
            LayerSpec::LeakyRelu { .. } => "leaky_relu",
            LayerSpec::Sigmoid => "sigmoid",
            LayerSpec::Tanh => "tanh",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Reshape { .. } => "reshape",
        }
    }

    pub fn batch_norm(features: usize) -> Self {
        LayerSpec::BatchNorm {
            features,
            momentum: 0.1,
            epsilon: 1e-5,
        }
    }

    pub fn cond_batch_norm(features: usize, num_conditions: usize) -> Self {
        LayerSpec::CondBatchNorm {
            features,
            num_conditions,
            momentum: 0.1,
            epsilon: 1e-5,
        }
    }

    pub fn conv(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        }
    }

    pub fn conv_t(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        LayerSpec::ConvTranspose2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        }
    }

    pub fn dense(in_features: usize, out_features: usize) -> Self {
        LayerSpec::Dense {
            in_features,
            out_features,
        }
    }

    pub fn leaky(negative_slope: f64) -> Self {
        LayerSpec::LeakyRelu { negative_slope }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(NnError::InvalidLayer(format!("{}: {m}", self.name())));
        match *self {
            LayerSpec::Dense {
                in_features,
                out_features,
            } if in_features == 0 || out_features == 0 => bad("features must be positive"),
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                ..
            }
            | LayerSpec::ConvTranspose2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                ..
            } if in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0 => {
                bad("channels, kernel and stride must be positive")
            }
            LayerSpec::BatchNorm {
                features,
                momentum,
                epsilon,
            } if features == 0 || !(0.0..=1.0).contains(&momentum) || epsilon < 0.0 => {
                bad("features > 0, momentum in [0,1], epsilon >= 0")
            }
            LayerSpec::CondBatchNorm {
                features,
                num_conditions,
                momentum,
                epsilon,
            } if features == 0
                || num_conditions == 0
                || !(0.0..=1.0).contains(&momentum)
                || epsilon < 0.0 =>
            {
                bad("features > 0, num_conditions > 0, momentum in [0,1], epsilon >= 0")
            }
            LayerSpec::Reshape { ref shape } if shape.is_empty() || shape.contains(&0) => {
                bad("shape must be non-empty and positive")
            }
            _ => Ok(()),
        }
    }

    /// Trainable tensors of a fresh layer.
    fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Tensor> {
        let mut uniform = |shape: &[usize], fan_in: usize| {
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            let n = shape.iter().product();
            let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
            Tensor::raw(shape.to_vec(), data)
        };
        match *self {
            LayerSpec::Dense {
                in_features,
                out_features,
            } => vec![
                uniform(&[out_features, in_features], in_features),
                uniform(&[out_features], in_features),
            ],
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => {
                let fan_in = in_channels * kernel * kernel;
                vec![
                    uniform(&[out_channels, in_channels, kernel, kernel], fan_in),
                    uniform(&[out_channels], fan_in),
                ]
            }
            LayerSpec::ConvTranspose2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                ..
            } => {
                let fan_in = (in_channels * kernel * kernel / (stride * stride)).max(1);
                vec![
                    uniform(&[in_channels, out_channels, kernel, kernel], fan_in),
                    uniform(&[out_channels], fan_in),
                ]
            }
            LayerSpec::BatchNorm { features, .. } => {
                vec![Tensor::full(&[1, features], 1.0), Tensor::zeros(&[1, features])]
            }
            LayerSpec::CondBatchNorm {
                features,
                num_conditions,
                ..
            } => vec![
                Tensor::full(&[num_conditions, features], 1.0),
                Tensor::zeros(&[num_conditions, features]),
            ],
            _ => Vec::new(),
        }
    }

    /// Running statistics (mean, variance) for normalization layers.
    fn init_buffers(&self) -> Vec<Tensor> {
        match *self {
            LayerSpec::BatchNorm { features, .. } | LayerSpec::CondBatchNorm { features, .. } => {
                vec![Tensor::zeros(&[features]), Tensor::full(&[features], 1.0)]
            }
            _ => Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics; running statistics are updated.
    Train,
    /// Running statistics.
    Eval,
}

/// Parameters of a [`Network`] inserted into a particular graph.
#[derive(Clone, Debug)]
pub struct BoundParams {
    vars: Vec<Vec<Var>>,
}

impl BoundParams {
    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.vars.iter().flatten().copied()
    }
}

/// Sequential stack of layers with their parameters and running statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    layers: Vec<LayerSpec>,
    params: Vec<Vec<Tensor>>,
    buffers: Vec<Vec<Tensor>>,
}

impl Network {
    pub fn new<R: Rng + ?Sized>(layers: Vec<LayerSpec>, rng: &mut R) -> Result<Self> {
        for l in &layers {
            l.validate()?;
        }
        let params = layers.iter().map(|l| l.init_params(rng)).collect();
        let buffers = layers.iter().map(LayerSpec::init_buffers).collect();
        Ok(Self {
            layers,
            params,
            buffers,
        })
    }

    /// Rebuilds a network from stored tensors, checking every shape against
    /// the descriptor.
    pub fn from_parts(layers: Vec<LayerSpec>, params: Vec<Vec<Tensor>>, buffers: Vec<Vec<Tensor>>) -> Result<Self> {
        let template = Self::from_template(layers)?;
        let same = |a: &[Vec<Tensor>], b: &[Vec<Tensor>]| {
            a.len() == b.len()
                && a.iter()
                    .zip(b)
                    .all(|(x, y)| x.len() == y.len() && x.iter().zip(y).all(|(p, q)| p.shape() == q.shape()))
        };
        if !same(&template.params, &params) || !same(&template.buffers, &buffers) {
            return Err(NnError::Checkpoint("parameter shapes disagree with the architecture".into()));
        }
        Ok(Self {
            layers: template.layers,
            params,
            buffers,
        })
    }

    pub(crate) fn from_template(layers: Vec<LayerSpec>) -> Result<Self> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        Self::new(layers, &mut rng)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[Vec<Tensor>] {
        &self.params
    }

    pub fn buffers(&self) -> &[Vec<Tensor>] {
        &self.buffers
    }

    pub fn num_conditions(&self) -> usize {
        self.layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::CondBatchNorm { num_conditions, .. } => Some(*num_conditions),
                _ => None,
            })
            .max()
            .unwrap_or(0)
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().flatten().map(Tensor::len).sum()
    }

    pub fn parameter_shapes(&self) -> Vec<usize> {
        self.params.iter().flatten().map(Tensor::len).collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        self.params.iter_mut().flatten().map(Tensor::data_mut).collect()
    }

    /// Inserts the parameters into `graph`, as trainable leaves or constants.
    pub fn bind(&self, graph: &mut Graph, trainable: bool) -> BoundParams {
        let vars = self
            .params
            .iter()
            .map(|ps| ps.iter().map(|p| graph.leaf(p.clone(), trainable)).collect())
            .collect();
        BoundParams { vars }
    }

    /// Gradients of the bound parameters in [`Network::parameters_mut`] order;
    /// parameters the output does not depend on get zeros.
    pub fn gradients(&self, bound: &BoundParams, grads: &Gradients) -> Vec<Vec<f64>> {
        bound
            .vars
            .iter()
            .zip(&self.params)
            .flat_map(|(vs, ps)| vs.iter().zip(ps))
            .map(|(&v, p)| grads.get(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; p.len()]))
            .collect()
    }

    /// Runs the stack on `input`. `condition` supplies one label per sample
    /// for conditional batch-norm layers.
    pub fn forward(
        &mut self,
        graph: &mut Graph,
        bound: &BoundParams,
        input: Var,
        condition: Option<&[usize]>,
        mode: Mode,
    ) -> Result<Var> {
        let mut x = input;
        for i in 0..self.layers.len() {
            x = self.apply_layer(i, graph, bound, x, condition, mode)?;
        }
        Ok(x)
    }

    fn apply_layer(
        &mut self,
        index: usize,
        graph: &mut Graph,
        bound: &BoundParams,
        x: Var,
        condition: Option<&[usize]>,
        mode: Mode,
    ) -> Result<Var> {
        let shape = graph.shape(x).to_vec();
        let spec = &self.layers[index];
        let mismatch = |expected: String| NnError::LayerInput {
            index,
            kind: spec.name(),
            expected,
            actual: shape.clone(),
        };
        let p = &bound.vars[index];
        match *spec {
            LayerSpec::Dense { in_features, .. } => {
                if shape.len() != 2 || shape[1] != in_features {
                    return Err(mismatch(format!("(batch, {in_features})")));
                }
                graph.dense(x, p[0], p[1])
            }
            LayerSpec::Conv2d {
                in_channels,
                kernel,
                stride,
                padding,
                ..
            } => {
                let fits = shape.len() == 4
                    && shape[1] == in_channels
                    && kernels::conv_output_side(shape[2], kernel, stride, padding).is_some()
                    && kernels::conv_output_side(shape[3], kernel, stride, padding).is_some();
                if !fits {
                    return Err(mismatch(format!("(batch, {in_channels}, h, w) with h, w + 2*{padding} >= {kernel}")));
                }
                graph.conv2d(x, p[0], p[1], stride, padding)
            }
            LayerSpec::ConvTranspose2d {
                in_channels,
                kernel,
                stride,
                padding,
                ..
            } => {
                let fits = shape.len() == 4
                    && shape[1] == in_channels
                    && kernels::conv_transpose_output_side(shape[2], kernel, stride, padding).is_some()
                    && kernels::conv_transpose_output_side(shape[3], kernel, stride, padding).is_some();
                if !fits {
                    return Err(mismatch(format!("(batch, {in_channels}, h, w)")));
                }
                graph.conv_transpose2d(x, p[0], p[1], stride, padding)
            }
            LayerSpec::BatchNorm {
                features,
                momentum,
                epsilon,
            }
            | LayerSpec::CondBatchNorm {
                features,
                momentum,
                epsilon,
                ..
            } => {
                if shape.len() < 2 || shape[1] != features {
                    return Err(mismatch(format!("(batch, {features}, ...)")));
                }
                let labels: Vec<usize> = match spec {
                    LayerSpec::CondBatchNorm { .. } => {
                        let c = condition.ok_or(NnError::MissingCondition(index))?;
                        if c.len() != shape[0] {
                            return Err(NnError::Shape {
                                context: format!("condition labels for layer {index}"),
                                expected: vec![shape[0]],
                                actual: vec![c.len()],
                            });
                        }
                        c.to_vec()
                    }
                    _ => vec![0; shape[0]],
                };
                match mode {
                    Mode::Train => {
                        let (y, stats) = graph.batch_norm(x, p[0], p[1], &labels, epsilon)?;
                        let n = stats.count as f64;
                        let unbias = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
                        let buf = &mut self.buffers[index];
                        for (r, m) in buf[0].data_mut().iter_mut().zip(&stats.mean) {
                            *r = (1.0 - momentum) * *r + momentum * m;
                        }
                        for (r, v) in buf[1].data_mut().iter_mut().zip(&stats.var) {
                            *r = (1.0 - momentum) * *r + momentum * v * unbias;
                        }
                        Ok(y)
                    }
                    Mode::Eval => {
                        let buf = &self.buffers[index];
                        graph.batch_norm_fixed(x, p[0], p[1], &labels, buf[0].data(), buf[1].data(), epsilon)
                    }
                }
            }
            LayerSpec::LeakyRelu { negative_slope } => Ok(graph.leaky_relu(x, negative_slope)),
            LayerSpec::Sigmoid => Ok(graph.sigmoid(x)),
            LayerSpec::Tanh => Ok(graph.tanh(x)),
            LayerSpec::Flatten => {
                let rest = shape[1..].iter().product::<usize>().max(1);
                graph.reshape(x, &[shape[0], rest])
            }
            LayerSpec::Reshape { shape: ref target } => {
                let per_sample: usize = shape[1..].iter().product::<usize>().max(1);
                if per_sample != target.iter().product::<usize>() {
                    return Err(mismatch(format!("{} values per sample", target.iter().product::<usize>())));
                }
                let mut full = vec![shape[0]];
                full.extend_from_slice(target);
                graph.reshape(x, &full)
            }
        }
    }

    /// Output shape for a given input shape, without evaluating anything.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let mut g = Graph::new();
        let mut scratch = self.clone();
        let bound = scratch.bind(&mut g, false);
        let x = g.constant(Tensor::zeros(input));
        let labels = vec![0; input[0]];
        let cond = (self.num_conditions() > 0).then_some(labels.as_slice());
        let y = scratch.forward(&mut g, &bound, x, cond, Mode::Eval)?;
        Ok(g.shape(y).to_vec())
    }
}
