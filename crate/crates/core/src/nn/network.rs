use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ops;
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

/// One layer of a sequential network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    MaxPool2d {
        kernel: usize,
        stride: usize,
    },
    Relu,
    Dropout {
        p: f64,
    },
    Flatten,
    Linear {
        in_features: usize,
        out_features: usize,
    },
}

impl LayerSpec {
    /// Output shape for a given input shape, or why the layer cannot accept it.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match *self {
            LayerSpec::Conv2d {
                in_ch,
                out_ch,
                kernel,
                stride,
                padding,
            } => {
                let g = ops::ConvGeometry::new(input, kernel, kernel, stride, padding)?;
                if g.channels != in_ch {
                    return Err(Error::shape(format!(
                        "conv expects {in_ch} channels, input has {}",
                        g.channels
                    )));
                }
                Ok(vec![out_ch, g.out_rows, g.out_cols])
            }
            LayerSpec::MaxPool2d { kernel, stride } => match *input {
                [c, h, w] if h >= kernel && w >= kernel && kernel > 0 && stride > 0 => Ok(vec![
                    c,
                    (h - kernel) / stride + 1,
                    (w - kernel) / stride + 1,
                ]),
                _ => Err(Error::shape(format!(
                    "pool {kernel}/{stride} cannot take {input:?}"
                ))),
            },
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::Dropout { p } => {
                if !(0.0..1.0).contains(&p) {
                    return Err(Error::invalid(format!(
                        "dropout probability {p} outside [0, 1)"
                    )));
                }
                Ok(input.to_vec())
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Linear {
                in_features,
                out_features,
            } => {
                if input != [in_features] {
                    return Err(Error::shape(format!(
                        "linear expects [{in_features}], got {input:?}"
                    )));
                }
                Ok(vec![out_features])
            }
        }
    }

    fn param_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            LayerSpec::Conv2d {
                in_ch,
                out_ch,
                kernel,
                ..
            } => vec![vec![out_ch, in_ch, kernel, kernel], vec![out_ch]],
            LayerSpec::Linear {
                in_features,
                out_features,
            } => vec![vec![out_features, in_features], vec![out_features]],
            _ => Vec::new(),
        }
    }

    fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Conv2d { in_ch, kernel, .. } => in_ch * kernel * kernel,
            LayerSpec::Linear { in_features, .. } => in_features,
            _ => 0,
        }
    }
}

/// Layer list and input/output contract of a classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub layers: Vec<LayerSpec>,
    /// `[channels, rows, cols]`.
    pub input_shape: [usize; 3],
    pub num_classes: usize,
    /// Seed of the weight initialization.
    pub seed: u64,
    #[serde(default)]
    pub class_names: Vec<String>,
}

impl NetworkConfig {
    /// The three-stage conv/pool classifier at its native 300x300 input and
    /// 10 classes: conv 1->16->32->64 (3x3, stride 1, pad 1) each followed by
    /// relu and 2x2 max pooling, then dropout, linear 87616->500, relu,
    /// dropout, linear 500->10.
    pub fn reference() -> Self {
        Self::scaled(300, 10, 500, 0.25, 0)
    }

    /// The reference layout for a square `input_size` image and `num_classes` outputs.
    pub fn scaled(
        input_size: usize,
        num_classes: usize,
        hidden: usize,
        dropout: f64,
        seed: u64,
    ) -> Self {
        let conv = |in_ch, out_ch| LayerSpec::Conv2d {
            in_ch,
            out_ch,
            kernel: 3,
            stride: 1,
            padding: 1,
        };
        let pool = LayerSpec::MaxPool2d {
            kernel: 2,
            stride: 2,
        };
        let mut side = input_size;
        for _ in 0..3 {
            side /= 2;
        }
        let flat = 64 * side * side;
        NetworkConfig {
            layers: vec![
                conv(1, 16),
                LayerSpec::Relu,
                pool.clone(),
                conv(16, 32),
                LayerSpec::Relu,
                pool.clone(),
                conv(32, 64),
                LayerSpec::Relu,
                pool,
                LayerSpec::Flatten,
                LayerSpec::Dropout { p: dropout },
                LayerSpec::Linear {
                    in_features: flat,
                    out_features: hidden,
                },
                LayerSpec::Relu,
                LayerSpec::Dropout { p: dropout },
                LayerSpec::Linear {
                    in_features: hidden,
                    out_features: num_classes,
                },
            ],
            input_shape: [1, input_size, input_size],
            num_classes,
            seed,
            class_names: Vec::new(),
        }
    }

    /// Output shape after every layer. Fails unless the chain is consistent
    /// and ends in `[num_classes]`.
    pub fn shape_chain(&self) -> Result<Vec<Vec<usize>>> {
        if self.num_classes == 0 {
            return Err(Error::invalid("network needs at least one class"));
        }
        if !self.class_names.is_empty() && self.class_names.len() != self.num_classes {
            return Err(Error::invalid(format!(
                "{} class names for {} classes",
                self.class_names.len(),
                self.num_classes
            )));
        }
        let mut shape = self.input_shape.to_vec();
        let mut chain = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            shape = layer
                .output_shape(&shape)
                .map_err(|e| Error::shape(format!("layer {i}: {e}")))?;
            chain.push(shape.clone());
        }
        if shape != [self.num_classes] {
            return Err(Error::shape(format!(
                "network ends in {shape:?}, expected [{}]",
                self.num_classes
            )));
        }
        Ok(chain)
    }

    /// Length of the vector produced by the first flatten layer.
    pub fn flatten_len(&self) -> Result<usize> {
        let chain = self.shape_chain()?;
        self.layers
            .iter()
            .position(|l| *l == LayerSpec::Flatten)
            .map(|i| chain[i][0])
            .ok_or_else(|| Error::invalid("network has no flatten layer"))
    }

    /// Shapes of all parameter tensors in declaration order (weight then bias per layer).
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        self.layers
            .iter()
            .flat_map(LayerSpec::param_shapes)
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes()
            .iter()
            .map(|s| s.iter().product::<usize>())
            .sum()
    }

    /// Human-readable layer listing in the style of a PyTorch module printout.
    pub fn describe(&self) -> String {
        let mut out = String::from("Net(\n");
        for (i, layer) in self.layers.iter().enumerate() {
            let _ = match layer {
                LayerSpec::Conv2d {
                    in_ch,
                    out_ch,
                    kernel,
                    stride,
                    padding,
                } => writeln!(
                    out,
                    "  ({i}): Conv2d({in_ch}, {out_ch}, kernel_size=({kernel}, {kernel}), stride=({stride}, {stride}), padding=({padding}, {padding}))"
                ),
                LayerSpec::MaxPool2d { kernel, stride } => writeln!(
                    out,
                    "  ({i}): MaxPool2d(kernel_size={kernel}, stride={stride}, padding=0, dilation=1, ceil_mode=False)"
                ),
                LayerSpec::Relu => writeln!(out, "  ({i}): ReLU()"),
                LayerSpec::Dropout { p } => writeln!(out, "  ({i}): Dropout(p={p}, inplace=False)"),
                LayerSpec::Flatten => writeln!(out, "  ({i}): Flatten()"),
                LayerSpec::Linear {
                    in_features,
                    out_features,
                } => writeln!(
                    out,
                    "  ({i}): Linear(in_features={in_features}, out_features={out_features}, bias=True)"
                ),
            };
        }
        out.push(')');
        out
    }
}

#[derive(Debug, Clone)]
enum Cache<T> {
    None,
    Input(Tensor<T>),
    Pool {
        indices: Vec<usize>,
        input_shape: Vec<usize>,
    },
    Mask(Option<Vec<T>>),
    Shape(Vec<usize>),
}

#[derive(Debug, Clone)]
struct Layer<T> {
    spec: LayerSpec,
    /// Weight and bias for conv/linear layers, empty otherwise.
    params: Vec<Tensor<T>>,
    grads: Vec<Tensor<T>>,
    cache: Cache<T>,
}

/// Class decision and class probabilities for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: usize,
    pub probabilities: Vec<f64>,
}

/// A network built from a [`NetworkConfig`] with its parameters.
#[derive(Debug, Clone)]
pub struct Network<T> {
    config: NetworkConfig,
    layers: Vec<Layer<T>>,
}

impl<T: Real> Network<T> {
    /// Kaiming-uniform weights (bound `sqrt(6 / fan_in)`) drawn from the
    /// config seed, zero biases.
    pub fn new(config: NetworkConfig) -> Result<Self> {
        config.shape_chain()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let layers = config
            .layers
            .iter()
            .map(|spec| {
                let shapes = spec.param_shapes();
                let bound = (6.0 / spec.fan_in().max(1) as f64).sqrt();
                let params: Vec<Tensor<T>> = shapes
                    .iter()
                    .enumerate()
                    .map(|(i, shape)| {
                        let mut t = Tensor::zeros(shape);
                        if i == 0 {
                            for v in t.data_mut() {
                                *v = T::from_f64(rng.random_range(-bound..bound));
                            }
                        }
                        t
                    })
                    .collect();
                Layer {
                    spec: spec.clone(),
                    grads: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
                    params,
                    cache: Cache::None,
                }
            })
            .collect();
        Ok(Network { config, layers })
    }

    /// Build from explicit parameter tensors in declaration order.
    pub fn from_params(config: NetworkConfig, params: Vec<Tensor<T>>) -> Result<Self> {
        let expected = config.param_shapes();
        if expected.len() != params.len() {
            return Err(Error::shape(format!(
                "config declares {} parameter tensors, got {}",
                expected.len(),
                params.len()
            )));
        }
        for (i, (shape, p)) in expected.iter().zip(&params).enumerate() {
            if p.shape() != shape.as_slice() {
                return Err(Error::shape(format!(
                    "parameter {i}: expected {shape:?}, got {:?}",
                    p.shape()
                )));
            }
        }
        let mut net = Network::<T>::new(NetworkConfig {
            seed: 0,
            ..config.clone()
        })?;
        net.config = config;
        let mut iter = params.into_iter();
        for layer in &mut net.layers {
            for p in &mut layer.params {
                *p = iter.next().expect("counted above");
            }
        }
        Ok(net)
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    pub fn params(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.layers.iter().flat_map(|l| l.params.iter())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.layers.iter_mut().flat_map(|l| l.params.iter_mut())
    }

    /// Accumulated gradients, aligned with [`Network::params`].
    pub fn grads(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.layers.iter().flat_map(|l| l.grads.iter())
    }

    pub(crate) fn params_and_grads(
        &mut self,
    ) -> impl Iterator<Item = (&mut Tensor<T>, &Tensor<T>)> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.params.iter_mut().zip(l.grads.iter()))
    }

    pub fn zero_grads(&mut self) {
        for g in self.layers.iter_mut().flat_map(|l| l.grads.iter_mut()) {
            g.data_mut().iter_mut().for_each(|v| *v = T::ZERO);
        }
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<()> {
        input.expect_shape("network input", &self.config.input_shape)
    }

    /// Forward pass. In training mode dropout is active and every layer
    /// caches what its backward pass needs.
    pub fn forward<R: Rng + ?Sized>(
        &mut self,
        input: &Tensor<T>,
        train: bool,
        rng: &mut R,
    ) -> Result<Tensor<T>> {
        self.check_input(input)?;
        let mut x = input.clone();
        for layer in &mut self.layers {
            let (out, cache) = layer_forward(&layer.spec, &layer.params, x, train, rng)?;
            layer.cache = if train { cache } else { Cache::None };
            x = out;
        }
        Ok(x)
    }

    /// Backpropagate `grad` (gradient of the loss w.r.t. the logits) through
    /// the last training-mode forward pass, adding into the parameter
    /// gradients. Returns the gradient with respect to the input.
    pub fn backward(&mut self, grad: Tensor<T>) -> Result<Tensor<T>> {
        let mut g = grad;
        for layer in self.layers.iter_mut().rev() {
            let cache = std::mem::replace(&mut layer.cache, Cache::None);
            g = match (&layer.spec, cache) {
                (
                    &LayerSpec::Conv2d {
                        stride, padding, ..
                    },
                    Cache::Input(input),
                ) => {
                    let (gi, gw, gb) =
                        ops::conv2d_backward(&g, &input, &layer.params[0], stride, padding)?;
                    add_into(&mut layer.grads[0], &gw);
                    add_into(&mut layer.grads[1], &gb);
                    gi
                }
                (LayerSpec::Linear { .. }, Cache::Input(input)) => {
                    let (gw, gb) = layer.grads.split_at_mut(1);
                    ops::linear_backward_into(
                        &g,
                        &input,
                        &layer.params[0],
                        gw[0].data_mut(),
                        gb[0].data_mut(),
                    )?
                }
                (
                    LayerSpec::MaxPool2d { .. },
                    Cache::Pool {
                        indices,
                        input_shape,
                    },
                ) => ops::maxpool2d_backward(&g, &indices, &input_shape)?,
                (LayerSpec::Relu, Cache::Input(input)) => ops::relu_backward(&g, &input)?,
                (LayerSpec::Dropout { .. }, Cache::Mask(mask)) => {
                    ops::dropout_backward(&g, mask.as_deref())?
                }
                (LayerSpec::Flatten, Cache::Shape(shape)) => g.reshape(shape)?,
                _ => {
                    return Err(Error::invalid(
                        "backward without a training-mode forward pass",
                    ))
                }
            };
        }
        Ok(g)
    }

    /// Evaluation-mode forward pass producing logits.
    pub fn logits(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(input)?;
        // Dropout is the identity in evaluation mode, so this stream is never drawn from.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut x = input.clone();
        for layer in &self.layers {
            x = layer_forward(&layer.spec, &layer.params, x, false, &mut rng)?.0;
        }
        Ok(x)
    }

    /// Most probable class (lowest index on ties) and the softmax probabilities.
    pub fn predict(&self, input: &Tensor<T>) -> Result<Prediction> {
        let logits = self.logits(input)?;
        let data = logits.data();
        let mut class = 0;
        for (i, v) in data.iter().enumerate() {
            if *v > data[class] {
                class = i;
            }
        }
        Ok(Prediction {
            class,
            probabilities: ops::softmax(data),
        })
    }
}

fn add_into<T: Real>(acc: &mut Tensor<T>, g: &Tensor<T>) {
    for (a, &b) in acc.data_mut().iter_mut().zip(g.data()) {
        *a += b;
    }
}

fn layer_forward<T: Real, R: Rng + ?Sized>(
    spec: &LayerSpec,
    params: &[Tensor<T>],
    x: Tensor<T>,
    train: bool,
    rng: &mut R,
) -> Result<(Tensor<T>, Cache<T>)> {
    Ok(match *spec {
        LayerSpec::Conv2d {
            stride, padding, ..
        } => {
            let out = ops::conv2d_forward(&x, &params[0], &params[1], stride, padding)?;
            (out, Cache::Input(x))
        }
        LayerSpec::Linear { .. } => {
            let out = ops::linear_forward(&x, &params[0], &params[1])?;
            (out, Cache::Input(x))
        }
        LayerSpec::MaxPool2d { kernel, stride } => {
            let (out, indices) = ops::maxpool2d_forward(&x, kernel, stride)?;
            let input_shape = x.shape().to_vec();
            (
                out,
                Cache::Pool {
                    indices,
                    input_shape,
                },
            )
        }
        LayerSpec::Relu => (ops::relu_forward(&x), Cache::Input(x)),
        LayerSpec::Dropout { p } => {
            let (out, mask) = ops::dropout_forward(&x, p, train, rng)?;
            (out, Cache::Mask(mask))
        }
        LayerSpec::Flatten => {
            let shape = x.shape().to_vec();
            (ops::flatten(x), Cache::Shape(shape))
        }
    })
}
