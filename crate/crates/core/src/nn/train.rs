use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{Network, NetworkConfig};
use super::ops::softmax_cross_entropy;
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

/// An input image with its class label.
#[derive(Debug, Clone, PartialEq)]
pub struct Example<T> {
    pub input: Tensor<T>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Seeds shuffling and dropout masks.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 60,
            batch_size: 32,
            learning_rate: 1e-3,
            momentum: 0.9,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "learning rate must be non-negative, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid(format!(
                "momentum {} outside [0, 1)",
                self.momentum
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub eval_accuracy: Option<f64>,
}

pub struct TrainOutcome<T> {
    pub network: Network<T>,
    /// Snapshot with the highest evaluation accuracy (earliest on ties);
    /// the final network when there is no evaluation set.
    pub best: Network<T>,
    pub best_epoch: Option<usize>,
    pub history: Vec<EpochStats>,
}

/// Stochastic gradient descent with classical momentum:
/// `v = momentum * v + g; w -= lr * v`.
pub struct Sgd<T> {
    learning_rate: T,
    momentum: T,
    velocity: Vec<Vec<T>>,
}

impl<T: Real> Sgd<T> {
    pub fn new(learning_rate: f64, momentum: f64) -> Self {
        Sgd {
            learning_rate: T::from_f64(learning_rate),
            momentum: T::from_f64(momentum),
            velocity: Vec::new(),
        }
    }

    /// Apply the accumulated gradients of `net`, scaled by `grad_scale`, then clear them.
    pub fn step(&mut self, net: &mut Network<T>, grad_scale: f64) {
        let scale = T::from_f64(grad_scale);
        let (lr, mu) = (self.learning_rate, self.momentum);
        let velocity = &mut self.velocity;
        for (i, (param, grad)) in net.params_and_grads().enumerate() {
            if velocity.len() <= i {
                velocity.push(vec![T::ZERO; param.len()]);
            }
            for ((w, v), &g) in param
                .data_mut()
                .iter_mut()
                .zip(&mut velocity[i])
                .zip(grad.data())
            {
                *v = mu * *v + g * scale;
                *w -= lr * *v;
            }
        }
        net.zero_grads();
    }
}

/// Mean loss over `batch` and the number of correct argmax decisions,
/// accumulating gradients into `net`.
pub fn accumulate_batch<T: Real>(
    net: &mut Network<T>,
    batch: &[&Example<T>],
    rng: &mut ChaCha8Rng,
) -> Result<(f64, usize)> {
    let mut loss = 0.0;
    let mut correct = 0;
    for ex in batch {
        let logits = net.forward(&ex.input, true, rng)?;
        let (l, grad) = softmax_cross_entropy(&logits, ex.label)?;
        let data = logits.data();
        let guess = (0..data.len()).fold(0, |best, i| if data[i] > data[best] { i } else { best });
        correct += usize::from(guess == ex.label);
        loss += l;
        net.backward(grad)?;
    }
    Ok((loss / batch.len() as f64, correct))
}

/// Fraction of `examples` whose predicted class matches the label.
pub fn accuracy<T: Real>(net: &Network<T>, examples: &[Example<T>]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::invalid("accuracy of an empty set"));
    }
    let mut correct = 0;
    for ex in examples {
        correct += usize::from(net.predict(&ex.input)?.class == ex.label);
    }
    Ok(correct as f64 / examples.len() as f64)
}

fn check_examples<T: Real>(
    config: &NetworkConfig,
    examples: &[Example<T>],
    what: &str,
) -> Result<()> {
    for (i, ex) in examples.iter().enumerate() {
        if ex.input.shape() != config.input_shape {
            return Err(Error::shape(format!(
                "{what} example {i}: shape {:?}, network takes {:?}",
                ex.input.shape(),
                config.input_shape
            )));
        }
        if ex.label >= config.num_classes {
            return Err(Error::invalid(format!(
                "{what} example {i}: label {} but only {} classes",
                ex.label, config.num_classes
            )));
        }
    }
    Ok(())
}

/// Mini-batch SGD from a freshly initialized network. Deterministic for a
/// given pair of seeds: weights come from `config.seed`, shuffling and
/// dropout from `cfg.seed`.
pub fn train<T: Real>(
    config: &NetworkConfig,
    train_set: &[Example<T>],
    eval_set: &[Example<T>],
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    train_from(Network::new(config.clone())?, train_set, eval_set, cfg)
}

/// [`train`] starting from an existing network.
pub fn train_from<T: Real>(
    net: Network<T>,
    train_set: &[Example<T>],
    eval_set: &[Example<T>],
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    train_observed(net, train_set, eval_set, cfg, |_| {})
}

/// [`train_from`], calling `on_epoch` after every epoch.
pub fn train_observed<T: Real>(
    mut net: Network<T>,
    train_set: &[Example<T>],
    eval_set: &[Example<T>],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    check_examples(net.config(), train_set, "training")?;
    check_examples(net.config(), eval_set, "evaluation")?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sgd = Sgd::new(cfg.learning_rate, cfg.momentum);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best = net.clone();
    let mut best_epoch = None;
    let mut best_accuracy = f64::NEG_INFINITY;
    net.zero_grads();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Example<T>> = chunk.iter().map(|&i| &train_set[i]).collect();
            let (loss, hits) = accumulate_batch(&mut net, &batch, &mut rng)?;
            loss_sum += loss * batch.len() as f64;
            correct += hits;
            sgd.step(&mut net, 1.0 / batch.len() as f64);
        }
        let eval_accuracy = if eval_set.is_empty() {
            None
        } else {
            Some(accuracy(&net, eval_set)?)
        };
        if let Some(acc) = eval_accuracy {
            if acc > best_accuracy {
                best_accuracy = acc;
                best = net.clone();
                best_epoch = Some(epoch);
            }
        }
        let stats = EpochStats {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            train_accuracy: correct as f64 / train_set.len() as f64,
            eval_accuracy,
        };
        on_epoch(&stats);
        history.push(stats);
    }
    if eval_set.is_empty() {
        best = net.clone();
        best_epoch = (cfg.epochs > 0).then_some(cfg.epochs);
    }
    Ok(TrainOutcome {
        network: net,
        best,
        best_epoch,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::network::LayerSpec;
    use rand::Rng;

    fn tiny_config(seed: u64) -> NetworkConfig {
        NetworkConfig {
            layers: vec![
                LayerSpec::Conv2d {
                    in_ch: 1,
                    out_ch: 2,
                    kernel: 3,
                    stride: 1,
                    padding: 1,
                },
                LayerSpec::Relu,
                LayerSpec::MaxPool2d {
                    kernel: 2,
                    stride: 2,
                },
                LayerSpec::Flatten,
                LayerSpec::Dropout { p: 0.25 },
                LayerSpec::Linear {
                    in_features: 32,
                    out_features: 3,
                },
            ],
            input_shape: [1, 8, 8],
            num_classes: 3,
            seed,
            class_names: Vec::new(),
        }
    }

    fn random_examples(n: usize, seed: u64) -> Vec<Example<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| Example {
                input: Tensor::from_f64(
                    vec![1, 8, 8],
                    &(0..64)
                        .map(|_| rng.random_range(-1.0..1.0))
                        .collect::<Vec<_>>(),
                )
                .unwrap(),
                label: i % 3,
            })
            .collect()
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let data = random_examples(6, 1);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 2,
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        let initial = Network::<f64>::new(tiny_config(2)).unwrap();
        let out = train(&tiny_config(2), &data, &[], &cfg).unwrap();
        assert!(out.network.params().eq(initial.params()));
        assert_eq!(out.history.len(), 3);
    }

    #[test]
    fn zero_epochs_gives_initial_weights_and_no_history() {
        let data = random_examples(3, 1);
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let out = train(&tiny_config(4), &data, &data, &cfg).unwrap();
        assert!(out.history.is_empty());
        assert!(out
            .best
            .params()
            .eq(Network::<f64>::new(tiny_config(4)).unwrap().params()));
    }

    #[test]
    fn rejects_empty_and_bad_inputs() {
        let cfg = TrainConfig::default();
        assert!(train::<f64>(&tiny_config(0), &[], &[], &cfg).is_err());
        let mut bad = random_examples(2, 0);
        bad[0].label = 3;
        assert!(train(&tiny_config(0), &bad, &[], &cfg).is_err());
        let wrong_shape = vec![Example {
            input: Tensor::<f64>::zeros(&[1, 4, 4]),
            label: 0,
        }];
        assert!(train(&tiny_config(0), &wrong_shape, &[], &cfg).is_err());
        let neg = TrainConfig {
            learning_rate: -1.0,
            ..cfg
        };
        assert!(train(&tiny_config(0), &random_examples(2, 0), &[], &neg).is_err());
    }

    #[test]
    fn memorizes_a_single_example() {
        let data = random_examples(1, 3);
        let cfg = TrainConfig {
            epochs: 200,
            batch_size: 1,
            learning_rate: 0.01,
            momentum: 0.9,
            seed: 1,
        };
        let out = train(&tiny_config(5), &data, &[], &cfg).unwrap();
        let last = out.history.last().unwrap();
        assert!(last.train_loss < 0.01, "{}", last.train_loss);
    }

    #[test]
    fn history_is_reproducible() {
        let data = random_examples(9, 7);
        let cfg = TrainConfig {
            epochs: 4,
            batch_size: 4,
            learning_rate: 0.05,
            momentum: 0.9,
            seed: 11,
        };
        let a = train(&tiny_config(3), &data, &data[..3], &cfg).unwrap();
        let b = train(&tiny_config(3), &data, &data[..3], &cfg).unwrap();
        assert_eq!(a.history, b.history);
        assert!(a.network.params().eq(b.network.params()));
    }
}
