//! Finite-difference gradient checks for every layer; each returns the
//! worst relative error it saw.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wvdnet::nn::ops::*;
use wvdnet::nn::{LayerSpec, Network, NetworkConfig, Tensor};

use super::{check_gradient, project, random_tensor};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn conv2d() -> f64 {
    let mut worst = 0.0f64;
    for (seed, (c_in, c_out, h, w, k, stride, pad)) in [
        (2, 3, 6, 5, 3, 1, 1),
        (1, 2, 7, 7, 3, 2, 0),
        (3, 2, 5, 6, 2, 1, 2),
    ]
    .into_iter()
    .enumerate()
    {
        let mut r = rng(seed as u64);
        let x = random_tensor(&[c_in, h, w], &mut r, 0.0);
        let wt = random_tensor(&[c_out, c_in, k, k], &mut r, 0.0);
        let b = random_tensor(&[c_out], &mut r, 0.0);
        let y = conv2d_forward(&x, &wt, &b, stride, pad).unwrap();
        let dir = random_tensor(y.shape(), &mut r, 0.0);
        let (gx, gw, gb) = conv2d_backward(&dir, &x, &wt, stride, pad).unwrap();
        worst = worst
            .max(check_gradient(&x, gx.data(), |x| {
                project(&conv2d_forward(x, &wt, &b, stride, pad).unwrap(), &dir)
            }))
            .max(check_gradient(&wt, gw.data(), |w| {
                project(&conv2d_forward(&x, w, &b, stride, pad).unwrap(), &dir)
            }))
            .max(check_gradient(&b, gb.data(), |b| {
                project(&conv2d_forward(&x, &wt, b, stride, pad).unwrap(), &dir)
            }));
    }
    worst
}

pub fn maxpool() -> f64 {
    let mut r = rng(10);
    let x = random_tensor(&[2, 7, 6], &mut r, 0.0);
    let (y, idx) = maxpool2d_forward(&x, 2, 2).unwrap();
    let dir = random_tensor(y.shape(), &mut r, 0.0);
    let g = maxpool2d_backward(&dir, &idx, x.shape()).unwrap();
    check_gradient(&x, g.data(), |x| {
        project(&maxpool2d_forward(x, 2, 2).unwrap().0, &dir)
    })
}

pub fn linear() -> f64 {
    let mut r = rng(11);
    let x = random_tensor(&[9], &mut r, 0.0);
    let w = random_tensor(&[4, 9], &mut r, 0.0);
    let b = random_tensor(&[4], &mut r, 0.0);
    let dir = random_tensor(&[4], &mut r, 0.0);
    let (gx, gw, gb) = linear_backward(&dir, &x, &w).unwrap();
    check_gradient(&x, gx.data(), |p| {
        project(&linear_forward(p, &w, &b).unwrap(), &dir)
    })
    .max(check_gradient(&w, gw.data(), |p| {
        project(&linear_forward(&x, p, &b).unwrap(), &dir)
    }))
    .max(check_gradient(&b, gb.data(), |p| {
        project(&linear_forward(&x, &w, p).unwrap(), &dir)
    }))
}

pub fn relu() -> f64 {
    let mut r = rng(12);
    let x = random_tensor(&[3, 4, 4], &mut r, 1e-3);
    let dir = random_tensor(x.shape(), &mut r, 0.0);
    let g = relu_backward(&dir, &x).unwrap();
    check_gradient(&x, g.data(), |x| project(&relu_forward(x), &dir))
}

pub fn dropout() -> f64 {
    let mut r = rng(13);
    let x = random_tensor(&[40], &mut r, 0.0);
    let dir = random_tensor(&[40], &mut r, 0.0);
    let (_, mask) = dropout_forward(&x, 0.25, true, &mut rng(99)).unwrap();
    let mask = mask.unwrap();
    assert!(mask.contains(&0.0) && mask.iter().any(|&m| m > 1.0));
    let g = dropout_backward(&dir, Some(&mask)).unwrap();
    check_gradient(&x, g.data(), |x| {
        project(
            &dropout_forward(x, 0.25, true, &mut rng(99)).unwrap().0,
            &dir,
        )
    })
}

pub fn softmax_cross_entropy_loss() -> f64 {
    let mut r = rng(14);
    let logits = random_tensor(&[5], &mut r, 0.0);
    (0..5)
        .map(|label| {
            let (_, g) = softmax_cross_entropy(&logits, label).unwrap();
            check_gradient(&logits, g.data(), |l| {
                softmax_cross_entropy(l, label).unwrap().0
            })
        })
        .fold(0.0, f64::max)
}

fn small_net() -> NetworkConfig {
    NetworkConfig {
        layers: vec![
            LayerSpec::Conv2d {
                in_ch: 1,
                out_ch: 3,
                kernel: 3,
                stride: 1,
                padding: 1,
            },
            LayerSpec::Relu,
            LayerSpec::MaxPool2d {
                kernel: 2,
                stride: 2,
            },
            LayerSpec::Conv2d {
                in_ch: 3,
                out_ch: 4,
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
                in_features: 16,
                out_features: 6,
            },
            LayerSpec::Relu,
            LayerSpec::Dropout { p: 0.25 },
            LayerSpec::Linear {
                in_features: 6,
                out_features: 3,
            },
        ],
        input_shape: [1, 9, 9],
        num_classes: 3,
        seed: 21,
        class_names: Vec::new(),
    }
}

/// Input and parameter gradients of the loss through a complete small
/// network with dropout active under a fixed mask stream.
pub fn whole_network() -> f64 {
    let mut net = Network::<f64>::new(small_net()).unwrap();
    let x = random_tensor(&[1, 9, 9], &mut rng(15), 0.0);
    let label = 2;
    let loss_at = |net: &mut Network<f64>, x: &Tensor<f64>| {
        let logits = net.forward(x, true, &mut rng(7)).unwrap();
        softmax_cross_entropy(&logits, label).unwrap()
    };
    net.zero_grads();
    let (_, g) = loss_at(&mut net, &x);
    let gx = net.backward(g).unwrap();
    let param_grads: Vec<Tensor<f64>> = net.grads().cloned().collect();

    let mut worst = check_gradient(&x, gx.data(), |x| loss_at(&mut net.clone(), x).0);
    let params: Vec<Tensor<f64>> = net.params().cloned().collect();
    for (i, (p, g)) in params.iter().zip(&param_grads).enumerate() {
        worst = worst.max(check_gradient(p, g.data(), |candidate| {
            let mut probe = net.clone();
            *probe.params_mut().nth(i).unwrap() = candidate.clone();
            loss_at(&mut probe, &x).0
        }));
    }
    worst
}

pub fn all() -> Vec<(&'static str, f64)> {
    vec![
        ("conv2d", conv2d()),
        ("maxpool2d", maxpool()),
        ("linear", linear()),
        ("relu", relu()),
        ("dropout", dropout()),
        ("softmax cross-entropy", softmax_cross_entropy_loss()),
        ("whole network", whole_network()),
    ]
}
