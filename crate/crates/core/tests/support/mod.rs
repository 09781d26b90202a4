//! Independent oracles shared by the integration tests.

#![allow(dead_code, clippy::needless_range_loop)]

pub mod grad;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wvdnet::nn::Tensor;
use wvdnet::{analytic_signal, Complex64, ComplexSignal, LagWindow, Signal};

/// The defining lag sum, evaluated term by term with explicit complex
/// exponentials: `W[n][k] = 2 Re sum_m h[m] x[n+m] conj(x[n-m]) e^{-j 2 pi k m / K}`.
pub fn direct_pseudo_wvd(
    x: &[Complex64],
    h: &LagWindow,
    stride: usize,
    k_bins: usize,
) -> Vec<Vec<f64>> {
    let n_len = x.len() as isize;
    let l = h.half_len() as isize;
    (0..x.len())
        .step_by(stride)
        .map(|n| {
            let n = n as isize;
            (0..k_bins)
                .map(|k| {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for m in -l..=l {
                        let (a, b) = (n + m, n - m);
                        if a < 0 || b < 0 || a >= n_len || b >= n_len {
                            continue;
                        }
                        let phase = -2.0 * PI * (k as f64) * (m as f64) / k_bins as f64;
                        acc += h.at(m)
                            * x[a as usize]
                            * x[b as usize].conj()
                            * Complex64::from_polar(1.0, phase);
                    }
                    2.0 * acc.re
                })
                .collect()
        })
        .collect()
}

pub fn random_real(len: usize, rate: f64, seed: u64) -> Signal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Signal::new(
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect(),
        rate,
    )
    .unwrap()
}

pub fn random_analytic(len: usize, seed: u64) -> ComplexSignal {
    analytic_signal(&random_real(len, 4000.0, seed)).unwrap()
}

pub fn tone(freq: f64, rate: f64, len: usize) -> Signal {
    Signal::new(
        (0..len)
            .map(|i| (2.0 * PI * freq * i as f64 / rate).cos())
            .collect(),
        rate,
    )
    .unwrap()
}

/// Real linear chirp `f0 -> f1` over `len` samples.
pub fn chirp(f0: f64, f1: f64, rate: f64, len: usize) -> Signal {
    let t_total = len as f64 / rate;
    let slope = (f1 - f0) / t_total;
    Signal::new(
        (0..len)
            .map(|i| {
                let t = i as f64 / rate;
                (2.0 * PI * (f0 * t + 0.5 * slope * t * t)).cos()
            })
            .collect(),
        rate,
    )
    .unwrap()
}

/// Relative error with a floor on the denominator so exact zeros compare cleanly.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Random tensor with entries at least `margin` away from zero, so that relu
/// kinks are never crossed by a finite-difference step.
pub fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng, margin: f64) -> Tensor<f64> {
    let len = shape.iter().product();
    let data = (0..len)
        .map(|_| {
            let v: f64 = rng.random_range(margin..1.0);
            if rng.random::<bool>() {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Worst relative error between `analytic` and central differences of the
/// scalar function `f` around `point`.
pub fn check_gradient(
    point: &Tensor<f64>,
    analytic: &[f64],
    mut f: impl FnMut(&Tensor<f64>) -> f64,
) -> f64 {
    const EPS: f64 = 1e-6;
    assert_eq!(point.len(), analytic.len());
    let mut worst = 0.0f64;
    for i in 0..point.len() {
        let mut plus = point.clone();
        plus.data_mut()[i] += EPS;
        let mut minus = point.clone();
        minus.data_mut()[i] -= EPS;
        let numeric = (f(&plus) - f(&minus)) / (2.0 * EPS);
        worst = worst.max(rel_err(analytic[i], numeric));
    }
    worst
}

/// `sum(r * y)`, the scalar used to project a layer output onto a fixed
/// random direction `r`.
pub fn project(y: &Tensor<f64>, r: &Tensor<f64>) -> f64 {
    y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}
