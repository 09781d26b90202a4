//! Every backward pass against central finite differences in double precision.

mod support;

use support::grad;
use wvdnet::nn::ops::{conv2d_backward, conv2d_forward};
use wvdnet::nn::Tensor;

const TOL: f64 = 1e-4;

#[test]
fn conv2d_gradients() {
    let e = grad::conv2d();
    assert!(e < TOL, "{e}");
}

#[test]
fn conv2d_scalar_case() {
    let x = Tensor::new(vec![1, 1, 1], vec![5.0f64]).unwrap();
    let w = Tensor::new(vec![1, 1, 1, 1], vec![2.0]).unwrap();
    let b = Tensor::new(vec![1], vec![1.0]).unwrap();
    assert_eq!(conv2d_forward(&x, &w, &b, 1, 0).unwrap().data(), &[11.0]);
    let g = Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap();
    let (gx, gw, gb) = conv2d_backward(&g, &x, &w, 1, 0).unwrap();
    assert_eq!((gx.data()[0], gw.data()[0], gb.data()[0]), (2.0, 5.0, 1.0));
}

#[test]
fn maxpool_gradients() {
    let e = grad::maxpool();
    assert!(e < TOL, "{e}");
}

#[test]
fn linear_gradients() {
    let e = grad::linear();
    assert!(e < TOL, "{e}");
}

#[test]
fn relu_gradients() {
    let e = grad::relu();
    assert!(e < TOL, "{e}");
}

#[test]
fn dropout_gradients_with_a_fixed_mask() {
    let e = grad::dropout();
    assert!(e < TOL, "{e}");
}

#[test]
fn softmax_cross_entropy_gradients() {
    let e = grad::softmax_cross_entropy_loss();
    assert!(e < TOL, "{e}");
}

#[test]
fn whole_network_gradients() {
    let e = grad::whole_network();
    assert!(e < TOL, "{e}");
}
