//! A small dense tensor library with hand-written forward and backward
//! passes for convolution, max pooling, linear, relu, dropout and softmax
//! cross-entropy, plus SGD training and checkpoints.

pub mod checkpoint;
pub mod network;
pub mod ops;
pub mod tensor;
pub mod train;

pub use network::{LayerSpec, Network, NetworkConfig, Prediction};
pub use tensor::{Real, Tensor};
pub use train::{train, train_observed, EpochStats, Example, TrainConfig, TrainOutcome};
