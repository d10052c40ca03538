//! Core library: a small reverse-mode autodiff engine, quantile-map
//! samplers, deterministic and stochastic generator layers, adversarial
//! losses, divergence metrics and the training loops that tie them
//! together.

pub mod error;
pub mod experiment;
pub mod graph;
pub mod loss;
pub mod metrics;
pub mod nn;
pub mod quantile;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{AutodiffError, DataError, MetricsError, QuantileError, TrainError};
pub use graph::{grad_check_fd, Gradients, Graph, InputGradient, NodeId, Op};
pub use rng::{Prng, SplitMix64};
pub use tensor::Tensor;
