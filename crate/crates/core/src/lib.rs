//! Multitask-learning neural network forecasting for univariate traffic-flow
//! series.
//!
//! A 5-15-k perceptron (tansig hidden layer, linear outputs) is trained with
//! Levenberg-Marquardt on sliding windows of a [-1, 1]-normalised series.
//! The single-task network predicts `t(n)`; the multitask network also
//! predicts `t(n-1)` and `t(n+1)` through the same hidden layer. The
//! [`experiment`] module compares the two on a held-out test slice.

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod network;
pub mod synthgen;
pub mod trainer;

pub use error::{Error, Result};
