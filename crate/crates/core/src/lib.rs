//! Recursive joint cross-attention fusion of audio and visual features for
//! person verification.
//!
//! The numeric layers ([`tape`], [`fusion`], [`temporal`], [`objective`],
//! [`metrics`]) are generic over the [`Scalar`] type. The [`pipeline`] (feature
//! files, training, evaluation) runs in double precision; see the aliases below.

pub mod error;
pub mod fusion;
pub mod gradcheck;
pub mod metrics;
pub mod objective;
pub mod pipeline;
pub mod scalar;
pub mod tape;
pub mod temporal;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tape::{Activation, Gradients, Tape, Var};
pub use tensor::Tensor;

/// Element type used by training and evaluation.
pub type Real = f64;

pub type Tensor64 = Tensor<f64>;
pub type Tensor32 = Tensor<f32>;
pub type Tape64 = Tape<f64>;
pub type FeatureMatrix = Tensor<Real>;
pub type JcaParams64 = fusion::JcaIterationParams<f64>;
pub type BlstmParams64 = temporal::BlstmParams<f64>;
pub type AamHead64 = objective::AamHead<f64>;
