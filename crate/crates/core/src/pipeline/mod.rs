//! Data handling, training, evaluation and experiment drivers.

pub mod config;
pub mod dataset;
pub mod features;
pub mod model;
pub mod synth;
pub mod trials;
pub mod optim;
pub mod train;
pub mod checkpoint;
pub mod evaluate;
pub mod experiment;
pub mod gradsuite;
