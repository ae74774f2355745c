//! Unsupervised STDP training of a two-layer spiking network, with
//! STDP-driven pruning and weight sharing of the input synapses.

pub mod checkpoint;
pub mod commands;
pub mod compression;
pub mod config;
pub mod encoding;
pub mod error;
pub mod idx;
pub mod network;
pub mod neuron;
pub mod pipeline;
pub mod plasticity;
#[cfg(feature = "images")]
pub mod preprocess;
pub mod report;

pub use error::{Error, Result};
