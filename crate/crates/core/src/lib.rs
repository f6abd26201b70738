//! Spiking-neuron control of a soft snake simulated as a discrete Cosserat rod.

pub mod config;
pub mod controllers;
pub mod env;
pub mod error;
pub mod exec;
pub mod io;
pub mod metrics;
pub mod neuron;
pub mod oscillator;
pub mod ppo;
pub mod rod;
pub mod snake;

pub use error::{Error, Result};
