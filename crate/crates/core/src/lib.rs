//! Link-level simulation of multi-user MIMO uplinks with transmitter I/Q
//! imbalance and power-amplifier nonlinearity, together with a Bayesian
//! detector that runs unitary approximate message passing on a trained
//! signal-flow neural network.
//!
//! Module map:
//!
//! - [`numerics`]: dense linear algebra and probability kernels.
//! - [`airlink`]: front-end impairments and the multipath channel.
//! - [`modem`]: constellations and the coded bit chain.
//! - [`signal_flow_nn`]: the structured substitute network and its training.
//! - [`detector`]: the message-passing detector and its AMP diagnostic variant.
//! - [`baselines`]: reference detectors.

pub mod airlink;
pub mod baselines;
pub mod detector;
pub mod error;
pub mod modem;
pub mod numerics;
pub mod optim;
pub mod signal_flow_nn;

pub use error::{Error, Result};
