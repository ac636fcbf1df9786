//! Multimodal corridor traffic simulation and action-branching double deep-Q
//! signal control.
//!
//! * [`sim`]: deterministic corridor simulator (cars, buses, pedestrians).
//! * [`signal_control`]: half-cycle plan decoding and fixed-time baselines.
//! * [`encoder`]: observation vector built from a simulator snapshot.
//! * [`metrics`]: person-delay reward and evaluation metrics.
//! * [`qnet`]: branching Q-network, double-DQN loss, Adam and replay.
//! * [`trainer`]: episode loop, policies, training and evaluation.
//!
//! The crate is `no_std` and only needs an allocator.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod encoder;
pub mod error;
pub mod metrics;
pub mod qnet;
pub mod signal_control;
pub mod sim;
pub mod trainer;

pub use error::{Error, Result};
