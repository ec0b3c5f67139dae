//! Distributed medium access control via virtual-packet contention feedback.
//!
//! The receiver measures the success probability of a virtual packet (the
//! channel contention measure) and broadcasts it; every user inverts the
//! designed theoretical contention curve to recover an operating-point
//! target and blends its transmission probability vector toward it. This
//! crate provides the channel models, the contention measure machinery,
//! the design toolkit (single and multiple transmission options), the
//! per-user adaptation rules, a slotted Monte Carlo simulator, and a mean
//! ODE integrator.

pub mod channel;
pub mod config;
pub mod contention;
pub mod design;
pub mod error;
pub mod mac;
pub mod presets;
pub mod sim;

pub use error::{Error, Result};
