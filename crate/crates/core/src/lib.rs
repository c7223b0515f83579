//! Simulation laboratory for differentially private decentralized mean
//! estimation with incremental averaging.
//!
//! Parties gossip noisy partial values over a time-varying graph; the
//! [`accountant`] module checks what an eavesdropping or colluding
//! [`adversary`] can learn and calibrates the noise accordingly.

pub mod accountant;
pub mod adversary;
pub mod baselines;
pub mod error;
pub mod harness;
pub mod json;
pub mod linalg;
pub mod protocol;
pub mod rng;
pub mod topology;

pub use error::{Error, Result};
