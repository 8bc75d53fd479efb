//! Link-level simulation of physical-layer-secure finite-blocklength feedback
//! coding for hierarchical federated learning uploads.
//!
//! The crate is organised bottom-up:
//!
//! - [`analysis`]: closed-form rate, secrecy and privacy calculators.
//! - [`channel`]: quasi-static fading duplex channel with an eavesdropper.
//! - [`codec`]: the modulo-dithered feedback codec over two real sub-channels.
//! - [`source`]: dithered scalar quantizer and payload chunking.
//! - [`hfl`]: client/edge/cloud learning protocol and privacy ledger.
//! - [`adversary`]: eavesdropper attacks and equivocation reporting.
//! - [`pipeline`]: one end-to-end training run over the coded link.

pub mod adversary;
pub mod analysis;
pub mod channel;
pub mod codec;
pub mod error;
pub mod hfl;
pub mod pipeline;
pub mod rng;
pub mod source;
pub mod stats;

pub use analysis::{LinkBudget, RateReport, SigmaWindow};
pub use channel::{ChannelRealization, NoiseSpec};
pub use error::{Error, Result};
pub use num_complex::Complex64;
