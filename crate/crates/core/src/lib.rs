//! Latent-space reduction, recurrent forecasting and variational
//! assimilation with heterogeneous latent spaces.
//!
//! The pipeline compresses full-field snapshots with POD followed by a
//! dense autoencoder ([`rom`]), learns the latent dynamics with an
//! incremental sequence-to-sequence LSTM ([`forecast`]), and corrects
//! forecasts against observations encoded in their own latent space
//! ([`obsgen`], [`surrogate`], [`assim`]). The cross-latent observation map
//! is approximated around each background state by a local polynomial fit,
//! which gives the variational cost a smooth, exactly differentiable
//! operator. [`harness`] wires the stages together for twin experiments on
//! a synthetic Burgers flow.

pub mod assim;
pub mod error;
pub mod forecast;
pub mod harness;
pub mod io;
pub mod mesh;
pub mod neural;
pub mod obsgen;
pub mod rom;
pub mod surrogate;

pub use error::{Error, Result};
