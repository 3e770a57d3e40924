//! Low-dimensional generative parameterization of binary geological media.
//!
//! A convolutional variational autoencoder maps a small latent vector to
//! channelized facies fields. Around it sit the pieces needed to build
//! training sets ([`geostat`]), judge realization quality ([`metrics`]),
//! compare against classical parameterizations ([`baselines`]), simulate
//! steady-state groundwater flow ([`flow`]) and invert head data by
//! multi-chain MCMC in the latent space ([`inversion`]).

pub mod baselines;
pub mod container;
pub mod error;
pub mod flow;
pub mod geostat;
pub mod grid;
pub mod inversion;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod vae;

pub use error::{Error, Result};
pub use grid::{BinaryField, ContinuousField, Grid, HardData, HardDatum};
