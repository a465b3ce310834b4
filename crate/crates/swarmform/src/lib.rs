//! Formation control for a simulated 2-D missile swarm, trained with a
//! natural co-evolutionary strategy.
//!
//! The crate covers the whole pipeline: plant models ([`dynamics`]),
//! parametric formation patterns ([`formation`]), displacement-based error
//! model and fitness ([`error_model`]), the cluster-head adaptive
//! communication topology with connectivity checks ([`topology`]), the MLP
//! controller ([`policy`]), the co-evolutionary optimizer with population
//! adaptation and the model-based rollout constraint ([`nces`]), scenario
//! definitions and the episode loop ([`scenario`]), and trace/plot/config
//! plumbing ([`trace`], [`plot`], [`config`]).
//!
//! Population evaluation is data-parallel via rayon when the `parallel`
//! feature (default) is enabled; a sequential fallback produces bit-identical
//! results.

pub mod config;
pub mod dynamics;
pub mod error;
pub mod error_model;
pub mod formation;
pub mod nces;
pub mod plot;
pub mod policy;
pub mod rng;
pub mod scenario;
pub mod topology;
pub mod trace;

pub use error::{Error, Result};
