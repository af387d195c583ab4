//! Deterministic simulator for parallel and decentralized convex optimization.
//!
//! The crate is organized by layer:
//!
//! - [`objectives`]: finite-sum problems, smoothness profiles and audited oracles.
//! - [`topology`]: communication graphs, Laplacians, gossip matrices and schedules.
//! - [`consensus`]: plain and Chebyshev-accelerated averaging.
//! - [`compressors`]: TopK, RandK and simplex-vertex message compression.
//! - [`optimizers`]: centralized, finite-sum and decentralized methods.
//! - [`zeroth_order`]: two-point gradient estimation and gradient-free sliding.
//! - [`harness`]: experiment configs, sweeps, slope fits and exports.
//!
//! Every run is single-threaded and reproducible from its seed.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod compressors;
pub mod consensus;
pub mod error;
pub mod harness;
pub mod objectives;
pub mod optimizers;
pub mod rng;
pub mod topology;
pub mod trace;
pub mod zeroth_order;

pub use error::{Error, Result};
