//! Learning Bregman divergences with input-convex neural networks.
//!
//! The crate provides, from the bottom up:
//!
//! * [`autodiff`] — a reverse-mode tape with forward-mode tangents, enough
//!   to differentiate losses that contain directional derivatives of the
//!   network (double backpropagation);
//! * [`icnn`] — the convex generating function phi as a fully input-convex
//!   network with Softplus activations;
//! * [`divergence`] — Bregman divergences over learned or closed-form
//!   generators, including square-root and generalized-symmetrized variants;
//! * [`encoder`] — the jointly trained MLP feature extractor;
//! * [`train`] — losses, batch-all triplet mining, Adam, and the joint
//!   training loops;
//! * [`datagen`] — seeded synthetic dataset generators (distribution
//!   mixtures, divergence-regression pairs, shortest-path graphs, and a
//!   vector-valued digit-divergence task);
//! * [`evalsuite`] — generalized Bregman k-means and ranking/clustering
//!   metrics;
//! * [`experiment`] — config-driven end-to-end runs backing the CLI.

pub mod autodiff;
pub mod error;
pub mod linalg;

pub mod checkpoint;
pub mod config;
pub mod datagen;
pub mod divergence;
pub mod encoder;
pub mod evalsuite;
pub mod experiment;
pub mod icnn;
pub mod train;

pub use error::{NbdError, Result};
pub use linalg::Mat;
