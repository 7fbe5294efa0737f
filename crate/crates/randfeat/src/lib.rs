//! Random-feature models of neural-network type and the experiments they
//! support.
//!
//! The crate provides, bottom-up:
//!
//! - [`features`]: sampling of inner-weight distributions (uniform sphere,
//!   Gaussian, ellipsoid) and evaluation of ReLU / Fourier random-feature
//!   maps.
//! - [`kernels`]: the arc-cosine kernel induced by uniform-sphere ReLU
//!   features in closed form, its Taylor coefficients, Monte-Carlo kernel
//!   estimation, RKHS-norm bound calculators, and an empirical leverage
//!   (admissibility) score.
//! - [`atoms`]: finite signed combinations of ReLU atoms, Maurey
//!   sparsification into bounded-weight shallow networks, and a multi-layer
//!   composition approximator that assembles explicit weight matrices.
//! - [`learn`]: hinge/logistic/squared losses, the projected-SGD trainer for
//!   norm-constrained random-feature models, dense 2/3-layer ReLU baselines
//!   with backprop and Adam, and theory-driven sample/feature-count
//!   calculators.
//! - [`data`]: synthetic dataset generators, LIBSVM ingestion, normalization,
//!   and deterministic (stratified) k-fold splitting.
//! - [`experiment`]: grid-search / cross-validation sweeps and the
//!   depth-separation sweep, with CSV/JSON result emission and resume
//!   support.
//!
//! Every sampling or training routine is a pure function of its inputs and a
//! 64-bit seed; parallel and serial execution produce identical results.
//!
//! See the `examples/` directory for one runnable example per capability and
//! `tests/acceptance.rs` for the end-to-end verification suite.

pub mod atoms;
pub mod data;
pub mod error;
pub mod experiment;
pub mod features;
pub mod kernels;
pub mod learn;
mod linalg;

pub use error::{Error, Result};
