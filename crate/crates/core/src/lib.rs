//! Measures on the discrete hypercube `{-1,1}^n`.
//!
//! The crate stores a measure as a dense table of `2^n` weights and computes
//! everything that can be computed exactly by enumeration: tilts, the
//! log-Laplace transform and its cumulants, entropies, and Wasserstein-1
//! distances. On top of that it simulates the stochastic localization process
//! (both as a tilt SDE and as a measure-valued SDE), the reflection coupling
//! of two localization paths, and a set of audits that check variance and
//! entropy inequalities for semi-log-concave and Rayleigh measures.
//!
//! Module map:
//!
//! - [`measure`]: points, measures, test functions, exact statistics.
//! - [`fourier`]: Walsh–Fourier transform and the multilinear extension.
//! - [`laplace`]: log-Laplace transform, tilts, cumulants, certification.
//! - [`localization`]: stochastic localization paths and samplers.
//! - [`transport`]: exact W1, reflection coupling, coupling audits.
//! - [`audits`]: end-to-end variance and entropy audits.
//! - [`report`]: the shared audit report format.
//! - [`cli`]: the `cube-localize` command line.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::type_complexity)]

pub mod audits;
pub mod cli;
pub mod error;
pub mod fourier;
pub mod laplace;
pub mod localization;
pub mod measure;
pub mod report;
pub mod rng;
pub mod stats;
pub mod transport;

pub use error::{Error, Result};
pub use measure::{DiscreteMeasure, HypercubePoint, MeasureSpec, TestFunction};
