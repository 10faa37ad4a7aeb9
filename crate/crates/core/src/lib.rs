//! Graph-based performance predictors for neural architecture search.
//!
//! The crate covers the full experimental pipeline:
//!
//! - [`archspace`]: DAG architecture model, spaces, sampling, mutation.
//! - [`encoding`]: position-aware path encoding, graph edit distance,
//!   deduplication.
//! - [`diffcore`]: a small reverse-mode autodiff tape, Adam, schedules.
//! - [`gnnmodels`]: GIN-based embedding modules and the predictor models.
//! - [`ssl`]: self-supervised pretraining (distance regression and
//!   central contrastive learning).
//! - [`benchstore`]: tabular benchmark storage, synthetic surrogates,
//!   cell conversion.
//! - [`searchlab`]: predictor-guided evolutionary search, baselines, and
//!   experiment runners.
//!
//! Numeric code is generic over [`scalar::Scalar`]; the aliases below fix
//! the default `f64` instantiation used by the CLI and the test suites.

pub mod archspace;
pub mod benchstore;
pub mod diffcore;
pub mod encoding;
pub mod error;
pub mod gnnmodels;
pub mod scalar;
pub mod searchlab;
pub mod ssl;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default scalar precision for experiments.
pub type Real = f64;

/// Autodiff tape at default precision.
pub type Tape = diffcore::Tape<Real>;

/// Parameter store at default precision.
pub type ParameterStore = diffcore::ParameterStore<Real>;
