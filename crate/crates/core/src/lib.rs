//! Transfer learning for differential-equation surrogates via physics-aware
//! neural optimal transport.
//!
//! The crate is layered bottom-up: `diff` (tape autodiff and optimizer),
//! `pde` (deterministic data generation), `model` (operator surrogates and
//! their trainer), `pott` (the transport stage), and `experiment` (end-to-end
//! runs, storage, reports).

pub mod diff;
pub mod error;
pub mod experiment;
pub mod io;
pub mod model;
pub mod pde;
pub mod pott;
pub mod rng;

pub use diff::{Adam, AdamConfig, Tape, Tensor, Var};
pub use error::{FormatError, SolveError, TrainError};
pub use model::{OperatorModel, Standardizer, TrainConfig, TrainReport};
pub use error::RunError;
pub use experiment::{ExperimentConfig, Method, ResultRecord};
pub use pde::{Dataset, Domain, GridFunction, SamplePair};
pub use pott::{PottConfig, RegKind, TransportMap};
