//! Data side of the pipeline: grids, random fields, reference solvers, and
//! dataset generation.

pub mod advection;
pub mod burgers;
pub mod darcy;
pub mod datagen;
pub mod grf;
pub mod grid;
pub mod kl;

pub use datagen::{generate, DomainSpec, Family, FamilyParams, GenSpec, Subdomain};
pub use grid::{Dataset, Domain, GridFunction, SamplePair};
