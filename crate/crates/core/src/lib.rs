//! Numerical laboratory for training dynamics of small neural networks under
//! finite symmetry groups: nominal, augmented, equivariant and regularized
//! gradient flows, Reynolds projections onto equivariant layer spaces, and an
//! executable verification suite for the structural claims those dynamics obey.

pub mod config;
pub mod data;
pub mod dynamics;
pub mod error;
pub mod group;
pub mod net;
pub mod report;
pub mod setup;
pub mod subspaces;
pub mod verify;

pub use error::{EqError, Result};
