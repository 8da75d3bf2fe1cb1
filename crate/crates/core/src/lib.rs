//! Kendall rank-correlation matrices, their Hoeffding decomposition and
//! spectral comparisons against Marchenko-Pastur laws.

pub mod datagen;
pub mod error;
pub mod experiments;
pub mod hoeffding;
pub mod kendall;
pub mod laws;
pub mod matrix;
pub mod quad;
pub mod spectral;

pub use error::{Error, Result};
