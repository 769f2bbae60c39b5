//! Attraction-repulsion energies between measures, their particle and grid
//! minimizers, and one-dimensional Wasserstein gradient flows.

pub mod energy;
pub mod error;
pub mod flow1d;
pub mod kernels;
pub mod measures;
pub mod optimize;
pub mod tiling;
pub mod tv;

pub use error::{Error, Result};
