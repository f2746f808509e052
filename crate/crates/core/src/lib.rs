//! Percolation on the hexagonal lattice with flower-correlated irises.

pub mod bkcheck;
pub mod cardy;
pub mod error;
pub mod explorer;
pub mod lattice;
pub mod loewner;
pub mod measure;
pub mod observable;
pub mod pathstats;
pub mod rng;
pub mod sampler;
pub mod stats;
pub mod union_find;

pub use error::{Error, Result};
pub use measure::{HexState, ModelParams};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
