pub mod builder;
pub mod checkpoint;
pub mod config;
pub mod cross;
pub mod dataset;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod fact;
pub mod hgnn;
pub mod manifest;
pub mod model;
pub mod params;
pub mod rng;
pub mod train;
pub mod vocab;

pub use error::{Error, Result};
