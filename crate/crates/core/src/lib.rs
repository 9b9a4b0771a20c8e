//! Multi-scale CNN forgery localization.

mod codec;
pub mod error;
pub mod eval;
pub mod filters;
pub mod fusion;
pub mod mapgen;
pub mod net;
pub mod raster;
pub mod sampler;
pub mod scalar;
pub mod slic;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Network32 = net::Network<f32>;
pub type Network64 = net::Network<f64>;
pub type ModelCheckpoint32 = net::ModelCheckpoint<f32>;
pub type ModelCheckpoint64 = net::ModelCheckpoint<f64>;
pub type FloatMap32 = raster::FloatMap<f32>;
pub type FloatMap64 = raster::FloatMap<f64>;
pub type BaseFilterBank32 = filters::BaseFilterBank<f32>;
pub type BaseFilterBank64 = filters::BaseFilterBank<f64>;
