//! Learning-based saliency fusion for HDR video.

pub mod error;
pub mod fdm;
pub mod features;
pub mod field;
pub mod fusion;
pub mod hvs;
pub mod io;
pub mod metrics;
pub mod scalar;

pub use error::{Error, Result};
pub use field::Field2D;
pub use scalar::Real;

/// Double-precision raster.
pub type Field = Field2D<f64>;
/// Single-precision raster.
pub type Field32 = Field2D<f32>;
