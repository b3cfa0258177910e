//! Physics simulation, degradation, dataset handling and image-quality metrics for unpaired
//! STM image denoising.

pub mod data;
pub mod degradation;
pub mod error;
pub mod field;
pub mod filter;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod physics;
pub mod rng;
pub mod scalar;

pub use error::{CoreError, Result};
pub use field::{Extent, ScalarField2D};
pub use scalar::Scalar;

/// Double-precision raster, the storage type for simulated and degraded images.
pub type Field = ScalarField2D<f64>;
/// Single-precision raster.
pub type Field32 = ScalarField2D<f32>;
