//! Ship wake detection in SAR-like imagery by Radon-domain inversion.

pub mod detect;
pub mod dtcwt;
pub mod error;
pub mod eval;
pub mod image;
pub mod io;
pub mod operator;
pub mod penalties;
pub mod radon;
pub mod scalar;
pub mod sim;
pub mod solver;
pub mod wake;

pub use error::{Error, Result};

/// Observed intensity image.
pub type SarImage = image::Image<f64>;
/// Radon-domain unknown.
pub type RadonImage = image::Sinogram<f64>;
pub type Pyramid = dtcwt::WaveletPyramid<f64>;
pub type Radon = radon::RadonOperator<f64>;
