//! Compositionally-warped Gaussian process regression.
//!
//! Observations `y` are mapped to a latent Gaussian process by an invertible
//! warping `x = φ(y)` built from elementary transforms (affine, log, arcsinh,
//! Box-Cox, sinh-arcsinh). Every elementary layer has a closed-form inverse,
//! so medians and percentiles of the predictive distribution are exact and
//! cheap; means use Gauss-Hermite quadrature. A sum-of-tanh warping is
//! provided as a baseline that needs a numeric inverse.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix `f64`.

pub mod data;
pub mod error;
pub mod gaussian;
pub mod kernels;
pub mod metrics;
pub mod model;
pub mod quadrature;
pub mod scalar;
pub mod train;
pub mod warpings;

pub use error::{Error, Result};
pub use kernels::{ConstantMean, Kernel as GenericKernel, SmComponent};
pub use model::{GradientMode, PredictOptions, SampleOptions};
pub use scalar::Scalar;
pub use warpings::{CompositeWarping as GenericCompositeWarping, ElementaryWarping as GenericElementaryWarping};

pub type Kernel = kernels::Kernel<f64>;
pub type ElementaryWarping = warpings::ElementaryWarping<f64>;
pub type Warping = warpings::CompositeWarping<f64>;
pub type Model = model::WarpedGp<f64>;
pub type FittedCache = model::FittedCache<f64>;
pub type PredictionSummary = model::PredictionSummary<f64>;
pub type TrainReport = train::TrainReport<f64>;
