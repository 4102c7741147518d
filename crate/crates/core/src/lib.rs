//! Path-integrated gradient attribution for image classifiers.
//!
//! The crate builds integration paths (straight line, guided, blur), turns them into
//! attributions with either the left Riemann sum or the important-direction integrator,
//! and scores the resulting maps with insertion, AIC/SIC and localization metrics.
//! Built-in toy classifiers with analytic gradients stand in for real networks.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases below fix
//! the scalar to `f64`, which is what the CLI and the file formats use.

pub mod cli;
pub mod error;
pub mod integrators;
pub mod io;
pub mod metrics;
pub mod models;
pub mod paths;
pub mod scalar;
pub mod tensor;

pub use error::{Error, Result};
pub use integrators::{
    attribute, idgi_integrate, project_to_hyperplane, riemann_integrate, vanilla_gradient,
    AttributeOptions, Attribution, Baseline, Method,
};
pub use metrics::{CurveReport, InfoLevel, LocalizationScore, PixelImportance};
pub use models::{GradientOracle, Head, ToyModel};
pub use paths::{BlurSchedule, Path, PathKind};
pub use scalar::Scalar;
pub use tensor::{GaussianKernel, Shape, Tensor};

/// Image or feature tensor in double precision.
pub type ImageTensor = Tensor<f64>;
/// Image or feature tensor in single precision.
pub type ImageTensorF32 = Tensor<f32>;
/// Attribution map in double precision.
pub type AttributionMap = Attribution<f64>;
/// Integration path in double precision.
pub type PathPoints = Path<f64>;
/// Toy classifier in double precision.
pub type ToyModelF64 = ToyModel<f64>;
/// Toy classifier in single precision.
pub type ToyModelF32 = ToyModel<f32>;
/// Gaussian kernel in double precision.
pub type GaussianKernelF64 = GaussianKernel<f64>;
