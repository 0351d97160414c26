//! Geometric warping and loss operators for pose-guided garment transfer.
//!
//! The crate covers keypoint distance fields, windowed feature correlation,
//! softmax dense warping, thin-plate-spline warping with a second-order
//! lattice constraint, layout manipulation, attention fusion, the training
//! losses and the evaluation metrics. Every differentiable operator carries a
//! hand-written vector-Jacobian product checked against central differences
//! (see [`autodiff`]).
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*32` and
//! `*64` aliases below name the concrete instantiations.

pub mod autodiff;
pub mod config;
pub mod correspondence;
pub mod error;
pub mod fixtures;
pub mod fusion;
pub mod io;
pub mod layout;
pub mod losses;
pub mod metrics;
pub mod ops;
pub mod pipeline;
pub mod pose;
pub mod reduce;
pub mod scalar;
pub mod tensor;
pub mod warping;

pub use config::PipelineConfig;
pub use error::{Error, ErrorClass, Result};
pub use pipeline::{run_pipeline, PipelineInputs};
pub use ops::WindowSpec;
pub use scalar::{DType, Scalar};
pub use tensor::Tensor;

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
