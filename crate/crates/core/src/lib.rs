//! Reconstruction-free anomaly detection with diffusion models.
//!
//! A noise-prediction network is trained on feature maps of normal samples.
//! At test time a feature map is pushed to the terminal latent by a few
//! deterministic DDIM inversion steps, and anomalies are scored by how far
//! that latent strays from the standard-normal prior.
//!
//! Modules, bottom-up:
//!
//! * [`numerics`]: tensors, seeded streams, bilinear upsampling, gradient kernels
//! * [`schedule`]: linear β schedules and inversion timestep subsets
//! * [`epsnet`]: ε-models (closed-form Gaussian and a trainable MLP), training, model files
//! * [`diffusion`]: q-sampling, DDIM sampling and inversion, the reconstruction baseline
//! * [`scoring`]: anomaly maps and image scores, plus the Mahalanobis baseline
//! * [`metrics`]: AU-ROC, AP, F1-max, AU-PRO and the aggregate report
//! * [`synthbench`]: a synthetic feature-space benchmark and the FTEN tensor format
//!
//! Everything numeric is generic over [`numerics::Real`]; the aliases below
//! fix the scalar to `f64`, which is what the command-line tool uses.

pub mod diffusion;
pub mod epsnet;
mod error;
pub mod metrics;
pub mod numerics;
pub mod schedule;
pub mod scoring;
pub mod synthbench;

pub use error::{Error, Result};
pub use numerics::{Mask, Real, Rng};

pub type Tensor = numerics::Tensor<f64>;
pub type Tensor32 = numerics::Tensor<f32>;
pub type NoiseSchedule = schedule::NoiseSchedule<f64>;
pub type MlpEpsModel = epsnet::MlpEpsModel<f64>;
pub type AnalyticGaussianModel = epsnet::AnalyticGaussianModel<f64>;
pub type AnomalyResult = scoring::AnomalyResult<f64>;
pub type LocationStats = scoring::LocationStats<f64>;
pub type Dataset = synthbench::Dataset<f64>;
pub type LabeledSample = synthbench::LabeledSample<f64>;
