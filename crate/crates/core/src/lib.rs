//! Double-smoothed nonparametric estimation of the infinitesimal
//! conditional volatility `M²(x)` of a jump-diffusion from discretely
//! sampled paths.

pub mod error;
pub mod estimators;
pub mod inference;
pub mod kernels;
pub mod mc_harness;
pub mod model_sim;
pub mod quad;
pub mod scalar;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
pub use kernels::{kernel_by_name, theta_phi, Kernel};
pub use model_sim::{builtin_model, builtin_models, simulate_path, ModelParams, ModelSpec, SamplePath, SimConfig};
pub use scalar::Scalar;

pub use estimators::{double_smoothed_moments, local_time_hat, single_smoothed_m2, EstimatorConfig, MomentEstimate};
pub use inference::{confidence_interval, InferenceResult, Regime};

pub type SamplePath64 = SamplePath<f64>;
pub type SamplePath32 = SamplePath<f32>;
pub type ModelSpec64 = ModelSpec<f64>;
pub type ModelSpec32 = ModelSpec<f32>;
pub type EstimatorConfig64 = EstimatorConfig<f64>;
pub type EstimatorConfig32 = EstimatorConfig<f32>;
pub type MomentEstimate64 = MomentEstimate<f64>;
pub type MomentEstimate32 = MomentEstimate<f32>;
pub type InferenceResult64 = InferenceResult<f64>;
pub type InferenceResult32 = InferenceResult<f32>;
