//! Gaussian-process energy disaggregation.
//!
//! A separate sparse variational GP is fit per appliance, mapping features of
//! the household aggregate (mains) signal to that appliance's power. Four
//! input representations are supported: the scalar reading, a centered
//! window of readings, window statistics, and either of the latter two with
//! an extra linear kernel on the window range.

pub mod data;
pub mod error;
pub mod experiment;
pub mod features;
pub mod kernels;
pub mod metrics;
pub mod sparse_gp;
pub mod synth;

pub use data::{FoldPlan, Home, PowerSeries};
pub use error::{NilmError, Result};
pub use experiment::{DataSource, ExperimentConfig, ModelVariant, TrainedModel};
pub use features::{FeatureMatrix, WindowConfig};
pub use kernels::{KernelParams, KernelSpec};
pub use metrics::{MetricsReport, ReliabilityCurve};
pub use sparse_gp::{PredictiveDistribution, SparseGPModel, TrainConfig};
pub use synth::{ApplianceModel, SynthConfig};
