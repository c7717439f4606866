//! Confidence-regularized representation learning and re-identification
//! ranking.
//!
//! Losses live in [`losses`] and [`vib`], the fully connected encoder and its
//! explicit backward pass in [`model`], and the query/gallery protocol in
//! [`eval`]. All arithmetic is `f64`; all randomness flows through
//! [`RngStream`] so every run replays from its seed.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod gradcheck;
pub mod losses;
pub mod matrix;
pub mod model;
pub mod numerics;
pub mod optim;
pub mod rng;
pub mod train;
pub mod vib;

pub use data::{Dataset, Payload, RasterImage, Sample, SampleMeta, Split, SyntheticSpec};
pub use error::{Error, Result};
pub use eval::{DistanceMatrix, EvalReport, EvalSettings, MatchMask, RerankParams};
pub use experiment::ExperimentConfig;
pub use losses::{LossConfig, LossOutput, Penalty, TargetDistribution};
pub use matrix::Matrix;
pub use model::{Activation, ClassifierHead, EncoderModel, ModelSpec, Network};
pub use optim::{LrSchedule, OptimizerState};
pub use rng::RngStream;
pub use vib::{LatentGaussian, LatentSample};
