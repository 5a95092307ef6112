//! Layer-wise mixup personalized federated learning.
//!
//! Models are ordered lists of parameter layers. Each round the server
//! blends its global model into every selected client's personalized model
//! layer by layer, clients train locally, and the server blends their
//! updates back into the previous global model before averaging.

pub mod data;
pub mod error;
pub mod mixup;
pub mod model;
pub mod orchestrator;
pub mod rng;
pub mod strategy;
pub mod theory;
pub mod training;

pub use data::{Dataset, PartitionPlan, PartitionScheme, QuadraticFamily};
pub use error::{Error, Result};
pub use mixup::{MixSchedule, Phase};
pub use model::{LayerShape, LayeredParams, ModelKind, ModelSpec};
pub use orchestrator::{DataSource, ExperimentConfig, ExperimentResult, RoundRecord};
pub use strategy::{ClientState, ScheduleMode, ScheduleSpec, Strategy, StrategyKind, StrategySpec};
pub use training::{LocalObjective, LocalTrainer, LocalWork, Optimizer};
