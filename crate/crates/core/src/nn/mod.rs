//! Trajectory-to-state regression network.

pub mod checkpoint;
pub mod evaluate;
pub mod loss;
pub mod mlp;
pub mod train;

pub use evaluate::{evaluate, Evaluation, InfidelitySummary};
pub use loss::{loss, output_state, NetworkOutputState};
pub use mlp::MlpModel;
pub use train::{train, LearningCurve, Samples, TrainConfig, TrainedModel};
