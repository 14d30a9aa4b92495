//! Learning stack: networks, replay, the per-RSU agent, and the training
//! loop with its random-allocation baseline.

pub mod agent;
pub mod mlp;
pub mod replay;
mod train;

pub use agent::{ra_policy, Agent, AgentConfig, Checkpoint};
pub use train::{evaluate, train, AgentKind, CurvePoint, TrainConfig, TrainError, TrainOutput};
