//! Discrete-event serving simulator.

mod batch;
pub mod calibrate;
mod cost;
mod kv;
mod metrics;
mod scheduler;
mod sim;

use thiserror::Error;

pub use batch::{BatchTracker, Chain};
pub use cost::{prefill_time, step_time, BatchProfile, CostParams, RequestKv};
pub use kv::{Admission, KvError, KvStore};
pub use metrics::{DecisionRecord, Metrics, RequestRecord, StepRecord};
pub use scheduler::{
    FcfsScheduler, FeatherScheduler, ForcedBatchScheduler, ForcedPartition, RadixScheduler, Scheduler, TreeOrder,
};
pub use sim::{run_simulation, SimConfig, SimOutput};

use crate::policy::PolicyError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("step requested for an empty batch")]
    EmptyBatch,
    #[error("no progress at t={time:.6}s with {waiting} waiting: {detail}")]
    ZeroProgress { time: f64, waiting: usize, detail: String },
    #[error("invalid simulation config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Kv(#[from] KvError),
}
