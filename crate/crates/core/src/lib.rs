//! Prefix-aware batch scheduling for LLM serving.
//!
//! The [`cht`] module keeps an incremental chunked hash tree over waiting and
//! active requests; [`batcher`] drives it with a stopping [`policy`];
//! [`simcore`] simulates serving under a locality-aware cost model.

pub mod baselines;
pub mod batcher;
pub mod cht;
pub mod hashing;
pub mod policy;
pub mod scalar;
pub mod simcore;
pub mod workload;

pub use batcher::{build_batch, AdmissionGate, BatchPlan, Limits};
pub use cht::{Candidate, ChtConfig, ChtError, ChtState, ChunkKey, RequestId, Tip};
pub use hashing::{ChunkSize, HashAlgorithm, HashVector, Token};
pub use scalar::Scalar;

/// Double-precision instantiations.
pub type CostParams = simcore::CostParams<f64>;
pub type SimConfig = simcore::SimConfig<f64>;
pub type SimOutput = simcore::SimOutput<f64>;
pub type Metrics = simcore::Metrics<f64>;
pub type BanditPolicy = policy::BanditPolicy<f64>;
pub type QPolicy = policy::QPolicy<f64>;
pub type Policy = policy::Policy<f64>;
