//! Stop/continue decisions during batch formation.

mod bandit;
mod heuristic;
mod qlearn;
mod table_io;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

pub use bandit::{ArmStats, BanditConfig, BanditPolicy};
pub use heuristic::{HeuristicConfig, HeuristicPolicy};
pub use qlearn::{QConfig, QPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Add,
    Stop,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::Add, Action::Stop];

    pub fn flip(self) -> Action {
        match self {
            Action::Add => Action::Stop,
            Action::Stop => Action::Add,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Add => "add",
            Action::Stop => "stop",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What the policy sees about one candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    /// Requests already in the batch.
    pub batch_size: usize,
    /// Shared-prefix levels lost by admitting the candidate.
    pub chunk_loss: u32,
    /// Waiting requests sharing the candidate's prefix at the new tip, >= 1.
    pub peers: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DiscretizedState {
    pub b: u8,
    pub delta: u8,
    pub w: u8,
}

impl fmt::Display for DiscretizedState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.b, self.delta, self.w)
    }
}

fn log2_floor(x: usize) -> u8 {
    debug_assert!(x >= 1);
    (usize::BITS - 1 - x.leading_zeros()) as u8
}

/// Exponential bins for `b` and `w`, coarse thresholds for the chunk loss.
pub fn discretize(obs: &Observation) -> DiscretizedState {
    let delta = match obs.chunk_loss {
        0 => 0,
        1 => 1,
        2..=4 => 2,
        _ => 3,
    };
    DiscretizedState { b: log2_floor(obs.batch_size + 1), delta, w: log2_floor(obs.peers.max(1)) }
}

/// An observation that lands in `state`'s bins.
pub fn representative(state: DiscretizedState) -> Observation {
    let chunk_loss = [0, 1, 2, 5][state.delta.min(3) as usize];
    Observation { batch_size: (1usize << state.b) - 1, chunk_loss, peers: 1usize << state.w }
}

/// One logged decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub observation: Observation,
    pub state: DiscretizedState,
    pub action: Action,
}

/// Outcome of one simulated decode step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExecutedStep<F> {
    pub tokens: u64,
    pub duration: F,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("step with {tokens} tokens has non-positive duration")]
    ZeroDuration { tokens: u64 },
    #[error("policy table line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid policy constant: {0}")]
    InvalidConfig(String),
}

/// Decode throughput in tokens per second. An empty step earns nothing.
pub fn reward_signal<F: Scalar>(step: &ExecutedStep<F>) -> Result<F, PolicyError> {
    if step.tokens == 0 {
        return Ok(F::zero());
    }
    if step.duration <= F::zero() {
        return Err(PolicyError::ZeroDuration { tokens: step.tokens });
    }
    Ok(F::of_u64(step.tokens) / step.duration)
}

pub trait StoppingPolicy<F: Scalar> {
    fn decide(&mut self, obs: &Observation) -> Action;

    /// Credit one dispatched batch's reward to the decisions that formed it.
    fn observe(&mut self, decisions: &[Decision], reward: F);

    fn name(&self) -> &'static str;
}

/// Admits every candidate; turns the batcher into a pure FindBest-greedy
/// scheduler.
#[derive(Debug, Clone, Copy, Default)]
pub struct AlwaysAdd;

impl<F: Scalar> StoppingPolicy<F> for AlwaysAdd {
    fn decide(&mut self, _obs: &Observation) -> Action {
        Action::Add
    }

    fn observe(&mut self, _decisions: &[Decision], _reward: F) {}

    fn name(&self) -> &'static str {
        "greedy"
    }
}

/// Any of the shipped policies behind one type.
#[derive(Debug, Clone)]
pub enum Policy<F: Scalar> {
    Heuristic(HeuristicPolicy),
    Bandit(BanditPolicy<F>),
    Q(QPolicy<F>),
    Greedy(AlwaysAdd),
}

impl<F: Scalar> StoppingPolicy<F> for Policy<F> {
    fn decide(&mut self, obs: &Observation) -> Action {
        match self {
            Policy::Heuristic(p) => StoppingPolicy::<F>::decide(p, obs),
            Policy::Bandit(p) => p.decide(obs),
            Policy::Q(p) => p.decide(obs),
            Policy::Greedy(p) => StoppingPolicy::<F>::decide(p, obs),
        }
    }

    fn observe(&mut self, decisions: &[Decision], reward: F) {
        match self {
            Policy::Heuristic(p) => p.observe(decisions, reward),
            Policy::Bandit(p) => p.observe(decisions, reward),
            Policy::Q(p) => p.observe(decisions, reward),
            Policy::Greedy(p) => p.observe(decisions, reward),
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Policy::Heuristic(p) => StoppingPolicy::<F>::name(p),
            Policy::Bandit(p) => p.name(),
            Policy::Q(p) => p.name(),
            Policy::Greedy(p) => StoppingPolicy::<F>::name(p),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(b: usize, d: u32, w: usize) -> Observation {
        Observation { batch_size: b, chunk_loss: d, peers: w }
    }

    #[test]
    fn bins() {
        assert_eq!(discretize(&obs(0, 0, 1)), DiscretizedState { b: 0, delta: 0, w: 0 });
        assert_eq!(discretize(&obs(7, 3, 8)), DiscretizedState { b: 3, delta: 2, w: 3 });
        assert_eq!(discretize(&obs(1, 1, 2)).delta, 1);
        assert_eq!(discretize(&obs(1, 4, 2)).delta, 2);
        assert_eq!(discretize(&obs(1, 5, 2)).delta, 3);
        assert_eq!(discretize(&obs(500, 900, 1000)), DiscretizedState { b: 8, delta: 3, w: 9 });
    }

    #[test]
    fn reward() {
        let r = reward_signal(&ExecutedStep { tokens: 100, duration: 0.1f64 }).unwrap();
        assert!((r - 1000.0).abs() < 1e-9);
        assert_eq!(reward_signal(&ExecutedStep { tokens: 0, duration: 0.0f64 }), Ok(0.0));
        assert!(reward_signal(&ExecutedStep { tokens: 3, duration: 0.0f64 }).is_err());
    }
}
