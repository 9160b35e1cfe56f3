use serde::{Deserialize, Serialize};

use super::{Action, Decision, Observation, StoppingPolicy};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeuristicConfig {
    /// Below this batch size every candidate is admitted.
    pub b_min: usize,
    /// Tolerated chunk loss.
    pub tau: u32,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        Self { b_min: 8, tau: 2 }
    }
}

/// Fixed admission rules.
#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicPolicy {
    pub config: HeuristicConfig,
}

impl HeuristicPolicy {
    pub fn new(config: HeuristicConfig) -> Self {
        Self { config }
    }

    pub fn decide_obs(&self, obs: &Observation) -> Action {
        let HeuristicConfig { b_min, tau } = self.config;
        let b = obs.batch_size;
        let d = obs.chunk_loss;
        let relaxed = d <= 2 * tau && 2 * obs.peers >= b;
        if d == 0 || b < b_min || d <= tau || relaxed {
            Action::Add
        } else {
            Action::Stop
        }
    }
}

impl<F: Scalar> StoppingPolicy<F> for HeuristicPolicy {
    fn decide(&mut self, obs: &Observation) -> Action {
        self.decide_obs(obs)
    }

    fn observe(&mut self, _decisions: &[Decision], _reward: F) {}

    fn name(&self) -> &'static str {
        "heuristic"
    }
}
