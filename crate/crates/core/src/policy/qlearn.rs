use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{discretize, Action, Decision, DiscretizedState, Observation, PolicyError, StoppingPolicy};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
    /// Multiplicative decay applied at the end of every episode.
    pub epsilon_decay: f64,
    pub epsilon_min: f64,
    pub seed: u64,
}

impl Default for QConfig {
    fn default() -> Self {
        Self { alpha: 0.1, gamma: 0.9, epsilon: 1.0, epsilon_decay: 0.995, epsilon_min: 0.05, seed: 0 }
    }
}

impl QConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        let bad = |m: &str| Err(PolicyError::InvalidConfig(m.to_string()));
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha must be in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must be in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.epsilon_min) || !(self.epsilon_min..=1.0).contains(&self.epsilon) {
            return bad("need 0 <= epsilon_min <= epsilon <= 1");
        }
        if !(self.epsilon_decay > 0.0 && self.epsilon_decay <= 1.0) {
            return bad("epsilon_decay must be in (0, 1]");
        }
        Ok(())
    }
}

/// Tabular epsilon-greedy Q-learning.
#[derive(Debug, Clone)]
pub struct QPolicy<F> {
    pub(super) config: QConfig,
    pub(super) epsilon: f64,
    pub(super) q: BTreeMap<(DiscretizedState, Action), F>,
    rng: ChaCha8Rng,
    episodes: u64,
}

impl<F: Scalar> QPolicy<F> {
    pub fn new(config: QConfig) -> Result<Self, PolicyError> {
        config.validate()?;
        Ok(Self {
            config,
            epsilon: config.epsilon,
            q: BTreeMap::new(),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            episodes: 0,
        })
    }

    pub fn config(&self) -> &QConfig {
        &self.config
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Override the current exploration rate, e.g. for a greedy evaluation.
    pub fn set_epsilon(&mut self, epsilon: f64) {
        self.epsilon = epsilon.clamp(0.0, 1.0);
    }

    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    pub fn value(&self, state: DiscretizedState, action: Action) -> F {
        self.q.get(&(state, action)).copied().unwrap_or_else(F::zero)
    }

    pub fn set_value(&mut self, state: DiscretizedState, action: Action, value: F) {
        self.q.insert((state, action), value);
    }

    pub fn values(&self) -> impl Iterator<Item = (DiscretizedState, Action, F)> + '_ {
        self.q.iter().map(|((s, a), v)| (*s, *a, *v))
    }

    fn max_value(&self, state: DiscretizedState) -> F {
        self.value(state, Action::Add).max(self.value(state, Action::Stop))
    }

    /// Greedy action; ties go to Add.
    pub fn greedy(&self, state: DiscretizedState) -> Action {
        if self.value(state, Action::Add) >= self.value(state, Action::Stop) {
            Action::Add
        } else {
            Action::Stop
        }
    }

    pub fn decide_state(&mut self, state: DiscretizedState) -> Action {
        if self.epsilon > 0.0 && self.rng.gen::<f64>() < self.epsilon {
            if self.rng.gen::<bool>() {
                Action::Add
            } else {
                Action::Stop
            }
        } else {
            self.greedy(state)
        }
    }

    /// One Bellman backup; `next = None` marks a terminal transition.
    pub fn update(&mut self, state: DiscretizedState, action: Action, reward: F, next: Option<DiscretizedState>) {
        let alpha = F::of(self.config.alpha);
        let gamma = F::of(self.config.gamma);
        let future = next.map_or_else(F::zero, |s| self.max_value(s));
        let q = self.value(state, action);
        self.q.insert((state, action), q + alpha * (reward + gamma * future - q));
    }

    pub fn end_episode(&mut self) {
        self.episodes += 1;
        self.epsilon = (self.epsilon * self.config.epsilon_decay).max(self.config.epsilon_min);
    }
}

impl<F: Scalar> StoppingPolicy<F> for QPolicy<F> {
    fn decide(&mut self, obs: &Observation) -> Action {
        self.decide_state(discretize(obs))
    }

    /// Replays the episode in order; every transition earns `reward` and the
    /// last one is terminal.
    fn observe(&mut self, decisions: &[Decision], reward: F) {
        if decisions.is_empty() {
            return;
        }
        for (i, d) in decisions.iter().enumerate() {
            let next = decisions.get(i + 1).map(|n| n.state);
            self.update(d.state, d.action, reward, next);
        }
        self.end_episode();
    }

    fn name(&self) -> &'static str {
        "q"
    }
}
