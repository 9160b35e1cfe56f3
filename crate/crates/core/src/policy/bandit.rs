use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{discretize, Action, Decision, DiscretizedState, Observation, PolicyError, StoppingPolicy};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BanditConfig {
    /// UCB exploration coefficient `c`.
    pub exploration: f64,
    /// Action tried first in a state where neither action has been visited.
    pub unvisited_first: Action,
}

impl Default for BanditConfig {
    fn default() -> Self {
        Self { exploration: 2.0, unvisited_first: Action::Add }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ArmStats<F> {
    /// Sum of rewards credited to this cell.
    pub total_reward: F,
    pub visits: u64,
}

/// Tabular UCB over discretized states.
#[derive(Debug, Clone)]
pub struct BanditPolicy<F> {
    pub(super) exploration: F,
    pub(super) unvisited_first: Action,
    pub(super) arms: BTreeMap<(DiscretizedState, Action), ArmStats<F>>,
    pub(super) decisions: u64,
}

impl<F: Scalar> BanditPolicy<F> {
    pub fn new(config: BanditConfig) -> Result<Self, PolicyError> {
        if !(config.exploration >= 0.0 && config.exploration.is_finite()) {
            return Err(PolicyError::InvalidConfig(format!("exploration {}", config.exploration)));
        }
        Ok(Self { exploration: F::of(config.exploration), unvisited_first: config.unvisited_first, arms: BTreeMap::new(), decisions: 0 })
    }

    pub fn exploration(&self) -> F {
        self.exploration
    }

    /// Global decision count `S`.
    pub fn decisions(&self) -> u64 {
        self.decisions
    }

    pub fn arm(&self, state: DiscretizedState, action: Action) -> ArmStats<F> {
        self.arms.get(&(state, action)).copied().unwrap_or(ArmStats { total_reward: F::zero(), visits: 0 })
    }

    pub fn arms(&self) -> impl Iterator<Item = (DiscretizedState, Action, ArmStats<F>)> + '_ {
        self.arms.iter().map(|((s, a), st)| (*s, *a, *st))
    }

    /// Overwrite one cell; the global count is kept equal to the sum of visits.
    pub fn set_arm(&mut self, state: DiscretizedState, action: Action, stats: ArmStats<F>) {
        let old = self.arm(state, action).visits;
        self.decisions = self.decisions - old + stats.visits;
        self.arms.insert((state, action), stats);
    }

    fn score(&self, stats: ArmStats<F>) -> F {
        let n = F::of_u64(stats.visits);
        let total = F::of_u64(self.decisions.max(1));
        stats.total_reward / n + self.exploration * (total.ln() / n).sqrt()
    }

    /// Unvisited actions first (`unvisited_first` before the other), then the
    /// larger UCB score; ties go to Add.
    pub fn decide_state(&self, state: DiscretizedState) -> Action {
        let add = self.arm(state, Action::Add);
        let stop = self.arm(state, Action::Stop);
        let (first, second) = match self.unvisited_first {
            Action::Add => (add, stop),
            Action::Stop => (stop, add),
        };
        if first.visits == 0 {
            return self.unvisited_first;
        }
        if second.visits == 0 {
            return self.unvisited_first.flip();
        }
        if self.score(add) >= self.score(stop) {
            Action::Add
        } else {
            Action::Stop
        }
    }

    pub fn update(&mut self, state: DiscretizedState, action: Action, reward: F) {
        let cell = self.arms.entry((state, action)).or_insert(ArmStats { total_reward: F::zero(), visits: 0 });
        cell.total_reward = cell.total_reward + reward;
        cell.visits += 1;
        self.decisions += 1;
    }
}

impl<F: Scalar> StoppingPolicy<F> for BanditPolicy<F> {
    fn decide(&mut self, obs: &Observation) -> Action {
        self.decide_state(discretize(obs))
    }

    fn observe(&mut self, decisions: &[Decision], reward: F) {
        for d in decisions {
            self.update(d.state, d.action, reward);
        }
    }

    fn name(&self) -> &'static str {
        "bandit"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const S: DiscretizedState = DiscretizedState { b: 1, delta: 2, w: 0 };

    fn fresh(c: f64) -> BanditPolicy<f64> {
        BanditPolicy::new(BanditConfig { exploration: c, ..Default::default() }).unwrap()
    }

    #[test]
    fn unvisited_first() {
        let mut p = fresh(2.0);
        assert_eq!(p.decide_state(S), Action::Add);
        p.update(S, Action::Add, 10.0);
        assert_eq!(p.decide_state(S), Action::Stop);

        let mut p = BanditPolicy::<f64>::new(BanditConfig { unvisited_first: Action::Stop, ..Default::default() }).unwrap();
        assert_eq!(p.decide_state(S), Action::Stop);
        p.update(S, Action::Stop, 10.0);
        assert_eq!(p.decide_state(S), Action::Add);
    }

    #[test]
    fn mean_comparison_without_exploration() {
        let mut p = fresh(0.0);
        p.set_arm(S, Action::Add, ArmStats { total_reward: 100.0, visits: 10 });
        p.set_arm(S, Action::Stop, ArmStats { total_reward: 50.0, visits: 10 });
        assert_eq!(p.decisions(), 20);
        assert_eq!(p.decide_state(S), Action::Add);
        p.set_arm(S, Action::Stop, ArmStats { total_reward: 101.0, visits: 10 });
        assert_eq!(p.decide_state(S), Action::Stop);
    }

    #[test]
    fn converges_on_better_arm() {
        let mut p = fresh(2.0);
        let mut adds = 0;
        for i in 0..10_000 {
            let a = p.decide_state(S);
            if i >= 9_000 && a == Action::Add {
                adds += 1;
            }
            p.update(S, a, if a == Action::Add { 2.0 } else { 1.0 });
        }
        assert!(adds > 950, "{adds}");
        assert!(p.arm(S, Action::Stop).visits > 0);
    }
}
