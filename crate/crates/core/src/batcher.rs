//! Batch formation loop: FindBest, ask the policy, admit, repeat.

use serde::{Deserialize, Serialize};

use crate::cht::{ChtState, RequestId};
use crate::policy::{discretize, Action, Decision, Observation, StoppingPolicy};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Limits {
    pub max_batch_size: usize,
    /// Tokens processed per step: one per continuing request plus the
    /// uncached prompt tokens of new admissions.
    pub token_budget: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self { max_batch_size: 500, token_budget: 32768 }
    }
}

/// External admission check, e.g. KV memory.
pub trait AdmissionGate {
    fn fits(&mut self, id: RequestId) -> bool;
    /// Called once the request has been admitted.
    fn commit(&mut self, id: RequestId);
}

/// Gate that admits everything.
#[derive(Debug, Clone, Copy, Default)]
pub struct Unbounded;

impl AdmissionGate for Unbounded {
    fn fits(&mut self, _id: RequestId) -> bool {
        true
    }
    fn commit(&mut self, _id: RequestId) {}
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    #[default]
    QueueEmpty,
    BatchFull,
    TokenBudget,
    Gate,
    Policy,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchPlan {
    /// Requests admitted by this build, in admission order.
    pub members: Vec<RequestId>,
    /// Requests in the batch after the build, carried members included.
    pub batch_size: usize,
    pub shared_tip_level: u32,
    pub decisions: Vec<Decision>,
    pub stop_reason: StopReason,
    /// Prompt tokens charged against the step budget.
    pub budget_used: usize,
}

/// Top up the active batch from the waiting queue.
///
/// Active requests stay in the batch; only new admissions are decided. When
/// the batch is empty the first candidate is admitted without consulting the
/// policy, and it may exceed the token budget on its own.
pub fn build_batch<F, P>(cht: &mut ChtState, policy: &mut P, limits: &Limits, gate: &mut dyn AdmissionGate) -> BatchPlan
where
    F: Scalar,
    P: StoppingPolicy<F> + ?Sized,
{
    let mut plan = BatchPlan::default();
    let mut used = cht.active_len();
    plan.stop_reason = loop {
        if cht.active_len() >= limits.max_batch_size {
            break StopReason::BatchFull;
        }
        let Some(c) = cht.find_best() else { break StopReason::QueueEmpty };
        let empty = cht.active_len() == 0;
        let cost = cht.missing_tokens(c.request).expect("candidate is tracked");
        if !empty && used + cost > limits.token_budget {
            break StopReason::TokenBudget;
        }
        if !gate.fits(c.request) {
            break StopReason::Gate;
        }
        if !empty {
            let observation =
                Observation { batch_size: cht.active_len(), chunk_loss: c.chunk_loss(), peers: c.peers.max(1) };
            let action = policy.decide(&observation);
            plan.decisions.push(Decision { observation, state: discretize(&observation), action });
            if action == Action::Stop {
                break StopReason::Policy;
            }
        }
        cht.add_to_batch(c.request).expect("candidate is waiting");
        gate.commit(c.request);
        used += cost;
        plan.members.push(c.request);
    };
    plan.batch_size = cht.active_len();
    plan.shared_tip_level = cht.tip().level;
    plan.budget_used = used;
    plan
}

/// Feed the observed decode throughput back to the policy.
pub fn attribute_reward<F, P>(plan: &BatchPlan, reward: F, policy: &mut P)
where
    F: Scalar,
    P: StoppingPolicy<F> + ?Sized,
{
    policy.observe(&plan.decisions, reward);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hashing::{ChunkSize, Token};
    use crate::policy::{AlwaysAdd, BanditConfig, BanditPolicy, HeuristicPolicy};

    fn state(k: usize) -> ChtState {
        ChtState::with_chunk_size(ChunkSize::new(k).unwrap())
    }

    #[test]
    fn empty_queue_gives_empty_plan() {
        let mut cht = state(4);
        let plan = build_batch::<f64, _>(&mut cht, &mut AlwaysAdd, &Limits::default(), &mut Unbounded);
        assert!(plan.members.is_empty());
        assert_eq!(plan.stop_reason, StopReason::QueueEmpty);
    }

    #[test]
    fn same_prefix_all_admitted() {
        let mut cht = state(16);
        let prefix: Vec<Token> = (0..256).collect();
        for i in 0..100u32 {
            let mut t = prefix.clone();
            t.push(10_000 + i);
            cht.insert(RequestId(i as u64), &t).unwrap();
        }
        let mut h = HeuristicPolicy::default();
        let plan = build_batch::<f64, _>(&mut cht, &mut h, &Limits::default(), &mut Unbounded);
        assert_eq!(plan.members.len(), 100);
        // The second admission drops the lone request's suffix chunk.
        assert!(plan.decisions[1..].iter().all(|d| d.observation.chunk_loss == 0));
        assert_eq!(plan.shared_tip_level, 16);
    }

    #[test]
    fn max_batch_and_budget_enforced() {
        let mut cht = state(4);
        for i in 0..20u32 {
            cht.insert(RequestId(i as u64), &[i * 100, i * 100 + 1, i * 100 + 2, i * 100 + 3]).unwrap();
        }
        let limits = Limits { max_batch_size: 5, token_budget: 1000 };
        let plan = build_batch::<f64, _>(&mut cht, &mut AlwaysAdd, &limits, &mut Unbounded);
        assert_eq!((plan.members.len(), plan.stop_reason), (5, StopReason::BatchFull));
        let limits = Limits { max_batch_size: 100, token_budget: 5 + 8 };
        let plan = build_batch::<f64, _>(&mut cht, &mut AlwaysAdd, &limits, &mut Unbounded);
        assert_eq!((plan.members.len(), plan.stop_reason), (2, StopReason::TokenBudget));
        assert!(plan.budget_used <= 13);
    }

    #[test]
    fn oversized_first_request_admitted() {
        let mut cht = state(4);
        cht.insert(RequestId(0), &(0..100).collect::<Vec<_>>()).unwrap();
        cht.insert(RequestId(1), &(200..300).collect::<Vec<_>>()).unwrap();
        let plan = build_batch::<f64, _>(&mut cht, &mut AlwaysAdd, &Limits { max_batch_size: 10, token_budget: 10 }, &mut Unbounded);
        assert_eq!(plan.members, vec![RequestId(0)]);
        assert!(plan.decisions.is_empty());
    }

    #[test]
    fn bandit_single_decision_updates_one_cell() {
        let mut cht = state(2);
        cht.insert(RequestId(0), &[1, 2]).unwrap();
        cht.insert(RequestId(1), &[1, 3]).unwrap();
        let mut p = BanditPolicy::<f64>::new(BanditConfig::default()).unwrap();
        let plan = build_batch(&mut cht, &mut p, &Limits::default(), &mut Unbounded);
        assert_eq!(plan.decisions.len(), 1);
        attribute_reward(&plan, 5.0, &mut p);
        let cells: Vec<_> = p.arms().collect();
        assert_eq!(cells.len(), 1);
        assert_eq!((cells[0].2.visits, cells[0].2.total_reward), (1, 5.0));
    }
}
