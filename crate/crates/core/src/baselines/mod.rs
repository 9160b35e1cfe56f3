//! Reference schedulers: arrival order and radix-tree orderings.

mod radix;

use std::collections::VecDeque;

use crate::batcher::{AdmissionGate, BatchPlan, Limits, StopReason};
use crate::cht::RequestId;

pub use radix::RadixTree;

/// Work performed by a tree-based scheduler.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CostMeter {
    pub token_comparisons: u64,
    pub node_visits: u64,
    pub sort_ops: u64,
}

impl CostMeter {
    pub fn total(&self) -> u64 {
        self.token_comparisons + self.node_visits + self.sort_ops
    }
}

/// Admit requests strictly in `order` until the batch is full or the gate
/// refuses; a refused request blocks everything behind it.
pub fn admit_in_order(
    order: impl IntoIterator<Item = RequestId>,
    active: usize,
    limits: &Limits,
    gate: &mut dyn AdmissionGate,
) -> BatchPlan {
    let mut plan = BatchPlan::default();
    let mut size = active;
    plan.stop_reason = 'outer: {
        for id in order {
            if size >= limits.max_batch_size {
                break 'outer StopReason::BatchFull;
            }
            if !gate.fits(id) {
                break 'outer StopReason::Gate;
            }
            gate.commit(id);
            plan.members.push(id);
            size += 1;
        }
        StopReason::QueueEmpty
    };
    plan.batch_size = size;
    plan
}

/// First-come first-served queue.
#[derive(Debug, Clone, Default)]
pub struct FcfsQueue {
    queue: VecDeque<RequestId>,
}

impl FcfsQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, id: RequestId) {
        self.queue.push_back(id);
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn build(&mut self, active: usize, limits: &Limits, gate: &mut dyn AdmissionGate) -> BatchPlan {
        let plan = admit_in_order(self.queue.iter().copied(), active, limits, gate);
        self.queue.drain(..plan.members.len());
        plan
    }
}
