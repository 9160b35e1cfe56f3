use std::marker::PhantomData;

use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use crate::baselines::{admit_in_order, FcfsQueue, RadixTree};
use crate::batcher::{attribute_reward, build_batch, AdmissionGate, BatchPlan, Limits};
use crate::cht::{ChtState, RequestId};
use crate::hashing::Token;
use crate::policy::StoppingPolicy;
use crate::scalar::Scalar;
use crate::workload::{RequestSpec, Workload};

/// Scheduler interface driven by the simulator.
pub trait Scheduler<F: Scalar> {
    fn name(&self) -> &str;
    fn on_arrival(&mut self, request: &RequestSpec, tokens: &[Token]);
    /// Top up the batch; `active` requests are already running.
    fn schedule(&mut self, active: usize, limits: &Limits, gate: &mut dyn AdmissionGate) -> BatchPlan;
    /// Decode throughput of the step that followed `plan`.
    fn on_step(&mut self, plan: &BatchPlan, reward: F);
    fn on_finish(&mut self, id: RequestId);
    /// Cumulative counted scheduler operations.
    fn ops(&self) -> u64;
    /// Whether the batch is rebuilt from scratch before every step.
    fn rebuilds(&self) -> bool {
        false
    }
    /// Return a running request to the waiting pool; only called when
    /// [`Scheduler::rebuilds`] is true.
    fn requeue(&mut self, _id: RequestId) {}
}

/// Chunked-hash-tree scheduler with a stopping policy.
pub struct FeatherScheduler<F, P> {
    pub cht: ChtState,
    pub policy: P,
    rebuild: bool,
    _scalar: PhantomData<F>,
}

impl<F: Scalar, P: StoppingPolicy<F>> FeatherScheduler<F, P> {
    pub fn new(cht: ChtState, policy: P) -> Self {
        Self { cht, policy, rebuild: false, _scalar: PhantomData }
    }

    /// Rebuild the batch every step instead of topping it up. Requests left
    /// out of a step keep their KV and wait for a later step.
    pub fn with_rebuild(mut self, rebuild: bool) -> Self {
        self.rebuild = rebuild;
        self
    }
}

impl<F: Scalar, P: StoppingPolicy<F>> Scheduler<F> for FeatherScheduler<F, P> {
    fn name(&self) -> &str {
        self.policy.name()
    }

    fn on_arrival(&mut self, request: &RequestSpec, tokens: &[Token]) {
        self.cht.insert(request.id, tokens).expect("request ids are unique");
    }

    fn schedule(&mut self, _active: usize, limits: &Limits, gate: &mut dyn AdmissionGate) -> BatchPlan {
        if self.rebuild {
            // Resumed requests skip prefill, which the CHT cannot see; the
            // gate charges the budget instead.
            let limits = Limits { token_budget: usize::MAX, ..*limits };
            return build_batch(&mut self.cht, &mut self.policy, &limits, gate);
        }
        build_batch(&mut self.cht, &mut self.policy, limits, gate)
    }

    fn on_step(&mut self, plan: &BatchPlan, reward: F) {
        attribute_reward(plan, reward, &mut self.policy);
    }

    fn on_finish(&mut self, id: RequestId) {
        self.cht.finish(id).expect("finished request was active");
    }

    fn ops(&self) -> u64 {
        self.cht.counters().total_ops()
    }

    fn rebuilds(&self) -> bool {
        self.rebuild
    }

    fn requeue(&mut self, id: RequestId) {
        let hashes = self.cht.hashes(id).expect("requeued request is tracked").clone();
        self.cht.finish(id).expect("requeued request was active");
        self.cht.insert_hashes(id, hashes).expect("request id was just freed");
    }
}

#[derive(Debug, Default)]
pub struct FcfsScheduler {
    queue: FcfsQueue,
}

impl<F: Scalar> Scheduler<F> for FcfsScheduler {
    fn name(&self) -> &str {
        "fcfs"
    }

    fn on_arrival(&mut self, request: &RequestSpec, _tokens: &[Token]) {
        self.queue.push(request.id);
    }

    fn schedule(&mut self, active: usize, limits: &Limits, gate: &mut dyn AdmissionGate) -> BatchPlan {
        self.queue.build(active, limits, gate)
    }

    fn on_step(&mut self, _plan: &BatchPlan, _reward: F) {}

    fn on_finish(&mut self, _id: RequestId) {}

    fn ops(&self) -> u64 {
        0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeOrder {
    LongestPrefixMatch,
    WeightedDfs,
}

/// Radix-tree baselines that re-rank the whole queue every round.
#[derive(Debug)]
pub struct RadixScheduler {
    tree: RadixTree,
    waiting: Vec<RequestId>,
    order: TreeOrder,
}

impl RadixScheduler {
    pub fn new(order: TreeOrder) -> Self {
        Self { tree: RadixTree::new(), waiting: Vec::new(), order }
    }
}

impl<F: Scalar> Scheduler<F> for RadixScheduler {
    fn name(&self) -> &str {
        match self.order {
            TreeOrder::LongestPrefixMatch => "lpm",
            TreeOrder::WeightedDfs => "dfsw",
        }
    }

    fn on_arrival(&mut self, request: &RequestSpec, tokens: &[Token]) {
        self.tree.insert(request.id, tokens);
        self.waiting.push(request.id);
    }

    fn schedule(&mut self, active: usize, limits: &Limits, gate: &mut dyn AdmissionGate) -> BatchPlan {
        if self.waiting.is_empty() || active >= limits.max_batch_size {
            return admit_in_order(std::iter::empty(), active, limits, gate);
        }
        let order: Vec<RequestId> = match self.order {
            TreeOrder::LongestPrefixMatch => self.tree.lpm_order(&self.waiting).into_iter().map(|(id, _)| id).collect(),
            TreeOrder::WeightedDfs => self.tree.dfsw_order(),
        };
        let plan = admit_in_order(order, active, limits, gate);
        let admitted: FxHashSet<RequestId> = plan.members.iter().copied().collect();
        for &id in &plan.members {
            self.tree.mark_admitted(id);
        }
        self.waiting.retain(|id| !admitted.contains(id));
        plan
    }

    fn on_step(&mut self, _plan: &BatchPlan, _reward: F) {}

    fn on_finish(&mut self, _id: RequestId) {}

    fn ops(&self) -> u64 {
        self.tree.meter.total()
    }
}

/// How [`ForcedBatchScheduler`] partitions a workload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcedPartition {
    pub batch_size: usize,
    /// Keep each batch inside one group label.
    pub homogeneous: bool,
}

/// Runs fixed batches one after another, each to completion.
#[derive(Debug)]
pub struct ForcedBatchScheduler {
    batches: Vec<Vec<RequestId>>,
    current: usize,
    cursor: usize,
    arrived: FxHashSet<RequestId>,
    running: usize,
}

impl ForcedBatchScheduler {
    pub fn new(workload: &Workload, partition: ForcedPartition) -> Self {
        let mut reqs: Vec<&RequestSpec> = workload.requests.iter().collect();
        reqs.sort_by_key(|r| r.id);
        let mut batches = Vec::new();
        if partition.homogeneous {
            let mut groups: std::collections::BTreeMap<Option<u64>, Vec<RequestId>> = Default::default();
            for r in reqs {
                groups.entry(r.group()).or_default().push(r.id);
            }
            for ids in groups.into_values() {
                batches.extend(ids.chunks(partition.batch_size.max(1)).map(|c| c.to_vec()));
            }
        } else {
            let ids: Vec<RequestId> = reqs.iter().map(|r| r.id).collect();
            batches.extend(ids.chunks(partition.batch_size.max(1)).map(|c| c.to_vec()));
        }
        Self { batches, current: 0, cursor: 0, arrived: FxHashSet::default(), running: 0 }
    }

    pub fn batches(&self) -> &[Vec<RequestId>] {
        &self.batches
    }
}

impl<F: Scalar> Scheduler<F> for ForcedBatchScheduler {
    fn name(&self) -> &str {
        "forced"
    }

    fn on_arrival(&mut self, request: &RequestSpec, _tokens: &[Token]) {
        self.arrived.insert(request.id);
    }

    fn schedule(&mut self, active: usize, limits: &Limits, gate: &mut dyn AdmissionGate) -> BatchPlan {
        let Some(batch) = self.batches.get(self.current) else {
            return admit_in_order(std::iter::empty(), active, limits, gate);
        };
        if self.cursor == 0 && (active > 0 || !batch.iter().all(|id| self.arrived.contains(id))) {
            return admit_in_order(std::iter::empty(), active, limits, gate);
        }
        let unbounded = Limits { max_batch_size: usize::MAX, ..*limits };
        let plan = admit_in_order(batch[self.cursor..].iter().copied(), active, &unbounded, gate);
        self.cursor += plan.members.len();
        self.running += plan.members.len();
        if self.cursor == batch.len() {
            self.current += 1;
            self.cursor = 0;
        }
        plan
    }

    fn on_step(&mut self, _plan: &BatchPlan, _reward: F) {}

    fn on_finish(&mut self, _id: RequestId) {
        self.running -= 1;
    }

    fn ops(&self) -> u64 {
        0
    }
}
