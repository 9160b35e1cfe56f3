use std::sync::Arc;

use rustc_hash::{FxHashMap, FxHashSet};

use super::batch::{BatchTracker, Chain};
use super::cost::{prefill_time, step_time, CostParams};
use super::kv::KvStore;
use super::metrics::{DecisionRecord, Metrics, RequestRecord, StepRecord};
use super::scheduler::Scheduler;
use super::SimError;
use crate::batcher::{AdmissionGate, Limits};
use crate::cht::{ChunkKey, RequestId};
use crate::hashing::{compute_hashes, ChunkSize};
use crate::policy::{reward_signal, ExecutedStep};
use crate::scalar::Scalar;
use crate::workload::Workload;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig<F> {
    pub params: CostParams<F>,
    pub limits: Limits,
    /// KV block size used for memory and sharing accounting.
    pub kv_chunk_size: ChunkSize,
    pub record_token_times: bool,
    /// Abort after this many steps.
    pub max_steps: Option<u64>,
}

impl<F: Scalar> Default for SimConfig<F> {
    fn default() -> Self {
        Self {
            params: CostParams::default(),
            limits: Limits::default(),
            kv_chunk_size: ChunkSize::new(16).expect("valid"),
            record_token_times: false,
            max_steps: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimOutput<F> {
    pub metrics: Metrics<F>,
    pub steps: Vec<StepRecord<F>>,
    pub requests: Vec<RequestRecord<F>>,
    pub decisions: Vec<DecisionRecord>,
}

struct Live<F> {
    chain: Chain,
    decode_len: u64,
    record: RequestRecord<F>,
}

struct Admitted {
    id: RequestId,
    new_tokens: u64,
    recomputed: u64,
    resumed: bool,
}

/// Memory and per-step token budget check shared by every scheduler.
struct SimGate<'a, F> {
    kv: &'a mut KvStore,
    batch: &'a mut BatchTracker,
    live: &'a FxHashMap<RequestId, Live<F>>,
    /// Prefilled requests left out of the previous step (rebuild mode).
    paused: &'a mut FxHashSet<RequestId>,
    budget: u64,
    used: u64,
    admitted: Vec<Admitted>,
}

impl<F: Scalar> AdmissionGate for SimGate<'_, F> {
    fn fits(&mut self, id: RequestId) -> bool {
        if self.paused.contains(&id) {
            return self.batch.is_empty() || self.used < self.budget;
        }
        let r = &self.live[&id];
        if !self.batch.is_empty() && self.used + self.batch.missing_tokens(&r.chain) > self.budget {
            return false;
        }
        self.kv.can_admit(&r.chain, r.decode_len)
    }

    fn commit(&mut self, id: RequestId) {
        let r = &self.live[&id];
        if self.paused.remove(&id) {
            self.used += 1;
            self.batch.resume(id, r.chain.clone(), r.record.tokens);
            self.admitted.push(Admitted { id, new_tokens: 0, recomputed: 0, resumed: true });
            return;
        }
        self.used += self.batch.missing_tokens(&r.chain);
        let a = self.kv.admit(&r.chain, r.decode_len).expect("checked by fits");
        self.batch.add(id, r.chain.clone());
        self.admitted.push(Admitted { id, new_tokens: a.new_tokens, recomputed: a.recomputed_tokens, resumed: false });
    }
}

fn chain_of(tokens: &[crate::hashing::Token], k: ChunkSize) -> Chain {
    let hv = compute_hashes(tokens, k);
    let v: Vec<(ChunkKey, u32)> =
        (1..=hv.len()).map(|l| (ChunkKey::new(l, hv.level(l)), hv.chunk_tokens(l) as u32)).collect();
    Arc::from(v)
}

/// Run `workload` to completion under `scheduler`.
pub fn run_simulation<F: Scalar>(
    workload: &Workload,
    scheduler: &mut dyn Scheduler<F>,
    config: &SimConfig<F>,
) -> Result<SimOutput<F>, SimError> {
    config.params.validate()?;
    if config.limits.max_batch_size == 0 {
        return Err(SimError::Invalid("max_batch_size must be >= 1".into()));
    }
    let params = &config.params;
    let mut kv = KvStore::new(params.kv_capacity_tokens());
    let mut batch = BatchTracker::new();
    let mut live: FxHashMap<RequestId, Live<F>> = FxHashMap::default();
    let mut active: Vec<RequestId> = Vec::new();
    let mut waiting = 0usize;
    let mut done: Vec<RequestRecord<F>> = Vec::with_capacity(workload.len());
    let mut steps: Vec<StepRecord<F>> = Vec::new();
    let mut decisions = Vec::new();
    let arrivals = &workload.requests;
    let mut next = 0usize;
    let mut now = arrivals.first().map_or(F::zero(), |r| F::of(r.arrival));
    let mut last_ops = scheduler.ops();
    let rebuild = scheduler.rebuilds();
    let mut paused: FxHashSet<RequestId> = FxHashSet::default();

    loop {
        while next < arrivals.len() && F::of(arrivals[next].arrival) <= now {
            let r = &arrivals[next];
            let tokens = workload.tokens(r);
            let record = RequestRecord {
                id: r.id,
                arrival: F::of(r.arrival),
                admitted: F::nan(),
                first_token: F::nan(),
                finish: F::nan(),
                tokens: 0,
                token_times: Vec::new(),
            };
            let prev = live.insert(r.id, Live { chain: chain_of(&tokens, config.kv_chunk_size), decode_len: r.decode_len as u64, record });
            if prev.is_some() {
                return Err(SimError::Invalid(format!("duplicate request id {}", r.id)));
            }
            scheduler.on_arrival(r, &tokens);
            waiting += 1;
            next += 1;
        }
        if active.is_empty() && waiting == 0 {
            if next >= arrivals.len() {
                break;
            }
            now = now.max(F::of(arrivals[next].arrival));
            continue;
        }

        if rebuild {
            for id in active.drain(..) {
                batch.remove(id);
                scheduler.requeue(id);
                paused.insert(id);
                waiting += 1;
            }
        }
        let mut gate = SimGate {
            kv: &mut kv,
            batch: &mut batch,
            live: &live,
            paused: &mut paused,
            budget: config.limits.token_budget as u64,
            used: active.len() as u64,
            admitted: Vec::new(),
        };
        let plan = scheduler.schedule(active.len(), &config.limits, &mut gate);
        let admitted = std::mem::take(&mut gate.admitted);
        debug_assert_eq!(admitted.len(), plan.members.len());
        let (mut new_tokens, mut recomputed) = (0u64, 0u64);
        for a in &admitted {
            new_tokens += a.new_tokens;
            recomputed += a.recomputed;
            if !a.resumed {
                live.get_mut(&a.id).expect("live").record.admitted = now;
            }
            active.push(a.id);
        }
        waiting -= admitted.len();
        let ops = scheduler.ops();
        let step_ops = ops - last_ops;
        last_ops = ops;

        if active.is_empty() {
            if next < arrivals.len() {
                now = now.max(F::of(arrivals[next].arrival));
                continue;
            }
            return Err(SimError::ZeroProgress {
                time: now.as_f64(),
                waiting,
                detail: format!("scheduler {} admitted nothing into an empty batch", scheduler.name()),
            });
        }

        let prefill = prefill_time(new_tokens - recomputed, recomputed, params);
        let sched = params.scheduler_op_cost * F::of_u64(step_ops);
        let profile = batch.profile();
        let decode = step_time(&profile, params)?;
        let start = now;
        now = now + prefill + sched + decode;
        batch.advance();

        let tokens = active.len() as u64;
        let reward = reward_signal(&ExecutedStep { tokens, duration: decode })?;
        scheduler.on_step(&plan, reward);
        let index = steps.len() as u64;
        decisions.extend(plan.decisions.iter().map(|d| DecisionRecord { step: index, decision: *d }));

        let mut completions = 0;
        let mut still = Vec::with_capacity(active.len());
        for id in active.drain(..) {
            let r = live.get_mut(&id).expect("live");
            r.record.tokens += 1;
            if r.record.tokens == 1 {
                r.record.first_token = now;
            }
            if config.record_token_times {
                r.record.token_times.push(now);
            }
            if r.record.tokens >= r.decode_len {
                let mut r = live.remove(&id).expect("live");
                r.record.finish = now;
                kv.release(&r.chain, r.decode_len)?;
                batch.remove(id);
                scheduler.on_finish(id);
                done.push(r.record);
                completions += 1;
            } else {
                still.push(id);
            }
        }
        active = still;

        steps.push(StepRecord {
            index,
            start,
            end: now,
            batch_size: profile.batch_size,
            prefix_groups: profile.prefix_groups,
            tokens,
            unique_kv_tokens: profile.unique_tokens,
            admitted: admitted.iter().filter(|a| !a.resumed).count(),
            prefill_tokens: new_tokens,
            prefill_duration: prefill,
            scheduler_duration: sched,
            decode_duration: decode,
            reward,
            completions,
            scheduler_ops: step_ops,
            evictions: kv.evictions(),
        });
        if config.max_steps.is_some_and(|m| steps.len() as u64 >= m) {
            return Err(SimError::ZeroProgress {
                time: now.as_f64(),
                waiting,
                detail: format!("step limit {} reached with {} active", steps.len(), active.len()),
            });
        }
    }

    done.sort_by_key(|r| r.id);
    let metrics = Metrics::from_records(&steps, &done, scheduler.ops(), kv.evictions());
    Ok(SimOutput { metrics, steps, requests: done, decisions })
}
