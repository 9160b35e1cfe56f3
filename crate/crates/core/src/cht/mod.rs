//! Chunked hash tree: incremental prefix-sharing state over waiting and
//! active requests.

mod heap;
pub mod oracle;

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::time::{Duration, Instant};

use indexmap::IndexSet;
use rustc_hash::{FxBuildHasher, FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashing::{hash_tokens, ChunkSize, HashAlgorithm, HashVector, Token};

pub use heap::CountingMinHeap;

/// Opaque request identifier. Ordering is used for deterministic tie-breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RequestId(pub u64);

impl fmt::Display for RequestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A `(level, digest)` pair; one node of the implicit tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChunkKey {
    pub level: u32,
    pub hash: u64,
}

impl ChunkKey {
    pub fn new(level: usize, hash: u64) -> Self {
        Self { level: level as u32, hash }
    }
}

/// Deepest prefix shared by every active request. Level 0 means no sharing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Tip {
    pub level: u32,
    pub hash: Option<u64>,
}

impl Tip {
    pub const EMPTY: Tip = Tip { level: 0, hash: None };
}

/// Best waiting candidate and the effect admitting it would have on the tip.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Candidate {
    pub request: RequestId,
    /// Chunks of the candidate absent from the working set.
    pub miss: u32,
    pub tip_before: u32,
    pub tip_after: u32,
    /// Waiting requests (candidate included) that agree with the candidate
    /// at `tip_after`.
    pub peers: usize,
}

impl Candidate {
    /// Shared-prefix chunks lost by admitting this candidate.
    pub fn chunk_loss(&self) -> u32 {
        self.tip_before - self.tip_after
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChtError {
    #[error("request {0} is already tracked")]
    DuplicateRequest(RequestId),
    #[error("request {0} is not waiting")]
    NotWaiting(RequestId),
    #[error("request {0} is not active")]
    NotActive(RequestId),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChtConfig {
    pub chunk_size: ChunkSize,
    pub hash_algorithm: HashAlgorithm,
    /// Expected number of live requests; used to presize maps.
    pub capacity_hint: usize,
    /// Record wall-clock time per operation.
    pub profile: bool,
}

impl Default for ChtConfig {
    fn default() -> Self {
        Self { chunk_size: ChunkSize::default(), hash_algorithm: HashAlgorithm::Streaming, capacity_hint: 1024, profile: false }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpStat {
    pub calls: u64,
    /// Counted primitive operations: map probes, heap comparisons, level
    /// visits and hashed tokens.
    pub ops: u64,
    pub wall: Duration,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounters {
    pub insert: OpStat,
    pub find_best: OpStat,
    pub add_to_batch: OpStat,
    pub finish: OpStat,
}

impl OpCounters {
    pub fn total_ops(&self) -> u64 {
        self.insert.ops + self.find_best.ops + self.add_to_batch.ops + self.finish.ops
    }
}

#[derive(Clone, Copy)]
enum Op {
    Insert,
    FindBest,
    Add,
    Finish,
}

type FxIndexSet<T> = IndexSet<T, FxBuildHasher>;

/// Incremental prefix-sharing state.
#[derive(Debug, Clone)]
pub struct ChtState {
    config: ChtConfig,
    request_hashes: FxHashMap<RequestId, HashVector>,
    /// Waiting requests indexed by each of their chunks.
    waiting_index: FxHashMap<ChunkKey, FxHashSet<RequestId>>,
    /// Active requests covering each chunk; keys are exactly the working set.
    ref_counts: FxHashMap<ChunkKey, u32>,
    working_tokens: usize,
    miss: FxHashMap<RequestId, u32>,
    heap: CountingMinHeap<(u32, RequestId)>,
    tip: Tip,
    active: FxIndexSet<RequestId>,
    waiting: FxIndexSet<RequestId>,
    /// Multiset of active request lengths in chunks.
    active_lengths: BTreeMap<u32, u32>,
    cached: Option<Candidate>,
    counters: OpCounters,
    ops: u64,
    heap_seen: u64,
}

impl ChtState {
    pub fn new(config: ChtConfig) -> Self {
        let n = config.capacity_hint;
        Self {
            config,
            request_hashes: FxHashMap::with_capacity_and_hasher(n, Default::default()),
            waiting_index: FxHashMap::default(),
            ref_counts: FxHashMap::default(),
            working_tokens: 0,
            miss: FxHashMap::with_capacity_and_hasher(n, Default::default()),
            heap: CountingMinHeap::with_capacity(n),
            tip: Tip::EMPTY,
            active: FxIndexSet::default(),
            waiting: FxIndexSet::with_capacity_and_hasher(n, Default::default()),
            active_lengths: BTreeMap::new(),
            cached: None,
            counters: OpCounters::default(),
            ops: 0,
            heap_seen: 0,
        }
    }

    pub fn with_chunk_size(k: ChunkSize) -> Self {
        Self::new(ChtConfig { chunk_size: k, ..ChtConfig::default() })
    }

    pub fn config(&self) -> &ChtConfig {
        &self.config
    }

    pub fn chunk_size(&self) -> ChunkSize {
        self.config.chunk_size
    }

    /// Hash `tokens` and register `id` as waiting.
    pub fn insert(&mut self, id: RequestId, tokens: &[Token]) -> Result<(), ChtError> {
        if self.request_hashes.contains_key(&id) {
            return Err(ChtError::DuplicateRequest(id));
        }
        let start = self.start();
        self.ops += tokens.len() as u64;
        let hv = hash_tokens(tokens, self.config.chunk_size, self.config.hash_algorithm);
        self.insert_hashed(id, hv);
        self.finish_op(Op::Insert, start);
        Ok(())
    }

    /// Register an already hashed request. The vector must use this state's
    /// chunk size.
    pub fn insert_hashes(&mut self, id: RequestId, hashes: HashVector) -> Result<(), ChtError> {
        assert_eq!(hashes.chunk_size(), self.config.chunk_size, "chunk size mismatch");
        if self.request_hashes.contains_key(&id) {
            return Err(ChtError::DuplicateRequest(id));
        }
        let start = self.start();
        self.insert_hashed(id, hashes);
        self.finish_op(Op::Insert, start);
        Ok(())
    }

    fn insert_hashed(&mut self, id: RequestId, hv: HashVector) {
        let mut m = 0u32;
        for (i, &h) in hv.as_slice().iter().enumerate() {
            let key = ChunkKey::new(i + 1, h);
            self.ops += 2;
            self.waiting_index.entry(key).or_default().insert(id);
            if !self.ref_counts.contains_key(&key) {
                m += 1;
            }
        }
        self.request_hashes.insert(id, hv);
        self.miss.insert(id, m);
        self.waiting.insert(id);
        self.push_heap(m, id);
        self.cached = None;
    }

    /// Waiting request with the fewest chunks outside the working set; ties
    /// go to the smallest id. Repeated calls without an intervening mutation
    /// return the cached answer.
    pub fn find_best(&mut self) -> Option<Candidate> {
        if let Some(c) = self.cached {
            return Some(c);
        }
        if self.waiting.is_empty() {
            return None;
        }
        let start = self.start();
        let (m, id) = loop {
            let top = self.heap.peek().expect("every waiting request has a heap entry");
            self.ops += 1;
            if self.miss.get(&top.1) == Some(&top.0) {
                break top;
            }
            self.heap.pop();
        };
        let hv = &self.request_hashes[&id];
        let tip_before = self.tip.level;
        let limit = tip_before.min(hv.len() as u32);
        // Agreement with the tip path is monotone in the level, so the
        // deepest matching level can be found by bisection.
        let (mut lo, mut hi) = (0u32, limit);
        while lo < hi {
            let mid = lo + (hi - lo).div_ceil(2);
            self.ops += 1;
            if self.ref_counts.contains_key(&ChunkKey::new(mid as usize, hv.level(mid as usize))) {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        let tip_after = lo;
        self.ops += 1;
        let peers = if tip_after == 0 {
            self.waiting.len()
        } else {
            let key = ChunkKey::new(tip_after as usize, hv.level(tip_after as usize));
            self.waiting_index.get(&key).map_or(0, |s| s.len())
        };
        let c = Candidate { request: id, miss: m, tip_before, tip_after, peers };
        self.cached = Some(c);
        self.finish_op(Op::FindBest, start);
        Some(c)
    }

    /// Move `id` from waiting to active.
    pub fn add_to_batch(&mut self, id: RequestId) -> Result<(), ChtError> {
        if !self.waiting.contains(&id) {
            return Err(ChtError::NotWaiting(id));
        }
        let start = self.start();
        self.waiting.swap_remove(&id);
        self.miss.remove(&id);
        let hv = self.request_hashes.remove(&id).expect("tracked");
        let c = hv.len();
        for level in 1..=c {
            let key = ChunkKey::new(level, hv.level(level));
            self.ops += 1;
            if let Some(set) = self.waiting_index.get_mut(&key) {
                set.remove(&id);
                if set.is_empty() {
                    self.waiting_index.remove(&key);
                }
            }
        }
        let first = self.active.is_empty();
        self.active.insert(id);
        *self.active_lengths.entry(c as u32).or_insert(0) += 1;

        let limit = self.tip.level.min(c as u32) as usize;
        let mut new_tip = Tip::EMPTY;
        for level in (1..=c).rev() {
            let key = ChunkKey::new(level, hv.level(level));
            self.ops += 1;
            let prior = *self.ref_counts.get(&key).unwrap_or(&0);
            if prior == 0 {
                self.enter_working_set(key, hv.chunk_tokens(level));
            }
            self.ref_counts.insert(key, prior + 1);
            // The tip is judged against the working set as it stood before
            // this request's own chunks were added.
            if new_tip.level == 0 && level <= limit && prior > 0 {
                new_tip = Tip { level: level as u32, hash: Some(key.hash) };
            }
        }
        self.tip = if first { Tip { level: c as u32, hash: hv.last() } } else { new_tip };
        self.request_hashes.insert(id, hv);
        self.cached = None;
        self.compact_heap();
        self.finish_op(Op::Add, start);
        Ok(())
    }

    /// Release an active request and forget it.
    pub fn finish(&mut self, id: RequestId) -> Result<(), ChtError> {
        if !self.active.contains(&id) {
            return Err(ChtError::NotActive(id));
        }
        let start = self.start();
        self.active.swap_remove(&id);
        let hv = self.request_hashes.remove(&id).expect("tracked");
        let c = hv.len() as u32;
        if let Some(n) = self.active_lengths.get_mut(&c) {
            *n -= 1;
            if *n == 0 {
                self.active_lengths.remove(&c);
            }
        }
        for level in 1..=hv.len() {
            let key = ChunkKey::new(level, hv.level(level));
            self.ops += 1;
            let r = self.ref_counts.get_mut(&key).expect("active chunk has a ref count");
            *r -= 1;
            if *r == 0 {
                self.ref_counts.remove(&key);
                self.leave_working_set(key, hv.chunk_tokens(level));
            }
        }
        match self.active.len() {
            0 => self.tip = Tip::EMPTY,
            1 => {
                let q = self.active[0];
                let qh = &self.request_hashes[&q];
                self.tip = Tip { level: qh.len() as u32, hash: qh.last() };
            }
            n => {
                let shortest = *self.active_lengths.keys().next().expect("non-empty");
                let q = self.active[0];
                let qh = &self.request_hashes[&q];
                while self.tip.level < shortest {
                    let level = self.tip.level as usize + 1;
                    let key = ChunkKey::new(level, qh.level(level));
                    self.ops += 1;
                    if self.ref_counts.get(&key) == Some(&(n as u32)) {
                        self.tip = Tip { level: level as u32, hash: Some(key.hash) };
                    } else {
                        break;
                    }
                }
            }
        }
        self.cached = None;
        self.compact_heap();
        self.finish_op(Op::Finish, start);
        Ok(())
    }

    fn enter_working_set(&mut self, key: ChunkKey, tokens: usize) {
        self.working_tokens += tokens;
        if let Some(sharers) = self.waiting_index.get(&key) {
            for &w in sharers {
                let m = self.miss.get_mut(&w).expect("waiting has a miss count");
                *m -= 1;
                let m = *m;
                self.ops += 1;
                self.heap.push((m, w));
            }
        }
    }

    fn leave_working_set(&mut self, key: ChunkKey, tokens: usize) {
        self.working_tokens -= tokens;
        if let Some(sharers) = self.waiting_index.get(&key) {
            for &w in sharers {
                let m = self.miss.get_mut(&w).expect("waiting has a miss count");
                *m += 1;
                let m = *m;
                self.ops += 1;
                self.heap.push((m, w));
            }
        }
    }

    fn push_heap(&mut self, m: u32, id: RequestId) {
        self.heap.push((m, id));
        self.compact_heap();
    }

    fn compact_heap(&mut self) {
        if self.heap.len() > 4 * self.waiting.len() + 64 {
            let miss = &self.miss;
            self.ops += self.waiting.len() as u64;
            self.heap.rebuild(self.waiting.iter().map(|id| (miss[id], *id)));
        }
    }

    fn start(&self) -> Option<Instant> {
        self.config.profile.then(Instant::now)
    }

    fn finish_op(&mut self, op: Op, start: Option<Instant>) {
        let cmp = self.heap.comparisons();
        let ops = self.ops + (cmp - self.heap_seen);
        self.heap_seen = cmp;
        let stat = match op {
            Op::Insert => &mut self.counters.insert,
            Op::FindBest => &mut self.counters.find_best,
            Op::Add => &mut self.counters.add_to_batch,
            Op::Finish => &mut self.counters.finish,
        };
        stat.calls += 1;
        stat.ops += ops;
        if let Some(t) = start {
            stat.wall += t.elapsed();
        }
        self.ops = 0;
    }
}

impl ChtState {
    pub fn tip(&self) -> Tip {
        self.tip
    }

    pub fn active_len(&self) -> usize {
        self.active.len()
    }

    pub fn waiting_len(&self) -> usize {
        self.waiting.len()
    }

    pub fn is_active(&self, id: RequestId) -> bool {
        self.active.contains(&id)
    }

    pub fn is_waiting(&self, id: RequestId) -> bool {
        self.waiting.contains(&id)
    }

    pub fn active(&self) -> impl Iterator<Item = RequestId> + '_ {
        self.active.iter().copied()
    }

    pub fn waiting(&self) -> impl Iterator<Item = RequestId> + '_ {
        self.waiting.iter().copied()
    }

    pub fn hashes(&self, id: RequestId) -> Option<&HashVector> {
        self.request_hashes.get(&id)
    }

    /// Current miss count of a waiting request.
    pub fn miss(&self, id: RequestId) -> Option<u32> {
        self.miss.get(&id).copied()
    }

    pub fn ref_count(&self, key: ChunkKey) -> u32 {
        self.ref_counts.get(&key).copied().unwrap_or(0)
    }

    pub fn in_working_set(&self, key: ChunkKey) -> bool {
        self.ref_counts.contains_key(&key)
    }

    pub fn working_set_len(&self) -> usize {
        self.ref_counts.len()
    }

    /// Tokens covered by the working set.
    pub fn working_set_tokens(&self) -> usize {
        self.working_tokens
    }

    pub fn working_set(&self) -> impl Iterator<Item = (ChunkKey, u32)> + '_ {
        self.ref_counts.iter().map(|(k, v)| (*k, *v))
    }

    /// Tokens of a tracked request not covered by the working set.
    pub fn missing_tokens(&self, id: RequestId) -> Option<usize> {
        let hv = self.request_hashes.get(&id)?;
        Some(
            (1..=hv.len())
                .filter(|&l| !self.ref_counts.contains_key(&ChunkKey::new(l, hv.level(l))))
                .map(|l| hv.chunk_tokens(l))
                .sum(),
        )
    }

    pub fn heap_len(&self) -> usize {
        self.heap.len()
    }

    pub fn counters(&self) -> &OpCounters {
        &self.counters
    }

    pub fn reset_counters(&mut self) {
        self.counters = OpCounters::default();
    }

    /// Deterministic text dump for debugging and golden tests.
    pub fn snapshot(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "tip {} {}", self.tip.level, self.tip.hash.map_or("-".to_string(), |h| format!("{h:016x}")));
        let mut active: Vec<_> = self.active.iter().copied().collect();
        active.sort();
        let _ = writeln!(out, "active {}", join(&active));
        let mut waiting: Vec<_> = self.waiting.iter().copied().collect();
        waiting.sort();
        for id in waiting {
            let _ = writeln!(out, "waiting {} miss {}", id, self.miss[&id]);
        }
        let mut ws: Vec<_> = self.ref_counts.iter().collect();
        ws.sort();
        for (k, r) in ws {
            let _ = writeln!(out, "chunk {} {:016x} ref {}", k.level, k.hash, r);
        }
        out
    }
}

fn join(ids: &[RequestId]) -> String {
    ids.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ")
}
