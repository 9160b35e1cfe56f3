use std::sync::Arc;

use indexmap::IndexMap;
use rustc_hash::{FxBuildHasher, FxHashMap, FxHashSet};

use super::cost::BatchProfile;
use crate::cht::{ChunkKey, RequestId};

/// Prompt chunks of one request in level order, with token counts.
pub type Chain = Arc<[(ChunkKey, u32)]>;

#[derive(Debug, Clone)]
struct Member {
    chain: Chain,
    generated: u64,
}

/// Incrementally maintained [`BatchProfile`] of the active batch.
#[derive(Debug, Clone, Default)]
pub struct BatchTracker {
    refs: FxHashMap<ChunkKey, u32>,
    distinct_tokens: u64,
    generated: u64,
    members: IndexMap<RequestId, Member, FxBuildHasher>,
    groups: Option<usize>,
}

impl BatchTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Prompt tokens of `chain` not already held by the batch.
    pub fn missing_tokens(&self, chain: &[(ChunkKey, u32)]) -> u64 {
        chain.iter().filter(|(k, _)| !self.refs.contains_key(k)).map(|(_, t)| *t as u64).sum()
    }

    pub fn add(&mut self, id: RequestId, chain: Chain) {
        self.resume(id, chain, 0);
    }

    /// Re-add a request that already produced `generated` tokens.
    pub fn resume(&mut self, id: RequestId, chain: Chain, generated: u64) {
        for &(k, t) in chain.iter() {
            let r = self.refs.entry(k).or_insert(0);
            if *r == 0 {
                self.distinct_tokens += t as u64;
            }
            *r += 1;
        }
        self.generated += generated;
        self.members.insert(id, Member { chain, generated });
        self.groups = None;
    }

    pub fn remove(&mut self, id: RequestId) {
        let Some(m) = self.members.shift_remove(&id) else { return };
        for &(k, t) in m.chain.iter() {
            let r = self.refs.get_mut(&k).expect("member chunk");
            *r -= 1;
            if *r == 0 {
                self.refs.remove(&k);
                self.distinct_tokens -= t as u64;
            }
        }
        self.generated -= m.generated;
        self.groups = None;
    }

    /// Every member produced one token.
    pub fn advance(&mut self) {
        for m in self.members.values_mut() {
            m.generated += 1;
        }
        self.generated += self.members.len() as u64;
    }

    fn deepest_shared(&self, chain: &[(ChunkKey, u32)]) -> Option<ChunkKey> {
        // Counts are non-increasing along a chain, so bisect for the last
        // chunk held by at least two members.
        let n = chain.partition_point(|(k, _)| self.refs[k] >= 2);
        n.checked_sub(1).map(|i| chain[i].0)
    }

    pub fn prefix_groups(&mut self) -> usize {
        if let Some(g) = self.groups {
            return g;
        }
        let mut classes: FxHashSet<ChunkKey> = FxHashSet::default();
        let mut singles = 0;
        for m in self.members.values() {
            match self.deepest_shared(&m.chain) {
                Some(k) => {
                    classes.insert(k);
                }
                None => singles += 1,
            }
        }
        let g = classes.len() + singles;
        self.groups = Some(g);
        g
    }

    pub fn profile(&mut self) -> BatchProfile {
        BatchProfile {
            batch_size: self.members.len(),
            unique_tokens: self.distinct_tokens + self.generated,
            prefix_groups: self.prefix_groups(),
        }
    }
}
