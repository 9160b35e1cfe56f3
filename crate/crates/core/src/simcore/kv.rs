use std::collections::BTreeSet;

use rustc_hash::{FxHashMap, FxHashSet};
use thiserror::Error;

use crate::cht::ChunkKey;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KvError {
    #[error("need {needed} KV tokens but only {available} can be freed")]
    Insufficient { needed: u64, available: u64 },
    #[error("release of chunk that is not referenced")]
    NotReferenced,
}

#[derive(Debug, Clone, Copy)]
struct Resident {
    tokens: u32,
    refs: u32,
    /// LRU tick while unreferenced.
    tick: u64,
}

/// Result of an admission.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Admission {
    /// Prompt tokens that had to be computed.
    pub new_tokens: u64,
    /// Of those, tokens whose chunk had been evicted before.
    pub recomputed_tokens: u64,
    pub evicted: Vec<ChunkKey>,
}

/// Chunk-granular KV memory with reference counts and LRU eviction of
/// unreferenced chunks. Private (decode) tokens are reserved per request.
#[derive(Debug, Clone, Default)]
pub struct KvStore {
    capacity: Option<u64>,
    used: u64,
    chunks: FxHashMap<ChunkKey, Resident>,
    lru: BTreeSet<(u64, ChunkKey)>,
    unreferenced_tokens: u64,
    evicted_once: FxHashSet<ChunkKey>,
    tick: u64,
    evictions: u64,
}

impl KvStore {
    /// `capacity` in tokens; `None` never evicts.
    pub fn new(capacity: Option<u64>) -> Self {
        Self { capacity, ..Self::default() }
    }

    pub fn used(&self) -> u64 {
        self.used
    }

    pub fn capacity(&self) -> Option<u64> {
        self.capacity
    }

    pub fn evictions(&self) -> u64 {
        self.evictions
    }

    pub fn is_resident(&self, key: ChunkKey) -> bool {
        self.chunks.contains_key(&key)
    }

    pub fn refs(&self, key: ChunkKey) -> u32 {
        self.chunks.get(&key).map_or(0, |r| r.refs)
    }

    fn needed(&self, chunks: &[(ChunkKey, u32)], private: u64) -> (u64, u64) {
        let mut missing = private;
        let mut pinned_free = 0;
        for (k, t) in chunks {
            match self.chunks.get(k) {
                None => missing += *t as u64,
                Some(r) if r.refs == 0 => pinned_free += r.tokens as u64,
                Some(_) => {}
            }
        }
        (missing, pinned_free)
    }

    /// Dry run of [`KvStore::admit`].
    pub fn can_admit(&self, chunks: &[(ChunkKey, u32)], private: u64) -> bool {
        self.check(chunks, private).is_ok()
    }

    fn check(&self, chunks: &[(ChunkKey, u32)], private: u64) -> Result<(), KvError> {
        let Some(cap) = self.capacity else { return Ok(()) };
        let (missing, own_unreferenced) = self.needed(chunks, private);
        let free = cap.saturating_sub(self.used);
        // The request's own cached chunks get pinned, so they cannot be freed.
        let available = free + self.unreferenced_tokens - own_unreferenced;
        if missing > available {
            return Err(KvError::Insufficient { needed: missing, available });
        }
        Ok(())
    }

    /// Pin `chunks` and reserve `private` tokens, evicting LRU unreferenced
    /// chunks as needed.
    pub fn admit(&mut self, chunks: &[(ChunkKey, u32)], private: u64) -> Result<Admission, KvError> {
        self.check(chunks, private)?;
        let mut out = Admission::default();
        for &(k, t) in chunks {
            if let Some(r) = self.chunks.get_mut(&k) {
                if r.refs == 0 {
                    self.lru.remove(&(r.tick, k));
                    self.unreferenced_tokens -= r.tokens as u64;
                }
                r.refs += 1;
            } else {
                out.new_tokens += t as u64;
                if self.evicted_once.contains(&k) {
                    out.recomputed_tokens += t as u64;
                }
            }
        }
        let needed = out.new_tokens + private;
        if let Some(cap) = self.capacity {
            while self.used + needed > cap {
                let (tick, k) = *self.lru.iter().next().expect("checked above");
                self.lru.remove(&(tick, k));
                let r = self.chunks.remove(&k).expect("lru entries are resident");
                self.used -= r.tokens as u64;
                self.unreferenced_tokens -= r.tokens as u64;
                self.evicted_once.insert(k);
                self.evictions += 1;
                out.evicted.push(k);
            }
        }
        for &(k, t) in chunks {
            self.chunks.entry(k).or_insert_with(|| {
                self.used += t as u64;
                Resident { tokens: t, refs: 1, tick: 0 }
            });
        }
        self.used += private;
        Ok(out)
    }

    /// Unpin `chunks` and free the private reservation. Released chunks stay
    /// cached until evicted.
    pub fn release(&mut self, chunks: &[(ChunkKey, u32)], private: u64) -> Result<(), KvError> {
        for &(k, _) in chunks {
            let r = self.chunks.get_mut(&k).ok_or(KvError::NotReferenced)?;
            if r.refs == 0 {
                return Err(KvError::NotReferenced);
            }
            r.refs -= 1;
            if r.refs == 0 {
                self.tick += 1;
                r.tick = self.tick;
                self.lru.insert((r.tick, k));
                self.unreferenced_tokens += r.tokens as u64;
            }
        }
        self.used -= private;
        Ok(())
    }
}
