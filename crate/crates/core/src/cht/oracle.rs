//! Brute-force reconstruction of the derived CHT state, used to check the
//! incremental bookkeeping.

use std::collections::{BTreeMap, BTreeSet};

use xxhash_rust::xxh64::xxh64;

use super::{Candidate, ChtState, ChunkKey, RequestId};
use crate::hashing::{compute_hashes_chained, ChunkSize, HashAlgorithm, HashVector, Token};

/// Derived state, either read from a live [`ChtState`] or rebuilt from
/// scratch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleView {
    pub ref_counts: BTreeMap<ChunkKey, u32>,
    pub miss: BTreeMap<RequestId, u32>,
    pub tip_level: u32,
    pub tip_hash: Option<u64>,
}

impl OracleView {
    pub fn working_set(&self) -> BTreeSet<ChunkKey> {
        self.ref_counts.keys().copied().collect()
    }

    /// Read the incrementally maintained fields.
    pub fn of_incremental(state: &ChtState) -> Self {
        Self {
            ref_counts: state.working_set().collect(),
            miss: state.waiting().map(|id| (id, state.miss(id).expect("waiting"))).collect(),
            tip_level: state.tip().level,
            tip_hash: state.tip().hash,
        }
    }

    /// Recompute from the stored hash vectors alone.
    pub fn from_state(state: &ChtState) -> Self {
        let active: Vec<&HashVector> = state.active().map(|id| state.hashes(id).expect("tracked")).collect();
        let waiting: Vec<(RequestId, &HashVector)> =
            state.waiting().map(|id| (id, state.hashes(id).expect("tracked"))).collect();
        Self::from_hashes(&active, &waiting)
    }

    /// Recompute from raw token sequences, hashing every prefix
    /// independently and locating the tip by direct token comparison.
    pub fn from_sequences(
        k: ChunkSize,
        algorithm: HashAlgorithm,
        active: &[&[Token]],
        waiting: &[(RequestId, &[Token])],
    ) -> Self {
        let hash = |t: &[Token]| prefix_hashes(t, k, algorithm);
        let active_h: Vec<HashVector> = active.iter().map(|t| hash(t)).collect();
        let waiting_h: Vec<(RequestId, HashVector)> = waiting.iter().map(|(id, t)| (*id, hash(t))).collect();
        let mut view = Self::from_hashes(
            &active_h.iter().collect::<Vec<_>>(),
            &waiting_h.iter().map(|(id, h)| (*id, h)).collect::<Vec<_>>(),
        );
        let level = token_tip(k.get(), active);
        view.tip_level = level as u32;
        view.tip_hash = (level > 0).then(|| active_h[0].level(level));
        view
    }

    fn from_hashes(active: &[&HashVector], waiting: &[(RequestId, &HashVector)]) -> Self {
        let mut ref_counts = BTreeMap::new();
        for hv in active {
            for (i, &h) in hv.as_slice().iter().enumerate() {
                *ref_counts.entry(ChunkKey::new(i + 1, h)).or_insert(0) += 1;
            }
        }
        let miss = waiting
            .iter()
            .map(|(id, hv)| {
                let m = hv
                    .as_slice()
                    .iter()
                    .enumerate()
                    .filter(|(i, &h)| !ref_counts.contains_key(&ChunkKey::new(i + 1, h)))
                    .count();
                (*id, m as u32)
            })
            .collect();
        let tip_level = hash_tip(active);
        let tip_hash = (tip_level > 0).then(|| active[0].level(tip_level));
        Self { ref_counts, miss, tip_level: tip_level as u32, tip_hash }
    }

    /// Expected `find_best` answer for this view.
    pub fn best_candidate(&self, state: &ChtState) -> Option<Candidate> {
        let (&id, &m) = self.miss.iter().min_by_key(|(id, m)| (**m, **id))?;
        let hv = state.hashes(id)?;
        let limit = (self.tip_level as usize).min(hv.len());
        let tip_after = (1..=limit)
            .rev()
            .find(|&l| self.ref_counts.contains_key(&ChunkKey::new(l, hv.level(l))))
            .unwrap_or(0);
        let peers = if tip_after == 0 {
            self.miss.len()
        } else {
            let h = hv.level(tip_after);
            self.miss.keys().filter(|w| state.hashes(**w).and_then(|x| x.get(tip_after)) == Some(h)).count()
        };
        Some(Candidate { request: id, miss: m, tip_before: self.tip_level, tip_after: tip_after as u32, peers })
    }
}

fn prefix_hashes(tokens: &[Token], k: ChunkSize, algorithm: HashAlgorithm) -> HashVector {
    match algorithm {
        HashAlgorithm::Chained => compute_hashes_chained(tokens, k),
        HashAlgorithm::Streaming => {
            let kk = k.get();
            let hashes = (1..=k.chunks_for(tokens.len()))
                .map(|l| {
                    let end = (l * kk).min(tokens.len());
                    let bytes: Vec<u8> = tokens[..end].iter().flat_map(|t| t.to_le_bytes()).collect();
                    xxh64(&bytes, 0)
                })
                .collect();
            HashVector::from_parts(hashes, k, tokens.len())
        }
    }
}

fn hash_tip(active: &[&HashVector]) -> usize {
    let Some(first) = active.first() else { return 0 };
    let shortest = active.iter().map(|h| h.len()).min().unwrap_or(0);
    (1..=shortest)
        .take_while(|&l| active.iter().all(|h| h.level(l) == first.level(l)))
        .last()
        .unwrap_or(0)
}

fn token_tip(k: usize, active: &[&[Token]]) -> usize {
    let Some(first) = active.first() else { return 0 };
    let shortest = active.iter().map(|t| t.len().div_ceil(k)).min().unwrap_or(0);
    let agree = |l: usize| {
        let end0 = (l * k).min(first.len());
        active.iter().all(|t| (l * k).min(t.len()) == end0 && t[..end0] == first[..end0])
    };
    (1..=shortest).take_while(|&l| agree(l)).last().unwrap_or(0)
}
