//! Prefix-consistent chunk hashing of token sequences.
//!
//! A sequence of `T` tokens split into chunks of `K` tokens yields
//! `C = ceil(T / K)` digests. The digest at level `l` identifies the whole
//! prefix `tokens[..min(l * K, T)]`, so two sequences agree at level `l` iff
//! they share that prefix (up to hash collisions).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use xxhash_rust::xxh64::{xxh64, Xxh64};

pub type Token = u32;

pub const DEFAULT_CHUNK_SIZE: usize = 16;
pub const MAX_CHUNK_SIZE: usize = 4096;

/// Seed of the chained variant (`h_0`).
pub const CHAIN_SEED: u64 = 0;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HashError {
    #[error("chunk size {0} outside 1..={MAX_CHUNK_SIZE}")]
    InvalidChunkSize(usize),
}

/// Validated chunk size `K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct ChunkSize(usize);

impl ChunkSize {
    pub fn new(k: usize) -> Result<Self, HashError> {
        if (1..=MAX_CHUNK_SIZE).contains(&k) {
            Ok(Self(k))
        } else {
            Err(HashError::InvalidChunkSize(k))
        }
    }

    pub fn get(self) -> usize {
        self.0
    }

    /// Number of chunks for a sequence of `len` tokens.
    pub fn chunks_for(self, len: usize) -> usize {
        len.div_ceil(self.0)
    }
}

impl Default for ChunkSize {
    fn default() -> Self {
        Self(DEFAULT_CHUNK_SIZE)
    }
}

impl TryFrom<usize> for ChunkSize {
    type Error = HashError;
    fn try_from(k: usize) -> Result<Self, HashError> {
        Self::new(k)
    }
}

impl From<ChunkSize> for usize {
    fn from(k: ChunkSize) -> usize {
        k.0
    }
}

/// Which construction produced a [`HashVector`]. Digests of the two
/// constructions are not comparable with each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HashAlgorithm {
    /// One cumulative digest updated token by token.
    #[default]
    Streaming,
    /// Per-chunk digests chained together; chunks are hashed in parallel.
    Chained,
}

/// Incremental hasher fed one token at a time.
pub trait StreamingHasher {
    fn write_token(&mut self, token: Token);
    /// Digest of everything written so far. Does not reset the state.
    fn digest(&self) -> u64;
}

/// xxh64 over the little-endian bytes of each token.
#[derive(Clone)]
pub struct Xxh64Stream(Xxh64);

impl Default for Xxh64Stream {
    fn default() -> Self {
        Self(Xxh64::new(0))
    }
}

impl StreamingHasher for Xxh64Stream {
    fn write_token(&mut self, token: Token) {
        self.0.update(&token.to_le_bytes());
    }

    fn digest(&self) -> u64 {
        self.0.digest()
    }
}

/// Per-level digests of one token sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HashVector {
    hashes: Vec<u64>,
    chunk_size: ChunkSize,
    num_tokens: usize,
}

impl HashVector {
    pub fn from_parts(hashes: Vec<u64>, chunk_size: ChunkSize, num_tokens: usize) -> Self {
        assert_eq!(hashes.len(), chunk_size.chunks_for(num_tokens));
        Self { hashes, chunk_size, num_tokens }
    }

    /// Number of chunks `C`.
    pub fn len(&self) -> usize {
        self.hashes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hashes.is_empty()
    }

    /// Digest at 1-based `level`.
    pub fn level(&self, level: usize) -> u64 {
        self.hashes[level - 1]
    }

    pub fn get(&self, level: usize) -> Option<u64> {
        level.checked_sub(1).and_then(|i| self.hashes.get(i).copied())
    }

    pub fn last(&self) -> Option<u64> {
        self.hashes.last().copied()
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.hashes
    }

    pub fn chunk_size(&self) -> ChunkSize {
        self.chunk_size
    }

    pub fn num_tokens(&self) -> usize {
        self.num_tokens
    }

    /// Tokens covered by the chunk at `level`; only the last chunk may be short.
    pub fn chunk_tokens(&self, level: usize) -> usize {
        let k = self.chunk_size.get();
        let end = (level * k).min(self.num_tokens);
        end - (level - 1) * k
    }
}

/// Cumulative digests with the default xxh64 hasher.
pub fn compute_hashes(tokens: &[Token], k: ChunkSize) -> HashVector {
    compute_hashes_with(tokens, k, Xxh64Stream::default())
}

/// Cumulative digests with a caller-supplied hasher: one `write_token` per
/// token, one digest every `k` tokens and one at the end if the last chunk is
/// partial.
pub fn compute_hashes_with<H: StreamingHasher>(tokens: &[Token], k: ChunkSize, mut hasher: H) -> HashVector {
    let k_len = k.get();
    let mut hashes = Vec::with_capacity(k.chunks_for(tokens.len()));
    for (i, &t) in tokens.iter().enumerate() {
        hasher.write_token(t);
        if (i + 1) % k_len == 0 {
            hashes.push(hasher.digest());
        }
    }
    if !tokens.len().is_multiple_of(k_len) {
        hashes.push(hasher.digest());
    }
    HashVector { hashes, chunk_size: k, num_tokens: tokens.len() }
}

fn chunk_digest(chunk: &[Token]) -> u64 {
    let mut bytes = Vec::with_capacity(chunk.len() * 4);
    for t in chunk {
        bytes.extend_from_slice(&t.to_le_bytes());
    }
    xxh64(&bytes, 0)
}

fn chain(prev: u64, local: u64) -> u64 {
    let mut buf = [0u8; 16];
    buf[..8].copy_from_slice(&prev.to_le_bytes());
    buf[8..].copy_from_slice(&local.to_le_bytes());
    xxh64(&buf, 0)
}

fn chain_all(locals: &[u64]) -> Vec<u64> {
    let mut prev = CHAIN_SEED;
    locals
        .iter()
        .map(|&l| {
            prev = chain(prev, l);
            prev
        })
        .collect()
}

/// Chained digests computed sequentially. Reference for
/// [`compute_hashes_parallel`].
pub fn compute_hashes_chained(tokens: &[Token], k: ChunkSize) -> HashVector {
    let locals: Vec<u64> = tokens.chunks(k.get()).map(chunk_digest).collect();
    HashVector { hashes: chain_all(&locals), chunk_size: k, num_tokens: tokens.len() }
}

/// Chained digests with per-chunk hashing spread over the rayon pool.
/// Output is identical to [`compute_hashes_chained`] for any thread count.
pub fn compute_hashes_parallel(tokens: &[Token], k: ChunkSize) -> HashVector {
    let locals: Vec<u64> = tokens.par_chunks(k.get()).map(chunk_digest).collect();
    HashVector { hashes: chain_all(&locals), chunk_size: k, num_tokens: tokens.len() }
}

/// Dispatch on the configured construction.
pub fn hash_tokens(tokens: &[Token], k: ChunkSize, algorithm: HashAlgorithm) -> HashVector {
    match algorithm {
        HashAlgorithm::Streaming => compute_hashes(tokens, k),
        HashAlgorithm::Chained => compute_hashes_parallel(tokens, k),
    }
}
