//! Synthetic request streams with controlled prefix-sharing structure.

mod trace;

use rand::{Rng, SeedableRng};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cht::RequestId;
use crate::hashing::Token;

pub use trace::{ingest_trace, read_trace, write_trace, TRACE_HEADER};

/// Ordinary tokens are drawn from `0..VOCAB`.
pub const VOCAB: Token = 100_000;
/// First token of every segment, offset by the segment id, so sibling
/// segments diverge at their first token.
pub const SEGMENT_MARKER: Token = 1_000_000;
/// First token of every unique suffix, offset by the request id.
pub const SUFFIX_MARKER: Token = 2_000_000;

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("invalid workload: {0}")]
    Invalid(String),
    #[error("trace line {line}: {msg}")]
    Trace { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A run of tokens shared by every request that lists it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Segment {
    pub id: u64,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Prefix {
    Segments(Vec<Segment>),
    Tokens(Vec<Token>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RequestSpec {
    pub id: RequestId,
    /// Seconds since the start of the run.
    pub arrival: f64,
    pub prefix: Prefix,
    /// Length of the request's unique tail.
    pub suffix_len: usize,
    pub decode_len: usize,
}

impl RequestSpec {
    /// Group label: the last prefix segment, or `None` without segments.
    pub fn group(&self) -> Option<u64> {
        match &self.prefix {
            Prefix::Segments(s) => s.last().map(|s| s.id),
            Prefix::Tokens(_) => None,
        }
    }

    pub fn prefix_len(&self) -> usize {
        match &self.prefix {
            Prefix::Segments(s) => s.iter().map(|s| s.len).sum(),
            Prefix::Tokens(t) => t.len(),
        }
    }

    pub fn prompt_len(&self) -> usize {
        self.prefix_len() + self.suffix_len
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    pub duration: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Arrival {
    /// Everything arrives at time 0.
    Batch,
    Poisson { rate: f64 },
    /// Poisson with piecewise-constant rate; the last rate continues.
    Phased { phases: Vec<Phase> },
    /// Explicit times, assigned to requests in id order.
    Fixed { times: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    /// `num_groups` shared prefixes of `prefix_len` tokens. `shares`, when
    /// given, is the fraction of requests per group.
    PrefixGroups {
        num_groups: usize,
        prefix_len: usize,
        #[serde(default)]
        shares: Option<Vec<f64>>,
    },
    /// Requests of `total_len` prompt tokens whose first
    /// `round(total_len * fraction)` tokens are common to all.
    Fractional { total_len: usize, fraction: f64 },
    /// A prefix tree with `fanout^j` segments at level `j`; requests are
    /// spread evenly over the leaves.
    RadixLevels {
        lengths: Vec<usize>,
        #[serde(default = "default_fanout")]
        fanout: usize,
    },
    /// A common prefix of `round(total_len * shared)` tokens, then a suffix
    /// that is identical (`A`) for a `dominant` fraction of requests and
    /// otherwise drawn from `minor_groups` alternatives.
    Tiered {
        total_len: usize,
        shared: f64,
        dominant: f64,
        #[serde(default = "default_minor_groups")]
        minor_groups: usize,
    },
}

fn default_fanout() -> usize {
    2
}

fn default_minor_groups() -> usize {
    50
}

/// Level lengths of the four-level comparison: one level of `4L`, then
/// `[L, 3L]`, `[L, L, 2L]` and `[L, L, L, L]`.
pub fn radix_pattern(levels: usize, level_len: usize) -> Vec<usize> {
    let levels = levels.clamp(1, 4);
    let mut v = vec![level_len; levels - 1];
    v.push(level_len * (5 - levels));
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    pub shape: Shape,
    pub total_requests: usize,
    /// Unique tail appended to every prompt (not used by `fractional`).
    #[serde(default)]
    pub suffix_len: usize,
    pub decode_len: usize,
    pub arrival: Arrival,
    #[serde(default)]
    pub seed: u64,
}

/// Generated request stream, sorted by arrival then id.
#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    pub seed: u64,
    pub requests: Vec<RequestSpec>,
}

fn mix(seed: u64, stream: u64, index: u64) -> u64 {
    // splitmix64 finaliser over a combined key.
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ index.wrapping_mul(0xd1b5_4a32_d192_ed03);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fill(out: &mut Vec<Token>, marker: Token, len: usize, seed: u64) {
    if len == 0 {
        return;
    }
    out.push(marker);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    out.extend((1..len).map(|_| rng.gen_range(0..VOCAB)));
}

impl Workload {
    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }

    pub fn len(&self) -> usize {
        self.requests.len()
    }

    /// Materialize a request's prompt.
    pub fn tokens(&self, r: &RequestSpec) -> Vec<Token> {
        let mut out = Vec::with_capacity(r.prompt_len());
        match &r.prefix {
            Prefix::Segments(segs) => {
                for s in segs {
                    fill(&mut out, SEGMENT_MARKER.wrapping_add(s.id as Token), s.len, mix(self.seed, 1, s.id));
                }
            }
            Prefix::Tokens(t) => out.extend_from_slice(t),
        }
        fill(&mut out, SUFFIX_MARKER.wrapping_add(r.id.0 as Token), r.suffix_len, mix(self.seed, 2, r.id.0));
        out
    }

    fn sort(&mut self) {
        self.requests.sort_by(|a, b| a.arrival.total_cmp(&b.arrival).then(a.id.cmp(&b.id)));
    }
}

/// Split `n` items over `shares` by largest remainder; ties to the lower
/// index.
pub fn split_counts(n: usize, shares: &[f64]) -> Vec<usize> {
    let total: f64 = shares.iter().sum();
    let exact: Vec<f64> = shares.iter().map(|s| s / total * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut rest = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    for i in order {
        if rest == 0 {
            break;
        }
        counts[i] += 1;
        rest -= 1;
    }
    counts
}

fn arrival_times(spec: &WorkloadSpec) -> Result<Vec<f64>, WorkloadError> {
    let n = spec.total_requests;
    let mut rng = ChaCha8Rng::seed_from_u64(mix(spec.seed, 3, 0));
    let poisson = |rng: &mut ChaCha8Rng, rate: f64| -> Result<f64, WorkloadError> {
        let exp = Exp::new(rate).map_err(|_| WorkloadError::Invalid(format!("arrival rate {rate} must be > 0")))?;
        Ok(exp.sample(rng))
    };
    match &spec.arrival {
        Arrival::Batch => Ok(vec![0.0; n]),
        Arrival::Poisson { rate } => {
            if !(*rate > 0.0 && rate.is_finite()) {
                return Err(WorkloadError::Invalid(format!("arrival rate {rate} must be > 0")));
            }
            let mut t = 0.0;
            (0..n)
                .map(|_| {
                    t += poisson(&mut rng, *rate)?;
                    Ok(t)
                })
                .collect()
        }
        Arrival::Phased { phases } => {
            if phases.is_empty() || phases.iter().any(|p| !(p.rate > 0.0 && p.duration >= 0.0)) {
                return Err(WorkloadError::Invalid("phases need positive rates and durations".into()));
            }
            let mut out = Vec::with_capacity(n);
            let (mut t, mut phase, mut phase_end) = (0.0, 0, phases[0].duration);
            while out.len() < n {
                let next = t + poisson(&mut rng, phases[phase].rate)?;
                if phase + 1 < phases.len() && next > phase_end {
                    // Memoryless: restart the clock at the boundary.
                    t = phase_end;
                    phase += 1;
                    phase_end += phases[phase].duration;
                    continue;
                }
                t = next;
                out.push(t);
            }
            Ok(out)
        }
        Arrival::Fixed { times } => {
            if times.len() != n {
                return Err(WorkloadError::Invalid(format!("{} fixed times for {n} requests", times.len())));
            }
            if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
                return Err(WorkloadError::Invalid("fixed times must be finite and >= 0".into()));
            }
            Ok(times.clone())
        }
    }
}

struct Assignment {
    prefix: Vec<Segment>,
    suffix_len: usize,
}

fn shuffled_groups(spec: &WorkloadSpec, counts: &[usize]) -> Vec<usize> {
    let mut labels: Vec<usize> = counts.iter().enumerate().flat_map(|(g, &c)| std::iter::repeat_n(g, c)).collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(spec.seed, 4, 0)));
    labels
}

fn assignments(spec: &WorkloadSpec) -> Result<Vec<Assignment>, WorkloadError> {
    let n = spec.total_requests;
    let invalid = |m: String| Err(WorkloadError::Invalid(m));
    match &spec.shape {
        Shape::PrefixGroups { num_groups, prefix_len, shares } => {
            if *num_groups == 0 {
                return invalid("num_groups must be >= 1".into());
            }
            let shares = match shares {
                Some(s) => {
                    if s.len() != *num_groups || s.iter().any(|x| !(*x >= 0.0)) {
                        return invalid("shares must list one non-negative value per group".into());
                    }
                    let sum: f64 = s.iter().sum();
                    if (sum - 1.0).abs() > 1e-6 {
                        return invalid(format!("shares sum to {sum}, expected 1"));
                    }
                    s.clone()
                }
                None => vec![1.0; *num_groups],
            };
            let labels = shuffled_groups(spec, &split_counts(n, &shares));
            Ok(labels
                .into_iter()
                .map(|g| Assignment { prefix: vec![Segment { id: g as u64, len: *prefix_len }], suffix_len: spec.suffix_len })
                .collect())
        }
        Shape::Fractional { total_len, fraction } => {
            if !(0.0..=1.0).contains(fraction) {
                return invalid(format!("fraction {fraction} outside [0, 1]"));
            }
            let shared = (*total_len as f64 * fraction).round() as usize;
            let prefix = if shared > 0 { vec![Segment { id: 0, len: shared }] } else { vec![] };
            Ok((0..n).map(|_| Assignment { prefix: prefix.clone(), suffix_len: total_len - shared }).collect())
        }
        Shape::RadixLevels { lengths, fanout } => {
            if lengths.is_empty() || *fanout == 0 {
                return invalid("radix levels need at least one level and fanout >= 1".into());
            }
            let depth = lengths.len() as u32;
            let leaves = fanout.pow(depth - 1);
            let labels = shuffled_groups(spec, &split_counts(n, &vec![1.0; leaves]));
            // Heap-style numbering: level j starts at sum of fanout^i, i < j.
            let offset = |j: u32| (0..j).map(|i| fanout.pow(i) as u64).sum::<u64>();
            Ok(labels
                .into_iter()
                .map(|leaf| {
                    let prefix = (0..depth)
                        .map(|j| {
                            let node = leaf / fanout.pow(depth - 1 - j);
                            Segment { id: offset(j) + node as u64, len: lengths[j as usize] }
                        })
                        .collect();
                    Assignment { prefix, suffix_len: spec.suffix_len }
                })
                .collect())
        }
        Shape::Tiered { total_len, shared, dominant, minor_groups } => {
            if !(0.0..=1.0).contains(shared) || !(0.0..=1.0).contains(dominant) {
                return invalid("tiered fractions must be in [0, 1]".into());
            }
            if *minor_groups == 0 && *dominant < 1.0 {
                return invalid("minor_groups must be >= 1 when dominant < 1".into());
            }
            let common = (*total_len as f64 * shared).round() as usize;
            let rest = total_len - common;
            let mut shares = vec![*dominant];
            shares.extend(std::iter::repeat_n((1.0 - dominant) / (*minor_groups).max(1) as f64, *minor_groups));
            let labels = shuffled_groups(spec, &split_counts(n, &shares));
            Ok(labels
                .into_iter()
                .map(|g| {
                    let mut prefix = Vec::new();
                    if common > 0 {
                        prefix.push(Segment { id: 0, len: common });
                    }
                    if rest > 0 {
                        prefix.push(Segment { id: 1 + g as u64, len: rest });
                    }
                    Assignment { prefix, suffix_len: spec.suffix_len }
                })
                .collect())
        }
    }
}

/// Generate the request stream described by `spec`. Deterministic in the
/// spec, seed included.
pub fn generate(spec: &WorkloadSpec) -> Result<Workload, WorkloadError> {
    if spec.decode_len == 0 {
        return Err(WorkloadError::Invalid("decode_len must be >= 1".into()));
    }
    let times = arrival_times(spec)?;
    let requests = assignments(spec)?
        .into_iter()
        .zip(times)
        .enumerate()
        .map(|(i, (a, arrival))| RequestSpec {
            id: RequestId(i as u64),
            arrival,
            prefix: Prefix::Segments(a.prefix),
            suffix_len: a.suffix_len,
            decode_len: spec.decode_len,
        })
        .collect();
    let mut w = Workload { seed: spec.seed, requests };
    w.sort();
    Ok(w)
}
