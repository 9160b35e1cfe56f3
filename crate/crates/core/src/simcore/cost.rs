use serde::{Deserialize, Serialize};

use super::SimError;
use crate::cht::ChunkKey;
use crate::scalar::Scalar;

/// Parametric step-time model.
///
/// A decode step costs `fixed_step_overhead + max(compute, memory, floor)`
/// with `compute = per_token_compute * B` and
/// `memory = U * kv_bytes_per_token / (bandwidth_full * beta^I)`, where `U`
/// counts each KV token read by the step once and `I = 1` when the batch
/// spans more than one prefix group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar", deny_unknown_fields)]
pub struct CostParams<F> {
    /// Bytes per second when the batch reads one shared prefix.
    pub bandwidth_full: F,
    /// Bandwidth multiplier for multi-group batches, in (0, 1].
    pub locality_penalty: F,
    /// Seconds per request per step.
    pub per_token_compute: F,
    pub fixed_step_overhead: F,
    pub kv_bytes_per_token: F,
    pub prefill_cost_per_token: F,
    /// Lower bound on the variable part of a step.
    #[serde(default)]
    pub small_batch_floor: F,
    /// Prefill multiplier for tokens whose KV was evicted and is rebuilt.
    #[serde(default = "one")]
    pub eviction_recompute: F,
    /// Extra penalty per group beyond the second; 0 keeps the binary gate.
    #[serde(default)]
    pub group_decay: F,
    /// KV memory; `None` is unlimited.
    #[serde(default)]
    pub kv_capacity_bytes: Option<F>,
    /// Seconds charged per counted scheduler operation.
    #[serde(default)]
    pub scheduler_op_cost: F,
}

fn one<F: Scalar>() -> F {
    F::one()
}

impl<F: Scalar> Default for CostParams<F> {
    /// Rounded calibration output; the unrounded fit is
    /// `configs/cost_calibrated.toml`.
    fn default() -> Self {
        Self {
            bandwidth_full: F::of(300e9),
            locality_penalty: F::of(0.55),
            per_token_compute: F::of(20e-6),
            fixed_step_overhead: F::of(5e-3),
            kv_bytes_per_token: F::of(131_072.0),
            prefill_cost_per_token: F::of(2e-5),
            small_batch_floor: F::zero(),
            eviction_recompute: F::one(),
            group_decay: F::zero(),
            kv_capacity_bytes: None,
            scheduler_op_cost: F::zero(),
        }
    }
}

impl<F: Scalar> CostParams<F> {
    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            ("bandwidth_full", self.bandwidth_full),
            ("per_token_compute", self.per_token_compute),
            ("fixed_step_overhead", self.fixed_step_overhead),
            ("kv_bytes_per_token", self.kv_bytes_per_token),
            ("prefill_cost_per_token", self.prefill_cost_per_token),
            ("eviction_recompute", self.eviction_recompute),
        ];
        for (name, v) in positive {
            if !(v > F::zero() && v.is_finite()) {
                return Err(SimError::Invalid(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("small_batch_floor", self.small_batch_floor),
            ("group_decay", self.group_decay),
            ("scheduler_op_cost", self.scheduler_op_cost),
        ] {
            if !(v >= F::zero() && v.is_finite()) {
                return Err(SimError::Invalid(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(self.locality_penalty > F::zero() && self.locality_penalty <= F::one()) {
            return Err(SimError::Invalid(format!("locality_penalty must be in (0, 1], got {}", self.locality_penalty)));
        }
        if let Some(c) = self.kv_capacity_bytes {
            if !(c > F::zero()) {
                return Err(SimError::Invalid(format!("kv_capacity_bytes must be positive, got {c}")));
            }
        }
        Ok(())
    }

    /// KV capacity in tokens, rounded down.
    pub fn kv_capacity_tokens(&self) -> Option<u64> {
        self.kv_capacity_bytes.map(|c| (c / self.kv_bytes_per_token).floor().to_u64().unwrap_or(u64::MAX))
    }

    /// Effective bandwidth multiplier for a batch with `groups` groups.
    pub fn bandwidth_multiplier(&self, groups: usize) -> F {
        if groups <= 1 {
            F::one()
        } else {
            self.locality_penalty / (F::one() + self.group_decay * F::of_usize(groups - 2))
        }
    }
}

/// What a decode step touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BatchProfile {
    pub batch_size: usize,
    /// Distinct KV tokens read, shared chunks counted once.
    pub unique_tokens: u64,
    pub prefix_groups: usize,
}

/// Per-request KV layout for [`BatchProfile::from_requests`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestKv {
    /// Prompt chunks in level order with their token counts.
    pub chunks: Vec<(ChunkKey, u32)>,
    /// Tokens private to the request (generated so far).
    pub private_tokens: u64,
}

impl BatchProfile {
    /// Direct construction: distinct chunks counted once; requests are
    /// grouped by the deepest chunk they share with another member.
    pub fn from_requests(requests: &[RequestKv]) -> Self {
        use std::collections::{BTreeMap, BTreeSet};
        let mut refs: BTreeMap<ChunkKey, (u32, u32)> = BTreeMap::new();
        for r in requests {
            for &(k, t) in &r.chunks {
                refs.entry(k).or_insert((0, t)).0 += 1;
            }
        }
        let unique_tokens =
            refs.values().map(|&(_, t)| t as u64).sum::<u64>() + requests.iter().map(|r| r.private_tokens).sum::<u64>();
        let mut classes = BTreeSet::new();
        for (i, r) in requests.iter().enumerate() {
            match r.chunks.iter().rev().find(|(k, _)| refs[k].0 >= 2) {
                Some((k, _)) => classes.insert((0, k.level as u64, k.hash)),
                None => classes.insert((1, i as u64, 0)),
            };
        }
        Self { batch_size: requests.len(), unique_tokens, prefix_groups: classes.len() }
    }
}

/// Duration of one decode step.
pub fn step_time<F: Scalar>(profile: &BatchProfile, params: &CostParams<F>) -> Result<F, SimError> {
    if profile.batch_size == 0 {
        return Err(SimError::EmptyBatch);
    }
    let compute = params.per_token_compute * F::of_usize(profile.batch_size);
    let bytes = F::of_u64(profile.unique_tokens) * params.kv_bytes_per_token;
    let memory = bytes / (params.bandwidth_full * params.bandwidth_multiplier(profile.prefix_groups));
    Ok(params.fixed_step_overhead + compute.max(memory).max(params.small_batch_floor))
}

/// Prompt processing time; `recomputed` tokens were evicted earlier and pay
/// the recompute multiplier.
pub fn prefill_time<F: Scalar>(new_tokens: u64, recomputed: u64, params: &CostParams<F>) -> F {
    params.prefill_cost_per_token * (F::of_u64(new_tokens) + params.eviction_recompute * F::of_u64(recomputed))
}
