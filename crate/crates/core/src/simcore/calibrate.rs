//! Fit cost-model parameters to measured ratios and step times.

use serde::{Deserialize, Serialize};

use super::cost::{step_time, BatchProfile, CostParams};
use super::SimError;
use crate::scalar::Scalar;

/// A homogeneous step over `unique_tokens` distinct KV tokens took `seconds`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceStep {
    pub batch_size: usize,
    pub unique_tokens: u64,
    pub seconds: f64,
}

/// Homogeneous over two-group throughput ratio for `batch_size` requests
/// with `prefix_tokens` of shared prefix and `suffix_tokens` each.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomogeneityTarget {
    pub ratio: f64,
    pub batch_size: usize,
    pub prefix_tokens: u64,
    pub suffix_tokens: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComputeTarget {
    pub batch_size: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTargets {
    #[serde(default)]
    pub reference_step: Option<ReferenceStep>,
    #[serde(default)]
    pub compute_bound: Option<ComputeTarget>,
    #[serde(default)]
    pub floor_seconds: Option<f64>,
    #[serde(default)]
    pub homogeneity_drop: Option<HomogeneityTarget>,
}

fn homogeneity_ratio<F: Scalar>(p: &CostParams<F>, t: &HomogeneityTarget) -> Result<F, SimError> {
    let b = t.batch_size as u64;
    let homo = BatchProfile { batch_size: t.batch_size, unique_tokens: t.prefix_tokens + b * t.suffix_tokens, prefix_groups: 1 };
    let hetero =
        BatchProfile { batch_size: t.batch_size, unique_tokens: 2 * t.prefix_tokens + b * t.suffix_tokens, prefix_groups: 2 };
    Ok(step_time(&hetero, p)? / step_time(&homo, p)?)
}

/// Apply every present target to `base`, in the order bandwidth, compute,
/// floor, locality penalty. Absent targets leave parameters untouched.
pub fn calibrate<F: Scalar>(base: &CostParams<F>, targets: &CalibrationTargets) -> Result<CostParams<F>, SimError> {
    let mut p = *base;
    let o = p.fixed_step_overhead.as_f64();
    let need_above_overhead = |s: f64, what: &str| {
        if s > o {
            Ok(s - o)
        } else {
            Err(SimError::Invalid(format!("{what} of {s}s does not exceed the fixed overhead {o}s")))
        }
    };
    if let Some(r) = targets.reference_step {
        let var = need_above_overhead(r.seconds, "reference step")?;
        p.bandwidth_full = F::of(r.unique_tokens as f64 * p.kv_bytes_per_token.as_f64() / var);
    }
    if let Some(c) = targets.compute_bound {
        let var = need_above_overhead(c.seconds, "compute-bound step")?;
        p.per_token_compute = F::of(var / c.batch_size.max(1) as f64);
    }
    if let Some(f) = targets.floor_seconds {
        p.small_batch_floor = F::of(need_above_overhead(f, "floor step")?);
    }
    if let Some(h) = targets.homogeneity_drop {
        if !(h.ratio >= 1.0) {
            return Err(SimError::Invalid(format!("homogeneity ratio {} must be >= 1", h.ratio)));
        }
        let at = |beta: f64, p: &mut CostParams<F>| -> Result<f64, SimError> {
            p.locality_penalty = F::of(beta);
            Ok(homogeneity_ratio(p, &h)?.as_f64())
        };
        let (mut lo, mut hi) = (1e-6, 1.0);
        if at(hi, &mut p)? > h.ratio || at(lo, &mut p)? < h.ratio {
            return Err(SimError::Invalid(format!("homogeneity ratio {} unreachable for this shape", h.ratio)));
        }
        // The ratio falls as the penalty approaches 1.
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if at(mid, &mut p)? > h.ratio {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        p.locality_penalty = F::of(0.5 * (lo + hi));
    }
    p.validate()?;
    Ok(p)
}
