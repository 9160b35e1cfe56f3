use crate::cht::RequestId;
use crate::policy::Decision;
use crate::scalar::Scalar;

/// One decode step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord<F> {
    pub index: u64,
    pub start: F,
    pub end: F,
    pub batch_size: usize,
    pub prefix_groups: usize,
    pub tokens: u64,
    pub unique_kv_tokens: u64,
    pub admitted: usize,
    pub prefill_tokens: u64,
    pub prefill_duration: F,
    pub scheduler_duration: F,
    pub decode_duration: F,
    pub reward: F,
    pub completions: usize,
    /// Counted scheduler operations spent on this step's build.
    pub scheduler_ops: u64,
    pub evictions: u64,
}

impl<F: Scalar> StepRecord<F> {
    pub fn duration(&self) -> F {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RequestRecord<F> {
    pub id: RequestId,
    pub arrival: F,
    pub admitted: F,
    pub first_token: F,
    pub finish: F,
    pub tokens: u64,
    /// Per-token completion times; filled only when requested.
    pub token_times: Vec<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRecord {
    pub step: u64,
    pub decision: Decision,
}

/// Run summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics<F> {
    pub requests: usize,
    pub total_tokens: u64,
    pub makespan: F,
    /// Generated tokens per second of wall time.
    pub throughput: F,
    /// Generated tokens per second of decode time only.
    pub decode_throughput: F,
    /// Mean time between consecutive tokens of the same request.
    pub mean_tbt: F,
    pub mean_latency: F,
    pub mean_ttft: F,
    pub steps: u64,
    pub mean_batch_size: F,
    pub mean_prefix_groups: F,
    pub scheduler_ops: u64,
    pub evictions: u64,
    pub prefill_tokens: u64,
}

fn mean<F: Scalar>(xs: impl Iterator<Item = F>) -> F {
    let (mut s, mut n) = (F::zero(), 0usize);
    for x in xs {
        s = s + x;
        n += 1;
    }
    if n == 0 {
        F::zero()
    } else {
        s / F::of_usize(n)
    }
}

impl<F: Scalar> Metrics<F> {
    pub fn from_records(steps: &[StepRecord<F>], requests: &[RequestRecord<F>], scheduler_ops: u64, evictions: u64) -> Self {
        let total_tokens: u64 = steps.iter().map(|s| s.tokens).sum();
        let start = requests.iter().map(|r| r.arrival).fold(F::infinity(), F::min);
        let end = requests.iter().map(|r| r.finish).fold(F::neg_infinity(), F::max);
        let makespan = if requests.is_empty() { F::zero() } else { end - start };
        let decode_time: F = steps.iter().map(|s| s.decode_duration).sum();
        let per_sec = |t: F| if t > F::zero() { F::of_u64(total_tokens) / t } else { F::zero() };
        let gaps: (F, u64) = requests
            .iter()
            .filter(|r| r.tokens > 1)
            .fold((F::zero(), 0), |(s, n), r| (s + (r.finish - r.first_token), n + r.tokens - 1));
        Self {
            requests: requests.len(),
            total_tokens,
            makespan,
            throughput: per_sec(makespan),
            decode_throughput: per_sec(decode_time),
            mean_tbt: if gaps.1 > 0 { gaps.0 / F::of_u64(gaps.1) } else { F::zero() },
            mean_latency: mean(requests.iter().map(|r| r.finish - r.arrival)),
            mean_ttft: mean(requests.iter().map(|r| r.first_token - r.arrival)),
            steps: steps.len() as u64,
            mean_batch_size: mean(steps.iter().map(|s| F::of_usize(s.batch_size))),
            mean_prefix_groups: mean(steps.iter().map(|s| F::of_usize(s.prefix_groups))),
            scheduler_ops,
            evictions,
            prefill_tokens: steps.iter().map(|s| s.prefill_tokens).sum(),
        }
    }
}
