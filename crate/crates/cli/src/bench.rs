//! Scheduler overhead micro-benchmarks.
//!
//! Each grid point builds a queue of `waiting` requests of `chunks` chunks
//! spread over `groups` shared prefixes, admits one request per group as
//! the running batch, then runs `rounds` scheduling rounds of `admissions`
//! admissions each. Admitted requests are replaced so the queue length
//! stays fixed. The CHT is charged per function; the radix baselines are
//! charged per full re-ranking of the queue.

use std::fmt::Write as _;
use std::time::Instant;

use feather_core::baselines::RadixTree;
use feather_core::cht::OpStat;
use feather_core::hashing::{ChunkSize, Token};
use feather_core::{ChtConfig, ChtState, RequestId};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::output::OverheadRow;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    /// Queue lengths for the scaling-in-W grid.
    pub waiting: Vec<usize>,
    /// Chunks per request on the W grid.
    pub chunks: usize,
    /// Chunks per request for the scaling-in-T grid.
    pub chunk_grid: Vec<usize>,
    /// Queue length on the T grid.
    pub fixed_waiting: usize,
    pub chunk_size: usize,
    pub groups: usize,
    pub rounds: usize,
    pub admissions: usize,
    /// Also time weighted DFS re-ranking.
    pub dfsw: bool,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            waiting: vec![100, 1_000, 10_000, 100_000],
            chunks: 8,
            chunk_grid: vec![10, 100, 1_000],
            fixed_waiting: 1_000,
            chunk_size: 16,
            groups: 8,
            rounds: 4,
            admissions: 16,
            dfsw: true,
            seed: 1,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), String> {
        if ChunkSize::new(self.chunk_size).is_err() {
            return Err("chunk_size must be >= 1".into());
        }
        if self.groups == 0 || self.rounds == 0 || self.admissions == 0 || self.chunks == 0 {
            return Err("groups, rounds, admissions and chunks must be >= 1".into());
        }
        if self.waiting.iter().chain([&self.fixed_waiting]).any(|&w| w < self.groups + self.admissions) {
            return Err("every queue length must exceed groups + admissions".into());
        }
        if self.chunk_grid.contains(&0) {
            return Err("chunk_grid entries must be >= 1".into());
        }
        Ok(())
    }
}

/// Counted cost of one structure at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointResult {
    pub waiting: usize,
    pub chunks: usize,
    pub tokens: usize,
    pub rows: Vec<OverheadRow>,
}

impl PointResult {
    pub fn row(&self, structure: &str, function: &str) -> Option<&OverheadRow> {
        self.rows.iter().find(|r| r.structure == structure && r.function == function)
    }

    /// CHT selection cost of one round (find_best plus add_to_batch).
    pub fn cht_round_ops(&self) -> f64 {
        let f = self.row("cht", "find_best").map_or(0, |r| r.ops);
        let a = self.row("cht", "add_to_batch").map_or(0, |r| r.ops);
        (f + a) as f64 / self.rounds() as f64
    }

    pub fn lpm_round_ops(&self) -> f64 {
        self.row("lpm", "order").map_or(0.0, |r| r.ops_per_call)
    }

    fn rounds(&self) -> u64 {
        self.row("lpm", "order").map_or(1, |r| r.calls.max(1))
    }
}

struct Queue {
    tokens_per_request: usize,
    chunk: usize,
    groups: Vec<usize>,
}

impl Queue {
    fn tokens(&self, id: u64) -> Vec<Token> {
        let g = self.groups[id as usize] as u32;
        let prefix = self.tokens_per_request - self.chunk;
        let mut t: Vec<Token> = (0..prefix as u32).map(|i| g.wrapping_mul(1_000_003).wrapping_add(i) & 0x3fff_ffff).collect();
        let base = 0x4000_0000u32.wrapping_add((id as u32).wrapping_mul(self.chunk as u32));
        t.extend((0..self.chunk as u32).map(|j| base.wrapping_add(j)));
        t
    }
}

fn row(structure: &str, function: &str, p: (usize, usize, usize), calls: u64, ops: u64, wall_ns: u64) -> OverheadRow {
    OverheadRow {
        structure: structure.into(),
        function: function.into(),
        waiting: p.0,
        chunks: p.1,
        tokens: p.2,
        calls,
        ops,
        ops_per_call: if calls == 0 { 0.0 } else { ops as f64 / calls as f64 },
        wall_ns,
    }
}

fn stat_row(function: &str, p: (usize, usize, usize), s: &OpStat) -> OverheadRow {
    row("cht", function, p, s.calls, s.ops, s.wall.as_nanos() as u64)
}

/// Measure one (waiting, chunks) point. Only the scheduling rounds are
/// counted; the initial fill is reported as `insert` separately.
pub fn measure(cfg: &BenchConfig, waiting: usize, chunks: usize) -> PointResult {
    let k = cfg.chunk_size;
    let tokens_per_request = chunks * k;
    let total = waiting + cfg.rounds * cfg.admissions;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (waiting as u64) << 20 ^ chunks as u64);
    let mut groups: Vec<usize> = (0..total).map(|i| i % cfg.groups).collect();
    groups[cfg.groups..].shuffle(&mut rng);
    let q = Queue { tokens_per_request, chunk: k, groups };
    let point = (waiting, chunks, tokens_per_request);
    let mut rows = Vec::new();

    // CHT.
    let mut cht = ChtState::new(ChtConfig {
        chunk_size: ChunkSize::new(k).expect("validated"),
        capacity_hint: waiting,
        profile: true,
        ..ChtConfig::default()
    });
    for id in 0..waiting as u64 {
        cht.insert(RequestId(id), &q.tokens(id)).expect("fresh id");
    }
    for id in 0..cfg.groups as u64 {
        cht.add_to_batch(RequestId(id)).expect("waiting");
    }
    rows.push(stat_row("insert", point, &cht.counters().insert));
    cht.reset_counters();
    let mut next = waiting as u64;
    for _ in 0..cfg.rounds {
        let mut admitted = Vec::with_capacity(cfg.admissions);
        for _ in 0..cfg.admissions {
            let c = cht.find_best().expect("queue is non-empty");
            cht.add_to_batch(c.request).expect("candidate is waiting");
            admitted.push(c.request);
        }
        for id in admitted {
            cht.finish(id).expect("active");
            cht.insert(RequestId(next), &q.tokens(next)).expect("fresh id");
            next += 1;
        }
    }
    let c = *cht.counters();
    rows.push(stat_row("find_best", point, &c.find_best));
    rows.push(stat_row("add_to_batch", point, &c.add_to_batch));
    rows.push(stat_row("finish", point, &c.finish));
    rows.push(stat_row("refill", point, &c.insert));
    drop(cht);

    // Radix baselines.
    let mut runs = vec!["lpm"];
    if cfg.dfsw {
        runs.push("dfsw");
    }
    for name in runs {
        let mut tree = RadixTree::new();
        let t0 = Instant::now();
        for id in 0..waiting as u64 {
            tree.insert(RequestId(id), &q.tokens(id));
        }
        let insert_wall = t0.elapsed().as_nanos() as u64;
        rows.push(row(name, "insert", point, waiting as u64, tree.meter.total(), insert_wall));
        let mut queue: Vec<RequestId> = (0..waiting as u64).map(RequestId).collect();
        for id in 0..cfg.groups as u64 {
            tree.mark_admitted(RequestId(id));
        }
        queue.retain(|id| id.0 >= cfg.groups as u64);
        tree.meter = Default::default();
        let mut next = waiting as u64;
        let mut wall = 0u64;
        for _ in 0..cfg.rounds {
            let t0 = Instant::now();
            let order: Vec<RequestId> = if name == "lpm" {
                tree.lpm_order(&queue).into_iter().map(|(id, _)| id).collect()
            } else {
                tree.dfsw_order()
            };
            wall += t0.elapsed().as_nanos() as u64;
            let take: Vec<RequestId> = order.into_iter().take(cfg.admissions).collect();
            for &id in &take {
                tree.mark_admitted(id);
            }
            queue.retain(|id| !take.contains(id));
            let ops_before = tree.meter;
            for _ in 0..take.len() {
                tree.insert(RequestId(next), &q.tokens(next));
                queue.push(RequestId(next));
                next += 1;
            }
            // Refills are not part of the ranking cost.
            tree.meter = ops_before;
        }
        rows.push(row(name, "order", point, cfg.rounds as u64, tree.meter.total(), wall));
    }

    PointResult { waiting, chunks, tokens: tokens_per_request, rows }
}

/// Full benchmark: the W grid at `chunks`, then the T grid at
/// `fixed_waiting`.
pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<PointResult>, CliError> {
    cfg.validate().map_err(CliError::Invalid)?;
    let mut out: Vec<PointResult> = cfg.waiting.iter().map(|&w| measure(cfg, w, cfg.chunks)).collect();
    out.extend(cfg.chunk_grid.iter().map(|&c| measure(cfg, cfg.fixed_waiting, c)));
    Ok(out)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.max(f64::MIN_POSITIVE).ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Per-function table for every grid point plus fitted slopes.
pub fn report(cfg: &BenchConfig, results: &[PointResult]) -> String {
    let mut s = String::new();
    for p in results {
        let _ = writeln!(s, "W = {}, chunks = {}, tokens = {}", p.waiting, p.chunks, p.tokens);
        let _ = writeln!(
            s,
            "  {:<6} {:<13} {:>8} {:>14} {:>14} {:>12} {:>14}",
            "struct", "function", "calls", "ops", "ops/call", "wall ms", "wall/call us"
        );
        for r in &p.rows {
            let per = if r.calls == 0 { 0.0 } else { r.wall_ns as f64 / r.calls as f64 / 1e3 };
            let _ = writeln!(
                s,
                "  {:<6} {:<13} {:>8} {:>14} {:>14.1} {:>12.3} {:>14.2}",
                r.structure,
                r.function,
                r.calls,
                r.ops,
                r.ops_per_call,
                r.wall_ns as f64 / 1e6,
                per
            );
        }
        let _ = writeln!(s);
    }
    let w_grid: Vec<&PointResult> = results.iter().filter(|p| p.chunks == cfg.chunks).take(cfg.waiting.len()).collect();
    if w_grid.len() >= 2 {
        let fb: Vec<(f64, f64)> = w_grid
            .iter()
            .map(|p| (p.waiting as f64, p.row("cht", "find_best").map_or(0.0, |r| r.ops_per_call)))
            .collect();
        let lpm: Vec<(f64, f64)> = w_grid.iter().map(|p| (p.waiting as f64, p.lpm_round_ops())).collect();
        let _ = writeln!(s, "slope in W: cht find_best {:.3}, lpm order {:.3}", loglog_slope(&fb), loglog_slope(&lpm));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = [1.0f64, 10.0, 100.0].iter().map(|&x| (x, 3.0 * x.powf(0.5))).collect();
        assert!((loglog_slope(&pts) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn small_point_counts_every_function() {
        let cfg = BenchConfig { rounds: 2, admissions: 4, groups: 2, ..BenchConfig::default() };
        let p = measure(&cfg, 50, 4);
        assert_eq!(p.row("cht", "find_best").unwrap().calls, 8);
        assert_eq!(p.row("cht", "add_to_batch").unwrap().calls, 8);
        assert_eq!(p.row("lpm", "order").unwrap().calls, 2);
        assert!(p.lpm_round_ops() > 0.0);
        let ops = |p: &PointResult| p.rows.iter().map(|r| (r.function.clone(), r.calls, r.ops)).collect::<Vec<_>>();
        assert_eq!(ops(&p), ops(&measure(&cfg, 50, 4)));
    }
}
