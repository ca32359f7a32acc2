//! Query throughput and latency measurement, plus closed-form index memory
//! estimates.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::SparseVector;
use crate::Searcher;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub queries_per_second: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub p99_ms: f64,
    pub thread_count: usize,
    pub total_queries: usize,
    pub wall_time_s: f64,
}

pub const CSV_HEADER: &str =
    "label,k,thread_count,total_queries,wall_time_s,queries_per_second,p50_ms,p95_ms,p99_ms,effectiveness";

impl BenchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One CSV row matching [`CSV_HEADER`]; `effectiveness` (e.g. nDCG@10) is
    /// left blank when unknown.
    pub fn csv_row(&self, label: &str, k: usize, effectiveness: Option<f64>) -> String {
        format!(
            "{label},{k},{},{},{},{},{},{},{},{}",
            self.thread_count,
            self.total_queries,
            self.wall_time_s,
            self.queries_per_second,
            self.p50_ms,
            self.p95_ms,
            self.p99_ms,
            effectiveness.map(|e| format!("{e:.4}")).unwrap_or_default()
        )
    }
}

/// Nearest-rank percentile of an ascending slice.
pub fn nearest_rank(sorted: &[f64], pct: f64) -> f64 {
    assert!(!sorted.is_empty());
    let rank = ((pct / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Runs `warmup_iters` untimed passes over `queries`, then one timed pass with
/// the queries split into `threads` contiguous shards searched concurrently.
/// Results are discarded; only latency is kept.
pub fn measure_qps(
    index: &dyn Searcher,
    queries: &[SparseVector],
    k: usize,
    threads: usize,
    warmup_iters: usize,
) -> Result<BenchReport> {
    if queries.is_empty() {
        return Err(Error::contract("benchmark needs at least one query"));
    }
    if threads == 0 {
        return Err(Error::contract("thread count must be at least 1"));
    }
    for _ in 0..warmup_iters {
        for q in queries {
            std::hint::black_box(index.search(q, k)?);
        }
    }
    let workers = threads.min(queries.len());
    let shard = queries.len().div_ceil(workers);

    let start = Instant::now();
    let per_shard: Vec<Result<Vec<Duration>>> = std::thread::scope(|s| {
        let handles: Vec<_> = queries
            .chunks(shard)
            .map(|chunk| {
                s.spawn(move || {
                    let mut lat = Vec::with_capacity(chunk.len());
                    for q in chunk {
                        let t = Instant::now();
                        std::hint::black_box(index.search(q, k)?);
                        lat.push(t.elapsed());
                    }
                    Ok(lat)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("search worker panicked"))
            .collect()
    });
    let wall = start.elapsed().as_secs_f64();

    let mut latencies_ms = Vec::with_capacity(queries.len());
    for shard in per_shard {
        latencies_ms.extend(shard?.into_iter().map(|d| d.as_secs_f64() * 1e3));
    }
    latencies_ms.sort_by(f64::total_cmp);
    // guard against a zero-duration pass on coarse clocks
    let wall = wall.max(f64::MIN_POSITIVE);
    Ok(BenchReport {
        queries_per_second: queries.len() as f64 / wall,
        p50_ms: nearest_rank(&latencies_ms, 50.0),
        p95_ms: nearest_rank(&latencies_ms, 95.0),
        p99_ms: nearest_rank(&latencies_ms, 99.0),
        thread_count: workers,
        total_queries: queries.len(),
        wall_time_s: wall,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryKind {
    Dense,
    Sparse,
}

/// Closed-form index size with its inputs echoed back.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryEstimate {
    pub kind: MemoryKind,
    pub bytes: u64,
    /// Documents (dense) or total postings (sparse).
    pub count: u64,
    /// Dimension (dense); unused (0) for sparse.
    pub dim: u64,
    pub bytes_per_unit: u64,
    pub overhead_bytes: u64,
}

impl MemoryEstimate {
    pub fn gib(&self) -> f64 {
        self.bytes as f64 / (1u64 << 30) as f64
    }
}

/// `doc_count * dim * bytes_per_value` for a flat dense index.
pub fn estimate_memory_dense(doc_count: u64, dim: u64, bytes_per_value: u64) -> MemoryEstimate {
    MemoryEstimate {
        kind: MemoryKind::Dense,
        bytes: doc_count * dim * bytes_per_value,
        count: doc_count,
        dim,
        bytes_per_unit: bytes_per_value,
        overhead_bytes: 0,
    }
}

/// `total_postings * bytes_per_posting + overhead_bytes` for an inverted index.
pub fn estimate_memory_sparse(total_postings: u64, bytes_per_posting: u64, overhead_bytes: u64) -> MemoryEstimate {
    MemoryEstimate {
        kind: MemoryKind::Sparse,
        bytes: total_postings * bytes_per_posting + overhead_bytes,
        count: total_postings,
        dim: 0,
        bytes_per_unit: bytes_per_posting,
        overhead_bytes,
    }
}
