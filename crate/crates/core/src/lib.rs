//! Learned sparse retrieval engine.
//!
//! - [`sparse`]: vocabulary-space sparse vectors and the inner product.
//! - [`encoder`]: max-pool + ReLU + `log1p` encoding of per-token logits and a
//!   small differentiable encoder producing those logits.
//! - [`objective`]: InfoNCE ranking loss, FLOPs regularizer, warmup and the
//!   toy training loop.
//! - [`exact`] / [`approx`]: exact and blocked approximate inverted indexes.
//! - [`format`]: the `LCNX` on-disk container.
//! - [`eval`]: TREC qrels/runs, nDCG@k, recall@k.
//! - [`bench`]: QPS/latency harness and memory estimates.

pub mod approx;
pub mod bench;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod exact;
pub mod format;
pub mod objective;
pub mod sparse;
pub mod synth;
mod topk;

pub use approx::{build_approx, recall_vs_exact, search_approx, ApproxIndex, ApproxParams};
pub use error::{Error, Result};
pub use exact::{build_exact, search_exact, InvertedIndex};
pub use format::Index;
pub use sparse::{dot, SparseVector, VocabSpec};
pub use topk::Hit;

/// Anything that answers top-`k` queries over a fixed corpus.
pub trait Searcher: Sync {
    fn search(&self, query: &SparseVector, k: usize) -> Result<Vec<Hit>>;

    fn doc_count(&self) -> usize;
}
