//! Approximate retrieval over statically pruned, blocked posting lists.
//!
//! Each term's posting list is sorted by impact and truncated to its top
//! `ceil(alpha * len)` entries. The survivors are cut into consecutive blocks
//! of at most `block_size` documents. Every block carries a summary vector:
//! the coordinate-wise max of its documents' kept postings, quantized upward
//! onto `summary_levels` uniform levels so it stays an upper bound.
//!
//! At query time, blocks are visited per query term in descending order of
//! their summary bound. A block is skipped once its bound falls below the
//! current k-th best score divided by `heap_factor`. Candidates are always
//! rescored exactly against the forward store.

use crate::error::{Error, Result};
use crate::exact::{check_query, collect_corpus, sort_by_impact, InvertedIndex, Posting};
use crate::sparse::{merge_dot, SparseVector, VocabSpec};
use crate::topk::{Hit, TopK};
use crate::Searcher;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproxParams {
    /// Fraction of each posting list kept, in (0, 1].
    pub alpha: f64,
    /// Maximum documents per block; `usize::MAX` means one block per term.
    pub block_size: usize,
    /// Quantization levels per summary coordinate, in 2..=256.
    pub summary_levels: u16,
    /// Pruning threshold multiplier in (0, 1]; lower is more aggressive.
    pub heap_factor: f64,
}

impl Default for ApproxParams {
    fn default() -> Self {
        ApproxParams {
            alpha: 0.5,
            block_size: 8,
            summary_levels: 64,
            heap_factor: 0.9,
        }
    }
}

impl ApproxParams {
    /// Parameters under which search reproduces exact retrieval.
    pub fn degenerate() -> Self {
        ApproxParams {
            alpha: 1.0,
            block_size: 1,
            summary_levels: 256,
            heap_factor: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::contract(format!("alpha must be in (0, 1], got {}", self.alpha)));
        }
        if self.block_size == 0 {
            return Err(Error::contract("block_size must be at least 1"));
        }
        if !(2..=256).contains(&self.summary_levels) {
            return Err(Error::contract(format!(
                "summary_levels must be in 2..=256, got {}",
                self.summary_levels
            )));
        }
        if !(self.heap_factor > 0.0 && self.heap_factor <= 1.0) {
            return Err(Error::contract(format!(
                "heap_factor must be in (0, 1], got {}",
                self.heap_factor
            )));
        }
        Ok(())
    }

    /// Number of postings kept out of `len`: `ceil(alpha * len)`, with
    /// products within 1e-9 of an integer treated as that integer.
    pub fn kept(&self, len: usize) -> usize {
        let x = self.alpha * len as f64;
        let r = x.round();
        let n = if (x - r).abs() < 1e-9 { r } else { x.ceil() };
        (n as usize).clamp(len.min(1), len)
    }
}

/// A run of consecutive kept postings with its quantized upper-bound summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub docs: Vec<u32>,
    pub summary_terms: Vec<u32>,
    pub summary_codes: Vec<u8>,
    /// Largest summary value; code `levels - 1` decodes to exactly this.
    pub scale: f32,
}

pub(crate) fn dequantize(code: u8, scale: f32, levels: u16) -> f32 {
    let top = (levels - 1) as u32;
    if code as u32 >= top {
        scale
    } else {
        scale * code as f32 / top as f32
    }
}

/// Smallest level code whose decoded value is at least `w`.
pub(crate) fn quantize_up(w: f32, scale: f32, levels: u16) -> u8 {
    let top = (levels - 1) as u32;
    let mut code = ((w / scale) * top as f32).ceil().clamp(0.0, top as f32) as u32;
    while code < top && dequantize(code as u8, scale, levels) < w {
        code += 1;
    }
    code as u8
}

impl Block {
    /// Decoded summary as a sparse vector.
    pub fn summary(&self, vocab: VocabSpec, levels: u16) -> SparseVector {
        SparseVector::new(
            vocab,
            self.summary_terms
                .iter()
                .zip(&self.summary_codes)
                .map(|(&t, &c)| (t, dequantize(c, self.scale, levels))),
        )
        .expect("summary entries are valid")
    }

    /// `dot(query, summary)` with the query given densely.
    fn bound(&self, dense_query: &[f32], levels: u16) -> f64 {
        let mut acc = 0.0f64;
        for (&t, &c) in self.summary_terms.iter().zip(&self.summary_codes) {
            let q = dense_query[t as usize];
            if q > 0.0 {
                acc += q as f64 * dequantize(c, self.scale, levels) as f64;
            }
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApproxIndex {
    pub(crate) vocab: VocabSpec,
    pub(crate) doc_ids: Vec<String>,
    pub(crate) forward: Vec<SparseVector>,
    /// Blocks per term id, in impact order.
    pub(crate) blocks: Vec<Vec<Block>>,
    pub(crate) params: ApproxParams,
}

impl ApproxIndex {
    pub fn build<I>(vocab: VocabSpec, corpus: I, params: ApproxParams) -> Result<Self>
    where
        I: IntoIterator<Item = (String, SparseVector)>,
    {
        params.validate()?;
        let (doc_ids, forward) = collect_corpus(vocab, corpus)?;

        let mut lists: Vec<Vec<Posting>> = vec![Vec::new(); vocab.len()];
        for (doc, v) in forward.iter().enumerate() {
            for (t, w) in v.iter() {
                lists[t as usize].push(Posting { doc: doc as u32, impact: w });
            }
        }
        // kept[d] collects doc d's surviving postings in ascending term order
        let mut kept: Vec<Vec<(u32, f32)>> = vec![Vec::new(); forward.len()];
        for (t, list) in lists.iter_mut().enumerate() {
            sort_by_impact(list);
            list.truncate(params.kept(list.len()));
            for p in list.iter() {
                kept[p.doc as usize].push((t as u32, p.impact));
            }
        }

        let mut scratch = vec![0.0f32; vocab.len()];
        let mut touched: Vec<u32> = Vec::new();
        let blocks = lists
            .iter()
            .map(|list| {
                list.chunks(params.block_size)
                    .map(|chunk| {
                        for p in chunk {
                            for &(t, w) in &kept[p.doc as usize] {
                                let slot = &mut scratch[t as usize];
                                if *slot == 0.0 {
                                    touched.push(t);
                                }
                                if w > *slot {
                                    *slot = w;
                                }
                            }
                        }
                        touched.sort_unstable();
                        let scale = touched
                            .iter()
                            .map(|&t| scratch[t as usize])
                            .fold(0.0f32, f32::max);
                        let summary_codes = touched
                            .iter()
                            .map(|&t| quantize_up(scratch[t as usize], scale, params.summary_levels))
                            .collect();
                        for &t in &touched {
                            scratch[t as usize] = 0.0;
                        }
                        Block {
                            docs: chunk.iter().map(|p| p.doc).collect(),
                            summary_terms: std::mem::take(&mut touched),
                            summary_codes,
                            scale,
                        }
                    })
                    .collect()
            })
            .collect();

        Ok(ApproxIndex {
            vocab,
            doc_ids,
            forward,
            blocks,
            params,
        })
    }

    pub fn vocab(&self) -> VocabSpec {
        self.vocab
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn params(&self) -> ApproxParams {
        self.params
    }

    pub fn forward(&self, doc: u32) -> &SparseVector {
        &self.forward[doc as usize]
    }

    pub fn blocks(&self, term: u32) -> &[Block] {
        self.blocks.get(term as usize).map_or(&[][..], Vec::as_slice)
    }

    pub fn block_count(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    /// Postings surviving static pruning, summed over terms.
    pub fn kept_postings(&self) -> usize {
        self.blocks.iter().flatten().map(|b| b.docs.len()).sum()
    }

    /// Document `doc` restricted to the postings that survived pruning.
    pub fn kept_vector(&self, doc: u32) -> SparseVector {
        let mut entries = Vec::new();
        for (t, blocks) in self.blocks.iter().enumerate() {
            if blocks.iter().any(|b| b.docs.contains(&doc)) {
                entries.push((t as u32, self.forward[doc as usize].get(t as u32)));
            }
        }
        SparseVector::new(self.vocab, entries).expect("kept postings are valid")
    }

    pub fn search(&self, query: &SparseVector, k: usize) -> Result<Vec<Hit>> {
        self.search_with_heap_factor(query, k, self.params.heap_factor)
    }

    /// Search with a query-time override of the heap factor.
    pub fn search_with_heap_factor(&self, query: &SparseVector, k: usize, heap_factor: f64) -> Result<Vec<Hit>> {
        check_query(self.vocab, query, k)?;
        if !(heap_factor > 0.0 && heap_factor <= 1.0) {
            return Err(Error::contract(format!("heap_factor must be in (0, 1], got {heap_factor}")));
        }
        let levels = self.params.summary_levels;
        let dense = query.densify();
        let mut visited = vec![false; self.doc_count()];
        let mut top = TopK::new(k);

        let mut terms: Vec<(u32, f32)> = query.iter().collect();
        terms.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

        let mut order: Vec<(f64, usize)> = Vec::new();
        for (t, _) in terms {
            let blocks = &self.blocks[t as usize];
            order.clear();
            order.extend(blocks.iter().enumerate().map(|(i, b)| (b.bound(&dense, levels), i)));
            order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            for &(bound, i) in &order {
                if let Some(th) = top.threshold() {
                    // compared at the precision results are ranked in, so an
                    // equal-scoring document that wins the id tie-break is never skipped;
                    // blocks are in descending bound order, so the rest fail too
                    if (bound as f32) < (th / heap_factor) as f32 {
                        break;
                    }
                }
                for &d in &blocks[i].docs {
                    if std::mem::replace(&mut visited[d as usize], true) {
                        continue;
                    }
                    let v = &self.forward[d as usize];
                    let s = merge_dot(query.terms(), query.weights(), v.terms(), v.weights());
                    if s > 0.0 {
                        top.push(&self.doc_ids[d as usize], s);
                    }
                }
            }
        }
        Ok(top.into_hits())
    }
}

pub fn build_approx<I>(vocab: VocabSpec, corpus: I, params: ApproxParams) -> Result<ApproxIndex>
where
    I: IntoIterator<Item = (String, SparseVector)>,
{
    ApproxIndex::build(vocab, corpus, params)
}

pub fn search_approx(index: &ApproxIndex, query: &SparseVector, k: usize) -> Result<Vec<Hit>> {
    index.search(query, k)
}

/// Mean fraction of the exact top-`k` recovered by the approximate index.
///
/// Queries whose exact top-`k` is empty are skipped; with no contributing
/// queries the mean is defined as 1.0.
pub fn recall_vs_exact(
    index: &ApproxIndex,
    exact: &InvertedIndex,
    queries: &[SparseVector],
    k: usize,
) -> Result<f64> {
    if index.doc_count() != exact.doc_count() {
        return Err(Error::contract(format!(
            "indexes cover different corpora ({} vs {} documents)",
            index.doc_count(),
            exact.doc_count()
        )));
    }
    let mut total = 0.0;
    let mut counted = 0usize;
    for q in queries {
        let truth = exact.search(q, k)?;
        if truth.is_empty() {
            continue;
        }
        let found = index.search(q, k)?;
        let hit = truth
            .iter()
            .filter(|t| found.iter().any(|f| f.id == t.id))
            .count();
        total += hit as f64 / truth.len() as f64;
        counted += 1;
    }
    Ok(if counted == 0 { 1.0 } else { total / counted as f64 })
}

impl Searcher for ApproxIndex {
    fn search(&self, query: &SparseVector, k: usize) -> Result<Vec<Hit>> {
        ApproxIndex::search(self, query, k)
    }

    fn doc_count(&self) -> usize {
        ApproxIndex::doc_count(self)
    }
}
