//! `LCNX` binary container for exact and approximate indexes.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! header     "LCNX" | version u16 | kind u8 (0 exact, 1 approx) | reserved u8
//!            | vocab u32 | doc_count u32
//! doc ids    per doc: len u32 | UTF-8 bytes
//! exact      per term: posting count u32 ; then postings (doc u32, impact f32)
//! approx     params: alpha f64 | block_size u64 (u64::MAX = unbounded)
//!                    | summary_levels u16 | heap_factor f64
//!            blocks: per term block count u32 ; per block doc count u32 ;
//!                    then every block's doc ordinals u32
//!            summaries: per block scale f32 | nnz u32 | terms u32* | codes u8*
//!            forward: per doc nnz u32 ; then entries (term u32, weight f32)
//! ```

use std::path::Path;

use crate::approx::{ApproxIndex, ApproxParams, Block};
use crate::error::{Error, Result};
use crate::exact::{InvertedIndex, Posting};
use crate::sparse::{SparseVector, VocabSpec};

pub const MAGIC: &[u8; 4] = b"LCNX";
pub const VERSION: u16 = 1;
pub const HEADER_BYTES: usize = 16;
/// Bytes per stored `(u32, f32)` pair.
pub const BYTES_PER_POSTING: usize = 8;

const KIND_EXACT: u8 = 0;
const KIND_APPROX: u8 = 1;

/// Either kind of loaded index.
#[derive(Debug, Clone, PartialEq)]
pub enum Index {
    Exact(InvertedIndex),
    Approx(ApproxIndex),
}

impl Index {
    pub fn doc_count(&self) -> usize {
        match self {
            Index::Exact(i) => i.doc_count(),
            Index::Approx(i) => i.doc_count(),
        }
    }

    pub fn vocab(&self) -> VocabSpec {
        match self {
            Index::Exact(i) => i.vocab(),
            Index::Approx(i) => i.vocab(),
        }
    }

    pub fn as_searcher(&self) -> &dyn crate::Searcher {
        match self {
            Index::Exact(i) => i,
            Index::Approx(i) => i,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        match self {
            Index::Exact(i) => write_exact(i),
            Index::Approx(i) => write_approx(i),
        }
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        read_index(bytes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        read_index(&bytes)
    }
}

fn put_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f32(out: &mut Vec<u8>, v: f32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn write_header(out: &mut Vec<u8>, kind: u8, vocab: VocabSpec, doc_ids: &[String]) {
    out.extend_from_slice(MAGIC);
    put_u16(out, VERSION);
    out.push(kind);
    out.push(0);
    put_u32(out, vocab.size());
    put_u32(out, doc_ids.len() as u32);
    for id in doc_ids {
        put_u32(out, id.len() as u32);
        out.extend_from_slice(id.as_bytes());
    }
}

/// Bytes an exact index spends outside its postings: header, doc-id table and
/// per-term counts.
pub fn exact_overhead_bytes(index: &InvertedIndex) -> usize {
    HEADER_BYTES
        + index.doc_ids().iter().map(|id| 4 + id.len()).sum::<usize>()
        + 4 * index.vocab().len()
}

pub fn write_exact(index: &InvertedIndex) -> Vec<u8> {
    let mut out = Vec::with_capacity(
        exact_overhead_bytes(index) + BYTES_PER_POSTING * index.total_postings(),
    );
    write_header(&mut out, KIND_EXACT, index.vocab, &index.doc_ids);
    for list in &index.postings {
        put_u32(&mut out, list.len() as u32);
    }
    for p in index.postings.iter().flatten() {
        put_u32(&mut out, p.doc);
        put_f32(&mut out, p.impact);
    }
    out
}

pub fn write_approx(index: &ApproxIndex) -> Vec<u8> {
    let mut out = Vec::new();
    write_header(&mut out, KIND_APPROX, index.vocab, &index.doc_ids);
    let p = index.params;
    put_f64(&mut out, p.alpha);
    let bs = if p.block_size == usize::MAX { u64::MAX } else { p.block_size as u64 };
    out.extend_from_slice(&bs.to_le_bytes());
    put_u16(&mut out, p.summary_levels);
    put_f64(&mut out, p.heap_factor);

    for blocks in &index.blocks {
        put_u32(&mut out, blocks.len() as u32);
    }
    for b in index.blocks.iter().flatten() {
        put_u32(&mut out, b.docs.len() as u32);
    }
    for b in index.blocks.iter().flatten() {
        for &d in &b.docs {
            put_u32(&mut out, d);
        }
    }
    for b in index.blocks.iter().flatten() {
        put_f32(&mut out, b.scale);
        put_u32(&mut out, b.summary_terms.len() as u32);
        for &t in &b.summary_terms {
            put_u32(&mut out, t);
        }
        out.extend_from_slice(&b.summary_codes);
    }
    for v in &index.forward {
        put_u32(&mut out, v.nnz() as u32);
    }
    for (t, w) in index.forward.iter().flat_map(|v| v.iter()) {
        put_u32(&mut out, t);
        put_f32(&mut out, w);
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format(format!("truncated while reading {what} at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    /// A count that must fit in the remaining bytes at `unit` bytes each.
    fn count(&mut self, unit: usize, what: &str) -> Result<usize> {
        let n = self.u32(what)? as usize;
        if n.saturating_mul(unit) > self.buf.len() - self.pos {
            return Err(Error::Format(format!("{what} {n} exceeds remaining file size")));
        }
        Ok(n)
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

pub fn read_index(bytes: &[u8]) -> Result<Index> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(bad("bad magic bytes (expected LCNX)"));
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(bad(format!("unsupported format version {version}")));
    }
    let kind = r.u8("kind")?;
    r.u8("reserved")?;
    let vocab = VocabSpec::new(r.u32("vocab size")?).map_err(|_| bad("vocabulary size is zero"))?;
    let doc_count = r.count(4, "doc count")?;
    let mut doc_ids = Vec::with_capacity(doc_count);
    for _ in 0..doc_count {
        let len = r.count(1, "doc id length")?;
        let raw = r.take(len, "doc id")?;
        let id = std::str::from_utf8(raw).map_err(|_| bad("doc id is not UTF-8"))?;
        doc_ids.push(id.to_string());
    }
    let index = match kind {
        KIND_EXACT => Index::Exact(read_exact_body(&mut r, vocab, doc_ids)?),
        KIND_APPROX => Index::Approx(read_approx_body(&mut r, vocab, doc_ids)?),
        other => return Err(bad(format!("unknown index kind {other}"))),
    };
    if r.pos != bytes.len() {
        return Err(bad(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(index)
}

fn read_exact_body(r: &mut Reader, vocab: VocabSpec, doc_ids: Vec<String>) -> Result<InvertedIndex> {
    let counts = (0..vocab.len())
        .map(|_| r.count(BYTES_PER_POSTING, "posting count"))
        .collect::<Result<Vec<_>>>()?;
    let doc_count = doc_ids.len() as u32;
    let mut postings = Vec::with_capacity(vocab.len());
    let mut seen = std::collections::HashSet::new();
    for (t, n) in counts.into_iter().enumerate() {
        let mut list = Vec::with_capacity(n);
        for _ in 0..n {
            let doc = r.u32("posting doc")?;
            let impact = r.f32("posting impact")?;
            if doc >= doc_count {
                return Err(bad(format!("posting doc ordinal {doc} out of range")));
            }
            if !(impact.is_finite() && impact > 0.0) {
                return Err(bad(format!("posting impact {impact} is not positive")));
            }
            if !seen.insert((t, doc)) {
                return Err(bad(format!("duplicate posting for term {t}, doc {doc}")));
            }
            list.push(Posting { doc, impact });
        }
        postings.push(list);
    }
    Ok(InvertedIndex {
        vocab,
        doc_ids,
        postings,
    })
}

fn read_approx_body(r: &mut Reader, vocab: VocabSpec, doc_ids: Vec<String>) -> Result<ApproxIndex> {
    let alpha = r.f64("alpha")?;
    let bs = r.u64("block size")?;
    let summary_levels = r.u16("summary levels")?;
    let heap_factor = r.f64("heap factor")?;
    let params = ApproxParams {
        alpha,
        block_size: if bs == u64::MAX { usize::MAX } else { bs as usize },
        summary_levels,
        heap_factor,
    };
    params.validate().map_err(|e| bad(e.to_string()))?;

    let per_term = (0..vocab.len())
        .map(|_| r.count(4, "block count"))
        .collect::<Result<Vec<_>>>()?;
    let total_blocks: usize = per_term.iter().sum();
    let sizes = (0..total_blocks)
        .map(|_| r.count(4, "block length"))
        .collect::<Result<Vec<_>>>()?;
    let doc_count = doc_ids.len() as u32;
    let mut flat = Vec::with_capacity(total_blocks);
    for &n in &sizes {
        let docs = (0..n)
            .map(|_| {
                let d = r.u32("block doc")?;
                if d >= doc_count {
                    return Err(bad(format!("block doc ordinal {d} out of range")));
                }
                Ok(d)
            })
            .collect::<Result<Vec<_>>>()?;
        flat.push(docs);
    }
    let mut blocks_flat = Vec::with_capacity(total_blocks);
    for docs in flat {
        let scale = r.f32("block scale")?;
        let nnz = r.count(5, "summary length")?;
        let terms = (0..nnz)
            .map(|_| r.u32("summary term"))
            .collect::<Result<Vec<_>>>()?;
        if terms.windows(2).any(|w| w[0] >= w[1]) || terms.last().is_some_and(|&t| t >= vocab.size()) {
            return Err(bad("summary terms are not sorted and in range"));
        }
        let codes = r.take(nnz, "summary codes")?.to_vec();
        if !(scale.is_finite() && scale >= 0.0) {
            return Err(bad("block scale is invalid"));
        }
        blocks_flat.push(Block {
            docs,
            summary_terms: terms,
            summary_codes: codes,
            scale,
        });
    }
    let mut it = blocks_flat.into_iter();
    let blocks = per_term
        .iter()
        .map(|&n| it.by_ref().take(n).collect())
        .collect();

    let nnzs = (0..doc_ids.len())
        .map(|_| r.count(BYTES_PER_POSTING, "forward length"))
        .collect::<Result<Vec<_>>>()?;
    let mut forward = Vec::with_capacity(doc_ids.len());
    for n in nnzs {
        let mut entries = Vec::with_capacity(n);
        for _ in 0..n {
            entries.push((r.u32("forward term")?, r.f32("forward weight")?));
        }
        let v = SparseVector::new(vocab, entries).map_err(|e| bad(format!("forward store: {e}")))?;
        forward.push(v);
    }
    Ok(ApproxIndex {
        vocab,
        doc_ids,
        forward,
        blocks,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::random_corpus;

    fn vocab(n: u32) -> VocabSpec {
        VocabSpec::new(n).unwrap()
    }

    #[test]
    fn exact_round_trip_is_bit_exact() {
        let idx = InvertedIndex::build(vocab(40), random_corpus(50, 40, 5, 1)).unwrap();
        let bytes = write_exact(&idx);
        assert_eq!(&bytes[..4], b"LCNX");
        assert_eq!(bytes.len(), exact_overhead_bytes(&idx) + 8 * idx.total_postings());
        let back = read_index(&bytes).unwrap();
        assert_eq!(back, Index::Exact(idx));
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn approx_round_trip_is_bit_exact() {
        for params in [
            ApproxParams::default(),
            ApproxParams { block_size: usize::MAX, ..ApproxParams::default() },
        ] {
            let idx = ApproxIndex::build(vocab(40), random_corpus(50, 40, 5, 2), params).unwrap();
            let bytes = write_approx(&idx);
            let back = read_index(&bytes).unwrap();
            assert_eq!(back, Index::Approx(idx));
            assert_eq!(back.to_bytes(), bytes);
        }
    }

    #[test]
    fn empty_index_round_trips() {
        let idx = InvertedIndex::build(vocab(3), Vec::new()).unwrap();
        let bytes = write_exact(&idx);
        assert_eq!(read_index(&bytes).unwrap(), Index::Exact(idx));
    }

    #[test]
    fn corruption_is_rejected() {
        let idx = InvertedIndex::build(vocab(10), random_corpus(5, 10, 3, 3)).unwrap();
        let bytes = write_exact(&idx);

        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(matches!(read_index(&magic), Err(Error::Format(_))));

        let mut version = bytes.clone();
        version[4] = 9;
        assert!(matches!(read_index(&version), Err(Error::Format(_))));

        let mut kind = bytes.clone();
        kind[6] = 7;
        assert!(matches!(read_index(&kind), Err(Error::Format(_))));

        assert!(matches!(read_index(&bytes[..bytes.len() - 3]), Err(Error::Format(_))));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(read_index(&extra), Err(Error::Format(_))));
        assert!(matches!(read_index(b"LC"), Err(Error::Format(_))));
    }
}
