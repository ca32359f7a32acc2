//! Sparse vocabulary-space vectors and the scoring primitives built on them.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};

/// Size of the vocabulary a vector is expressed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VocabSpec(u32);

impl VocabSpec {
    pub fn new(size: u32) -> Result<Self> {
        if size == 0 {
            return Err(Error::contract("vocabulary size must be positive"));
        }
        Ok(VocabSpec(size))
    }

    pub fn size(self) -> u32 {
        self.0
    }

    pub fn len(self) -> usize {
        self.0 as usize
    }

    pub fn is_empty(self) -> bool {
        false
    }
}

/// A nonnegative vocabulary-indexed vector that stores only its positive
/// coordinates.
///
/// Term ids are strictly increasing and below the vocabulary size; every
/// stored weight is finite and strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    vocab: VocabSpec,
    terms: Vec<u32>,
    weights: Vec<f32>,
}

impl SparseVector {
    pub fn empty(vocab: VocabSpec) -> Self {
        SparseVector {
            vocab,
            terms: Vec::new(),
            weights: Vec::new(),
        }
    }

    /// Builds a vector from `(term, weight)` pairs, validating every invariant.
    pub fn new(vocab: VocabSpec, entries: impl IntoIterator<Item = (u32, f32)>) -> Result<Self> {
        let mut terms = Vec::new();
        let mut weights = Vec::new();
        for (term, weight) in entries {
            if term >= vocab.size() {
                return Err(Error::contract(format!(
                    "term id {term} out of range for vocabulary of size {}",
                    vocab.size()
                )));
            }
            if !(weight.is_finite() && weight > 0.0) {
                return Err(Error::contract(format!(
                    "weight for term {term} must be finite and positive, got {weight}"
                )));
            }
            if let Some(&last) = terms.last() {
                if term <= last {
                    return Err(Error::contract(format!(
                        "term ids must be strictly increasing ({last} then {term})"
                    )));
                }
            }
            terms.push(term);
            weights.push(weight);
        }
        Ok(SparseVector {
            vocab,
            terms,
            weights,
        })
    }

    /// Like [`SparseVector::new`] but accepts entries in any order and drops
    /// zero weights. Duplicate terms and negative weights are still rejected.
    pub fn from_unsorted(vocab: VocabSpec, mut entries: Vec<(u32, f32)>) -> Result<Self> {
        if let Some(&(term, w)) = entries.iter().find(|(_, w)| *w < 0.0 || !w.is_finite()) {
            return Err(Error::contract(format!(
                "weight for term {term} must be finite and nonnegative, got {w}"
            )));
        }
        entries.retain(|&(_, w)| w > 0.0);
        entries.sort_unstable_by_key(|&(t, _)| t);
        Self::new(vocab, entries)
    }

    /// Keeps exactly the strictly positive coordinates of a dense array.
    pub fn from_dense(vocab: VocabSpec, values: &[f32]) -> Result<Self> {
        if values.len() != vocab.len() {
            return Err(Error::contract(format!(
                "dense length {} does not match vocabulary size {}",
                values.len(),
                vocab.size()
            )));
        }
        let mut terms = Vec::new();
        let mut weights = Vec::new();
        for (j, &v) in values.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::contract(format!(
                    "dense value at {j} must be finite and nonnegative, got {v}"
                )));
            }
            if v > 0.0 {
                terms.push(j as u32);
                weights.push(v);
            }
        }
        Ok(SparseVector {
            vocab,
            terms,
            weights,
        })
    }

    /// Same as [`SparseVector::from_dense`] for 64-bit input; coordinates that
    /// round to zero in 32 bits are dropped.
    pub fn from_dense_f64(vocab: VocabSpec, values: &[f64]) -> Result<Self> {
        let narrowed: Vec<f32> = values.iter().map(|&v| v as f32).collect();
        Self::from_dense(vocab, &narrowed)
    }

    pub fn densify(&self) -> Vec<f32> {
        let mut out = vec![0.0; self.vocab.len()];
        for (&t, &w) in self.terms.iter().zip(&self.weights) {
            out[t as usize] = w;
        }
        out
    }

    pub fn vocab(&self) -> VocabSpec {
        self.vocab
    }

    pub fn terms(&self) -> &[u32] {
        &self.terms
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = (u32, f32)> + '_ {
        self.terms.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn nnz(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Weight at `term`, or 0 when absent.
    pub fn get(&self, term: u32) -> f32 {
        match self.terms.binary_search(&term) {
            Ok(i) => self.weights[i],
            Err(_) => 0.0,
        }
    }

    /// Inner product with `other`; errors when the vocabularies differ.
    pub fn dot(&self, other: &SparseVector) -> Result<f64> {
        dot(self, other)
    }
}

/// Sorted two-pointer merge over both supports, accumulated in f64.
pub fn dot(a: &SparseVector, b: &SparseVector) -> Result<f64> {
    if a.vocab != b.vocab {
        return Err(Error::contract(format!(
            "vocabulary mismatch in dot: {} vs {}",
            a.vocab.size(),
            b.vocab.size()
        )));
    }
    Ok(merge_dot(&a.terms, &a.weights, &b.terms, &b.weights))
}

pub(crate) fn merge_dot(at: &[u32], aw: &[f32], bt: &[u32], bw: &[f32]) -> f64 {
    let (mut i, mut j) = (0, 0);
    let mut acc = 0.0f64;
    while i < at.len() && j < bt.len() {
        match at[i].cmp(&bt[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                acc += aw[i] as f64 * bw[j] as f64;
                i += 1;
                j += 1;
            }
        }
    }
    acc
}

pub fn nnz(a: &SparseVector) -> usize {
    a.nnz()
}

/// One `{"id": ..., "vector": {...}}` record of the JSONL exchange format.
#[derive(Debug, Deserialize)]
struct RawRecord {
    id: String,
    vector: HashMap<String, f32>,
}

struct VectorMap<'a>(&'a SparseVector);

impl Serialize for VectorMap<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.nnz()))?;
        for (t, w) in self.0.iter() {
            map.serialize_entry(&t.to_string(), &w)?;
        }
        map.end()
    }
}

#[derive(Serialize)]
struct OutRecord<'a> {
    id: &'a str,
    vector: VectorMap<'a>,
}

/// Reads sparse vectors from JSONL.
///
/// When `vocab` is `None` the vocabulary size is inferred as one past the
/// largest term id seen (at least 1). Blank lines are skipped; zero weights
/// are dropped.
pub fn read_vectors_jsonl<R: BufRead>(
    reader: R,
    vocab: Option<VocabSpec>,
) -> Result<Vec<(String, SparseVector)>> {
    let mut raw = Vec::new();
    let mut max_term: Option<u32> = None;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::parse(lineno, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RawRecord =
            serde_json::from_str(&line).map_err(|e| Error::parse(lineno, e.to_string()))?;
        let mut entries = Vec::with_capacity(rec.vector.len());
        for (key, w) in rec.vector {
            let term: u32 = key
                .parse()
                .map_err(|_| Error::parse(lineno, format!("term id `{key}` is not a u32")))?;
            if !w.is_finite() || w < 0.0 {
                return Err(Error::parse(
                    lineno,
                    format!("weight {w} for term {term} is not finite and nonnegative"),
                ));
            }
            max_term = Some(max_term.map_or(term, |m| m.max(term)));
            entries.push((term, w));
        }
        raw.push((lineno, rec.id, entries));
    }
    let vocab = match vocab {
        Some(v) => v,
        None => VocabSpec::new(max_term.map_or(1, |m| m + 1))?,
    };
    raw.into_iter()
        .map(|(lineno, id, entries)| {
            SparseVector::from_unsorted(vocab, entries)
                .map(|v| (id, v))
                .map_err(|e| Error::parse(lineno, e.to_string()))
        })
        .collect()
}

pub fn write_vectors_jsonl<'a, W, I>(mut writer: W, records: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = (&'a str, &'a SparseVector)>,
{
    for (id, v) in records {
        let rec = OutRecord {
            id,
            vector: VectorMap(v),
        };
        serde_json::to_writer(&mut writer, &rec)
            .map_err(|e| Error::io("<jsonl output>", e.into()))?;
        writer
            .write_all(b"\n")
            .map_err(|e| Error::io("<jsonl output>", e))?;
    }
    Ok(())
}
