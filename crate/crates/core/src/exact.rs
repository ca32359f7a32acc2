//! Exact term-at-a-time retrieval over impact-sorted posting lists.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::sparse::{SparseVector, VocabSpec};
use crate::topk::{Hit, TopK};
use crate::Searcher;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posting {
    pub doc: u32,
    pub impact: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    pub(crate) vocab: VocabSpec,
    pub(crate) doc_ids: Vec<String>,
    /// One list per term id, sorted by descending impact then ascending doc.
    pub(crate) postings: Vec<Vec<Posting>>,
}

pub(crate) fn sort_by_impact(list: &mut [Posting]) {
    list.sort_by(|a, b| b.impact.total_cmp(&a.impact).then(a.doc.cmp(&b.doc)));
}

/// Assigns ordinals in input order, rejecting duplicate ids and foreign
/// vocabularies.
pub(crate) fn collect_corpus<I>(vocab: VocabSpec, corpus: I) -> Result<(Vec<String>, Vec<SparseVector>)>
where
    I: IntoIterator<Item = (String, SparseVector)>,
{
    let mut seen = HashSet::new();
    let mut ids = Vec::new();
    let mut vectors = Vec::new();
    for (id, v) in corpus {
        if v.vocab() != vocab {
            return Err(Error::contract(format!(
                "document `{id}` has vocabulary size {}, index expects {}",
                v.vocab().size(),
                vocab.size()
            )));
        }
        if !seen.insert(id.clone()) {
            return Err(Error::contract(format!("duplicate document id `{id}`")));
        }
        ids.push(id);
        vectors.push(v);
    }
    if ids.len() > u32::MAX as usize {
        return Err(Error::contract("too many documents for 32-bit ordinals"));
    }
    Ok((ids, vectors))
}

pub(crate) fn check_query(vocab: VocabSpec, query: &SparseVector, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::contract("k must be at least 1"));
    }
    if query.vocab() != vocab {
        return Err(Error::contract(format!(
            "query vocabulary size {} does not match index vocabulary {}",
            query.vocab().size(),
            vocab.size()
        )));
    }
    Ok(())
}

impl InvertedIndex {
    pub fn build<I>(vocab: VocabSpec, corpus: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, SparseVector)>,
    {
        let (doc_ids, vectors) = collect_corpus(vocab, corpus)?;
        let mut postings = vec![Vec::new(); vocab.len()];
        for (doc, v) in vectors.iter().enumerate() {
            for (t, w) in v.iter() {
                postings[t as usize].push(Posting {
                    doc: doc as u32,
                    impact: w,
                });
            }
        }
        for list in &mut postings {
            sort_by_impact(list);
        }
        Ok(InvertedIndex {
            vocab,
            doc_ids,
            postings,
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

    pub fn postings(&self, term: u32) -> &[Posting] {
        self.postings
            .get(term as usize)
            .map_or(&[][..], Vec::as_slice)
    }

    pub fn total_postings(&self) -> usize {
        self.postings.iter().map(Vec::len).sum()
    }

    /// Reassembles every document vector from the posting lists.
    pub fn reconstruct_all(&self) -> Vec<SparseVector> {
        let mut entries: Vec<Vec<(u32, f32)>> = vec![Vec::new(); self.doc_count()];
        for (t, list) in self.postings.iter().enumerate() {
            for p in list {
                entries[p.doc as usize].push((t as u32, p.impact));
            }
        }
        entries
            .into_iter()
            .map(|e| SparseVector::new(self.vocab, e).expect("postings hold valid entries"))
            .collect()
    }

    /// Top-`k` documents by exact inner product; only documents sharing at
    /// least one term with the query are returned.
    pub fn search(&self, query: &SparseVector, k: usize) -> Result<Vec<Hit>> {
        check_query(self.vocab, query, k)?;
        let mut acc = vec![0.0f64; self.doc_count()];
        let mut touched = Vec::new();
        // ascending term order keeps per-document summation identical to `dot`
        for (t, qw) in query.iter() {
            let qw = qw as f64;
            for p in &self.postings[t as usize] {
                let slot = &mut acc[p.doc as usize];
                if *slot == 0.0 {
                    touched.push(p.doc);
                }
                *slot += qw * p.impact as f64;
            }
        }
        let mut top = TopK::new(k);
        for d in touched {
            let s = acc[d as usize];
            if s > 0.0 {
                top.push(&self.doc_ids[d as usize], s);
            }
        }
        Ok(top.into_hits())
    }
}

pub fn build_exact<I>(vocab: VocabSpec, corpus: I) -> Result<InvertedIndex>
where
    I: IntoIterator<Item = (String, SparseVector)>,
{
    InvertedIndex::build(vocab, corpus)
}

pub fn search_exact(index: &InvertedIndex, query: &SparseVector, k: usize) -> Result<Vec<Hit>> {
    index.search(query, k)
}

impl Searcher for InvertedIndex {
    fn search(&self, query: &SparseVector, k: usize) -> Result<Vec<Hit>> {
        InvertedIndex::search(self, query, k)
    }

    fn doc_count(&self) -> usize {
        InvertedIndex::doc_count(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::random_corpus;
    use proptest::prelude::*;

    fn vocab(n: u32) -> VocabSpec {
        VocabSpec::new(n).unwrap()
    }

    fn sv(n: u32, e: &[(u32, f32)]) -> SparseVector {
        SparseVector::new(vocab(n), e.iter().copied()).unwrap()
    }

    /// Scores every document with `dot`, sorts by (f32 score desc, id asc).
    fn brute_force(docs: &[(String, SparseVector)], q: &SparseVector, k: usize) -> Vec<Hit> {
        let mut all: Vec<Hit> = docs
            .iter()
            .filter_map(|(id, d)| {
                let s = crate::sparse::dot(q, d).unwrap();
                (s > 0.0).then(|| Hit { id: id.clone(), score: s as f32 })
            })
            .collect();
        all.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
        all.truncate(k);
        all
    }

    #[test]
    fn empty_corpus_and_single_doc() {
        let idx = build_exact(vocab(8), Vec::new()).unwrap();
        assert_eq!(idx.doc_count(), 0);
        assert_eq!(idx.total_postings(), 0);

        let idx = build_exact(vocab(8), vec![("d0".to_string(), sv(8, &[(3, 2.0)]))]).unwrap();
        assert_eq!(idx.postings(3), &[Posting { doc: 0, impact: 2.0 }]);
        let hits = idx.search(&sv(8, &[(3, 1.5)]), 5).unwrap();
        assert_eq!(hits, vec![Hit { id: "d0".into(), score: 3.0 }]);
        assert!(idx.search(&sv(8, &[]), 5).unwrap().is_empty());
        assert!(idx.search(&sv(8, &[(4, 1.0)]), 5).unwrap().is_empty());
    }

    #[test]
    fn build_errors() {
        let dup = vec![
            ("a".to_string(), sv(4, &[(0, 1.0)])),
            ("a".to_string(), sv(4, &[(1, 1.0)])),
        ];
        assert!(matches!(build_exact(vocab(4), dup), Err(Error::Contract(_))));
        let foreign = vec![("a".to_string(), sv(5, &[(0, 1.0)]))];
        assert!(matches!(build_exact(vocab(4), foreign), Err(Error::Contract(_))));
        let idx = build_exact(vocab(4), Vec::new()).unwrap();
        assert!(idx.search(&sv(4, &[(0, 1.0)]), 0).is_err());
        assert!(idx.search(&sv(5, &[(0, 1.0)]), 1).is_err());
    }

    #[test]
    fn reconstruction_is_lossless() {
        let docs = random_corpus(100, 64, 12, 7);
        let idx = build_exact(vocab(64), docs.clone()).unwrap();
        let back = idx.reconstruct_all();
        for ((_, v), r) in docs.iter().zip(&back) {
            assert_eq!(v, r);
        }
        for list in &idx.postings {
            assert!(list.windows(2).all(|w| w[0].impact >= w[1].impact));
        }
    }

    #[test]
    fn matches_brute_force_on_random_corpus() {
        let docs = random_corpus(200, 128, 10, 1);
        let queries = random_corpus(25, 128, 6, 2);
        let idx = build_exact(vocab(128), docs.clone()).unwrap();
        for (_, q) in &queries {
            assert_eq!(idx.search(q, 10).unwrap(), brute_force(&docs, q, 10));
        }
    }

    #[test]
    fn ties_break_by_ascending_id() {
        let docs = vec![
            ("zeta".to_string(), sv(4, &[(1, 2.0)])),
            ("alpha".to_string(), sv(4, &[(1, 2.0)])),
            ("mid".to_string(), sv(4, &[(1, 2.0)])),
        ];
        let idx = build_exact(vocab(4), docs).unwrap();
        let ids: Vec<String> = idx
            .search(&sv(4, &[(1, 1.0)]), 2)
            .unwrap()
            .into_iter()
            .map(|h| h.id)
            .collect();
        assert_eq!(ids, ["alpha", "mid"]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn results_are_prefixes(seed in 0u64..1000, k in 1usize..15, extra in 0usize..10) {
            let docs = random_corpus(80, 32, 5, seed);
            let q = &random_corpus(1, 32, 4, seed + 1)[0].1;
            let idx = build_exact(vocab(32), docs).unwrap();
            let short = idx.search(q, k).unwrap();
            let long = idx.search(q, k + extra).unwrap();
            prop_assert_eq!(&long[..short.len()], &short[..]);
            prop_assert!(short.iter().all(|h| h.score > 0.0));
        }
    }
}
