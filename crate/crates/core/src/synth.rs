//! Seeded synthetic data: sparse corpora for index tests and benchmarks, and
//! separable token triplets for the toy training loop.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::objective::Triplet;
use crate::sparse::{SparseVector, VocabSpec};

fn random_vectors(prefix: &str, n: usize, vocab: u32, mean_nnz: usize, seed: u64) -> Vec<(String, SparseVector)> {
    let spec = VocabSpec::new(vocab).expect("positive vocabulary");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_nnz = (2 * mean_nnz).clamp(1, vocab as usize);
    (0..n)
        .map(|i| {
            let nnz = rng.gen_range(1..=max_nnz);
            let mut entries = Vec::with_capacity(nnz);
            let mut used = std::collections::HashSet::with_capacity(nnz);
            while entries.len() < nnz {
                // skewed towards low term ids so some posting lists get long
                let u: f64 = rng.gen();
                let t = ((u * u) * vocab as f64) as u32;
                let t = t.min(vocab - 1);
                if used.insert(t) {
                    entries.push((t, rng.gen_range(0.01f32..3.0)));
                }
            }
            let v = SparseVector::from_unsorted(spec, entries).expect("valid synthetic entries");
            (format!("{prefix}{i}"), v)
        })
        .collect()
}

/// `n` documents with ids `d0..`, term ids skewed towards the low end and
/// between 1 and `2 * mean_nnz` entries each.
pub fn random_corpus(n: usize, vocab: u32, mean_nnz: usize, seed: u64) -> Vec<(String, SparseVector)> {
    random_vectors("d", n, vocab, mean_nnz, seed)
}

/// Like [`random_corpus`] with ids `q0..`.
pub fn random_queries(n: usize, vocab: u32, mean_nnz: usize, seed: u64) -> Vec<(String, SparseVector)> {
    random_vectors("q", n, vocab, mean_nnz, seed)
}

/// Triplets over `families` disjoint token ranges of `family_size` tokens.
///
/// Each query draws two tokens from its family and its positive draws three
/// more from the same family, so query and positive share only that family.
/// Hard negatives are drawn from other families.
pub fn separable_triplets(
    families: usize,
    family_size: usize,
    per_family: usize,
    hard_negatives: usize,
    seed: u64,
) -> Vec<Triplet> {
    assert!(families >= 2 && family_size >= 2, "need two families of two tokens");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let family: Vec<Vec<u32>> = (0..families)
        .map(|f| ((f * family_size) as u32..((f + 1) * family_size) as u32).collect())
        .collect();
    let draw = |f: usize, n: usize, rng: &mut ChaCha8Rng| -> Vec<u32> {
        (0..n).map(|_| *family[f].choose(rng).unwrap()).collect()
    };
    let mut out = Vec::with_capacity(families * per_family);
    for _ in 0..per_family {
        for f in 0..families {
            let query = draw(f, 2, &mut rng);
            let positive = draw(f, 3, &mut rng);
            let negatives = (0..hard_negatives)
                .map(|_| {
                    let other = (f + rng.gen_range(1..families)) % families;
                    draw(other, 3, &mut rng)
                })
                .collect();
            out.push(Triplet {
                query,
                positive,
                negatives,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpora_are_seeded() {
        assert_eq!(random_corpus(10, 50, 4, 3), random_corpus(10, 50, 4, 3));
        assert_ne!(random_corpus(10, 50, 4, 3), random_corpus(10, 50, 4, 4));
        assert!(random_corpus(30, 50, 4, 3).iter().all(|(_, v)| (1..=8).contains(&v.nnz())));
    }

    #[test]
    fn triplets_stay_in_family() {
        let t = separable_triplets(4, 5, 3, 2, 9);
        assert_eq!(t.len(), 12);
        for tr in &t {
            let fam = tr.query[0] / 5;
            assert!(tr.query.iter().chain(&tr.positive).all(|&x| x / 5 == fam));
            assert!(tr.negatives.iter().flatten().all(|&x| x / 5 != fam));
        }
    }
}
