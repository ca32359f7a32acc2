use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

/// One ranked search result.
#[derive(Debug, Clone, PartialEq)]
pub struct Hit {
    pub id: String,
    pub score: f32,
}

/// Heap entry ordered so that "greater" means "ranks higher": larger score,
/// then smaller id.
#[derive(Debug, Clone, Copy)]
struct Entry<'a> {
    score: f32,
    exact: f64,
    id: &'a str,
}

impl PartialEq for Entry<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry<'_> {}

impl PartialOrd for Entry<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.id.cmp(self.id))
    }
}

/// Bounded min-heap keeping the `k` best `(score, id)` pairs.
///
/// Ranking uses the score as returned to callers (f32), with ties broken by
/// ascending id.
pub(crate) struct TopK<'a> {
    k: usize,
    heap: BinaryHeap<Reverse<Entry<'a>>>,
}

impl<'a> TopK<'a> {
    pub fn new(k: usize) -> Self {
        TopK {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    pub fn push(&mut self, id: &'a str, exact: f64) {
        let e = Entry {
            score: exact as f32,
            exact,
            id,
        };
        if self.heap.len() < self.k {
            self.heap.push(Reverse(e));
        } else if let Some(Reverse(worst)) = self.heap.peek() {
            if e > *worst {
                self.heap.pop();
                self.heap.push(Reverse(e));
            }
        }
    }

    pub fn is_full(&self) -> bool {
        self.heap.len() >= self.k
    }

    /// Exact score of the current k-th best entry, once the heap is full.
    pub fn threshold(&self) -> Option<f64> {
        if self.is_full() {
            self.heap.peek().map(|Reverse(e)| e.exact)
        } else {
            None
        }
    }

    pub fn into_hits(self) -> Vec<Hit> {
        let mut entries: Vec<Entry> = self.heap.into_iter().map(|Reverse(e)| e).collect();
        entries.sort_by(|a, b| b.cmp(a));
        entries
            .into_iter()
            .map(|e| Hit {
                id: e.id.to_string(),
                score: e.score,
            })
            .collect()
    }
}
