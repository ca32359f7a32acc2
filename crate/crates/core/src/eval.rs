//! TREC-format qrels and runs, nDCG@k and recall@k.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Graded relevance judgments keyed by query, then document.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    judgments: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a judgment; a repeated `(query, doc)` pair is an error.
    pub fn insert(&mut self, query: &str, doc: &str, rel: u32) -> Result<()> {
        let q = self.judgments.entry(query.to_string()).or_default();
        if q.insert(doc.to_string(), rel).is_some() {
            return Err(Error::contract(format!("duplicate judgment for ({query}, {doc})")));
        }
        Ok(())
    }

    pub fn get(&self, query: &str, doc: &str) -> Option<u32> {
        self.judgments.get(query)?.get(doc).copied()
    }

    pub fn query(&self, query: &str) -> Option<&BTreeMap<String, u32>> {
        self.judgments.get(query)
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.judgments.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `query iter doc rel` lines, sorted by query then doc.
    pub fn to_trec(&self) -> String {
        let mut s = String::new();
        for (q, docs) in &self.judgments {
            for (d, r) in docs {
                let _ = writeln!(s, "{q} 0 {d} {r}");
            }
        }
        s
    }
}

/// Ranked results per query, each list in descending score order with ties
/// broken by ascending doc id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunFile {
    rankings: BTreeMap<String, Vec<(String, f64)>>,
}

fn rank_order(a: &(String, f64), b: &(String, f64)) -> std::cmp::Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

impl RunFile {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets the ranking for `query`, sorting it into canonical order.
    pub fn set(&mut self, query: &str, mut ranked: Vec<(String, f64)>) -> Result<()> {
        if ranked.iter().any(|(_, s)| !s.is_finite()) {
            return Err(Error::contract(format!("non-finite score for query {query}")));
        }
        ranked.sort_by(rank_order);
        let mut ids: Vec<&str> = ranked.iter().map(|(d, _)| d.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::contract(format!("document {} ranked twice for query {query}", w[0])));
        }
        self.rankings.insert(query.to_string(), ranked);
        Ok(())
    }

    pub fn ranking(&self, query: &str) -> Option<&[(String, f64)]> {
        self.rankings.get(query).map(Vec::as_slice)
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.rankings.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.rankings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rankings.is_empty()
    }

    /// `query Q0 doc rank score tag` lines in canonical order.
    pub fn to_trec(&self, tag: &str) -> String {
        let mut s = String::new();
        for (q, ranked) in &self.rankings {
            for (i, (d, score)) in ranked.iter().enumerate() {
                let _ = writeln!(s, "{q} Q0 {d} {} {score} {tag}", i + 1);
            }
        }
        s
    }
}

/// A mean metric plus how many queries fed it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSummary {
    pub mean: f64,
    /// Queries included in the mean.
    pub evaluated: usize,
    /// Run queries with no judgments at all.
    pub missing_qrels: usize,
    /// Judged run queries skipped because nothing relevant exists.
    pub no_relevant: usize,
}

fn parse_fields<'a>(line: &'a str, lineno: usize, n: usize, what: &str) -> Result<Vec<&'a str>> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != n {
        return Err(Error::parse(
            lineno,
            format!("{what} line needs {n} fields, found {}", fields.len()),
        ));
    }
    Ok(fields)
}

/// Parses whitespace-separated `query_id iter doc_id rel` lines.
pub fn parse_qrels(text: &str) -> Result<Qrels> {
    let mut q = Qrels::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f = parse_fields(line, lineno, 4, "qrels")?;
        let rel: u32 = f[3]
            .parse()
            .map_err(|_| Error::parse(lineno, format!("relevance `{}` is not a nonnegative integer", f[3])))?;
        q.insert(f[0], f[2], rel)
            .map_err(|e| Error::parse(lineno, e.to_string()))?;
    }
    Ok(q)
}

/// Parses `query_id Q0 doc_id rank score tag` lines; the rank column is
/// ignored and each query's rows are re-sorted canonically.
pub fn parse_run(text: &str) -> Result<RunFile> {
    let mut grouped: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
    let mut seen = std::collections::HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f = parse_fields(line, lineno, 6, "run")?;
        f[3].parse::<i64>()
            .map_err(|_| Error::parse(lineno, format!("rank `{}` is not an integer", f[3])))?;
        let score: f64 = f[4]
            .parse()
            .ok()
            .filter(|s: &f64| s.is_finite())
            .ok_or_else(|| Error::parse(lineno, format!("score `{}` is not a finite number", f[4])))?;
        if !seen.insert((f[0].to_string(), f[2].to_string())) {
            return Err(Error::parse(lineno, format!("document {} repeated for query {}", f[2], f[0])));
        }
        grouped.entry(f[0].to_string()).or_default().push((f[2].to_string(), score));
    }
    let mut run = RunFile::new();
    for (q, ranked) in grouped {
        run.set(&q, ranked)?;
    }
    Ok(run)
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::contract("cutoff k must be at least 1"));
    }
    Ok(())
}

/// Per-query metric driver: `per_query` returns `None` for queries that must
/// be excluded (nothing relevant).
fn mean_over_run<F>(run: &RunFile, qrels: &Qrels, mut per_query: F) -> MetricSummary
where
    F: FnMut(&[(String, f64)], &BTreeMap<String, u32>) -> Option<f64>,
{
    let mut sum = 0.0;
    let mut summary = MetricSummary {
        mean: 0.0,
        evaluated: 0,
        missing_qrels: 0,
        no_relevant: 0,
    };
    for (q, ranked) in &run.rankings {
        let Some(judged) = qrels.query(q) else {
            summary.missing_qrels += 1;
            continue;
        };
        match per_query(ranked, judged) {
            Some(v) => {
                sum += v;
                summary.evaluated += 1;
            }
            None => summary.no_relevant += 1,
        }
    }
    if summary.evaluated > 0 {
        summary.mean = sum / summary.evaluated as f64;
    }
    summary
}

fn gain(rel: u32) -> f64 {
    2f64.powi(rel as i32) - 1.0
}

/// Mean nDCG@k with gain `2^rel - 1` and discount `log2(rank + 1)`.
///
/// Queries in the run without judgments, or whose judgments contain no
/// positive grade, are excluded. With nothing to average the mean is 0.
pub fn ndcg_at_k(run: &RunFile, qrels: &Qrels, k: usize) -> Result<MetricSummary> {
    check_k(k)?;
    Ok(mean_over_run(run, qrels, |ranked, judged| {
        let mut ideal: Vec<u32> = judged.values().copied().filter(|&r| r > 0).collect();
        ideal.sort_unstable_by(|a, b| b.cmp(a));
        let idcg: f64 = ideal
            .iter()
            .take(k)
            .enumerate()
            .map(|(i, &r)| gain(r) / ((i + 2) as f64).log2())
            .sum();
        if idcg == 0.0 {
            return None;
        }
        let dcg: f64 = ranked
            .iter()
            .take(k)
            .enumerate()
            .map(|(i, (d, _))| gain(judged.get(d).copied().unwrap_or(0)) / ((i + 2) as f64).log2())
            .sum();
        Some(dcg / idcg)
    }))
}

/// Mean fraction of relevant (`rel > 0`) documents found in the top `k`.
pub fn recall_at_k(run: &RunFile, qrels: &Qrels, k: usize) -> Result<MetricSummary> {
    check_k(k)?;
    Ok(mean_over_run(run, qrels, |ranked, judged| {
        let relevant = judged.values().filter(|&&r| r > 0).count();
        if relevant == 0 {
            return None;
        }
        let found = ranked
            .iter()
            .take(k)
            .filter(|(d, _)| judged.get(d).is_some_and(|&r| r > 0))
            .count();
        Some(found as f64 / relevant as f64)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn run_of(q: &str, docs: &[&str]) -> RunFile {
        let mut r = RunFile::new();
        let n = docs.len() as f64;
        r.set(q, docs.iter().enumerate().map(|(i, d)| (d.to_string(), n - i as f64)).collect())
            .unwrap();
        r
    }

    #[test]
    fn parse_single_lines() {
        let q = parse_qrels("q1 0 d7 2\n").unwrap();
        assert_eq!(q.get("q1", "d7"), Some(2));
        let r = parse_run("q1 Q0 d7 1 12.5 laconic\n").unwrap();
        assert_eq!(r.ranking("q1").unwrap(), &[("d7".to_string(), 12.5)]);
    }

    #[test]
    fn parse_errors_name_lines() {
        assert!(matches!(parse_qrels("q1 0 d1 1\nq1 0 d2\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_qrels("q1 0 d1 x\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_qrels("q1 0 d1 -1\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_qrels("q1 0 d1 1\n\nq1 0 d1 2\n"), Err(Error::Parse { line: 3, .. })));
        assert!(matches!(parse_run("q1 Q0 d1 1 nan t\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_run("q1 Q0 d1 1 1.0\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(
            parse_run("q1 Q0 d1 1 1.0 t\nq1 Q0 d1 2 0.5 t\n"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn run_is_resorted() {
        let r = parse_run("q Q0 b 1 1.0 t\nq Q0 c 2 3.0 t\nq Q0 a 3 1.0 t\n").unwrap();
        let ids: Vec<&str> = r.ranking("q").unwrap().iter().map(|(d, _)| d.as_str()).collect();
        assert_eq!(ids, ["c", "a", "b"]);
    }

    #[test]
    fn ndcg_extremes_and_worked_example() {
        let mut qrels = Qrels::new();
        qrels.insert("q", "rel", 1).unwrap();
        assert_eq!(ndcg_at_k(&run_of("q", &["rel", "x"]), &qrels, 10).unwrap().mean, 1.0);
        assert_eq!(ndcg_at_k(&run_of("q", &["x", "y"]), &qrels, 10).unwrap().mean, 0.0);

        let mut qrels = Qrels::new();
        qrels.insert("q", "d1", 3).unwrap();
        qrels.insert("q", "d2", 1).unwrap();
        let got = ndcg_at_k(&run_of("q", &["d2", "d1"]), &qrels, 2).unwrap().mean;
        let l3 = 3f64.log2();
        let expect = (1.0 + 7.0 / l3) / (7.0 + 1.0 / l3);
        assert!((got - expect).abs() < 1e-15);
        assert!((got - 0.70981).abs() < 1e-5);
    }

    #[test]
    fn exclusions_are_counted() {
        let mut qrels = Qrels::new();
        qrels.insert("judged", "d", 0).unwrap();
        let mut run = run_of("judged", &["d"]);
        run.set("unknown", vec![("d".into(), 1.0)]).unwrap();
        let s = ndcg_at_k(&run, &qrels, 10).unwrap();
        assert_eq!((s.evaluated, s.missing_qrels, s.no_relevant, s.mean), (0, 1, 1, 0.0));
        assert!(ndcg_at_k(&run, &qrels, 0).is_err());
    }

    #[test]
    fn recall_examples() {
        let mut qrels = Qrels::new();
        for d in ["a", "b", "c"] {
            qrels.insert("q", d, 1).unwrap();
        }
        qrels.insert("q", "z", 0).unwrap();
        assert_eq!(recall_at_k(&run_of("q", &["c", "a", "b"]), &qrels, 10).unwrap().mean, 1.0);
        let two = recall_at_k(&run_of("q", &["x", "a", "z", "c"]), &qrels, 10).unwrap().mean;
        assert!((two - 2.0 / 3.0).abs() < 1e-15);
        let mut empty = RunFile::new();
        empty.set("q", Vec::new()).unwrap();
        let s = recall_at_k(&empty, &qrels, 10).unwrap();
        assert_eq!((s.mean, s.evaluated), (0.0, 1));
    }

    fn run_and_qrels() -> impl Strategy<Value = (Vec<(usize, f64)>, Vec<u32>)> {
        (
            prop::collection::vec((0usize..20, -5.0f64..5.0), 0..15),
            prop::collection::vec(0u32..4, 20),
        )
    }

    fn build(ranked: &[(usize, f64)], rels: &[u32]) -> (RunFile, Qrels) {
        let mut dedup: BTreeMap<usize, f64> = BTreeMap::new();
        for &(d, s) in ranked {
            dedup.insert(d, s);
        }
        let mut run = RunFile::new();
        run.set("q", dedup.into_iter().map(|(d, s)| (format!("d{d}"), s)).collect())
            .unwrap();
        let mut qrels = Qrels::new();
        for (d, &r) in rels.iter().enumerate() {
            qrels.insert("q", &format!("d{d}"), r).unwrap();
        }
        (run, qrels)
    }

    proptest! {
        #[test]
        fn metrics_bounded_and_rank_only((ranked, rels) in run_and_qrels(), k in 1usize..12) {
            let (run, qrels) = build(&ranked, &rels);
            let n = ndcg_at_k(&run, &qrels, k).unwrap().mean;
            let r = recall_at_k(&run, &qrels, k).unwrap().mean;
            prop_assert!((0.0..=1.0 + 1e-12).contains(&n));
            prop_assert!((0.0..=1.0).contains(&r));

            // order-preserving transform of scores
            let mut warped = RunFile::new();
            warped.set("q", run.ranking("q").unwrap().iter().map(|(d, s)| (d.clone(), s.exp() * 3.0 + 1.0)).collect()).unwrap();
            prop_assert_eq!(ndcg_at_k(&warped, &qrels, k).unwrap().mean, n);

            // truncation below rank k
            let mut cut = RunFile::new();
            cut.set("q", run.ranking("q").unwrap().iter().take(k).cloned().collect()).unwrap();
            prop_assert_eq!(ndcg_at_k(&cut, &qrels, k).unwrap().mean, n);
            prop_assert_eq!(recall_at_k(&cut, &qrels, k).unwrap().mean, r);
        }

        #[test]
        fn trec_text_round_trips((ranked, rels) in run_and_qrels()) {
            // an empty ranking has no lines to write
            prop_assume!(!ranked.is_empty());
            let (run, qrels) = build(&ranked, &rels);
            prop_assert_eq!(parse_run(&run.to_trec("t")).unwrap(), run.clone());
            prop_assert_eq!(parse_qrels(&qrels.to_trec()).unwrap(), qrels);
        }
    }
}
