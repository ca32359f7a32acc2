use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::Deserialize;

use laconic::bench::{estimate_memory_sparse, measure_qps, BenchReport, CSV_HEADER};
use laconic::encoder::{encode_sparse, ToyEncoderParams};
use laconic::eval::{ndcg_at_k, parse_qrels, parse_run, recall_at_k, MetricSummary, Qrels, RunFile};
use laconic::format::{exact_overhead_bytes, BYTES_PER_POSTING};
use laconic::objective::{metrics_csv, read_triplets_jsonl, train_toy};
use laconic::sparse::{read_vectors_jsonl, write_vectors_jsonl};
use laconic::{ApproxIndex, Index, InvertedIndex, Searcher, SparseVector, VocabSpec};

use crate::config::{EngineConfig, IndexKind};
use crate::error::{io_err, CliError, CliResult};

pub const RUN_TAG: &str = "laconic";

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| io_err(path, e))
}

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn in_file<T>(path: &Path, r: laconic::Result<T>) -> CliResult<T> {
    r.map_err(|e| CliError::from(e).in_file(path))
}

fn read_vectors(path: &Path, vocab: Option<VocabSpec>) -> CliResult<Vec<(String, SparseVector)>> {
    let records = in_file(path, read_vectors_jsonl(open(path)?, vocab))?;
    let mut seen = HashSet::with_capacity(records.len());
    if let Some((id, _)) = records.iter().find(|(id, _)| !seen.insert(id.as_str())) {
        return Err(CliError::Data(format!("{}: duplicate id `{id}`", path.display())));
    }
    Ok(records)
}

fn load_index(path: &Path) -> CliResult<Index> {
    in_file(path, Index::load(path))
}

pub fn index(cfg: &EngineConfig) -> CliResult<()> {
    let corpus_path = cfg.require("corpus", &cfg.corpus)?;
    let out = cfg.require("index", &cfg.index)?;
    let params = match cfg.kind {
        IndexKind::Exact => None,
        IndexKind::Approx => Some(cfg.approx_params()?),
    };
    let vocab = cfg.vocab.map(VocabSpec::new).transpose()?;
    let docs = read_vectors(corpus_path, vocab)?;
    let vocab = match vocab {
        Some(v) => v,
        None => docs.first().map_or(VocabSpec::new(1)?, |(_, v)| v.vocab()),
    };
    let total_postings: usize = docs.iter().map(|(_, v)| v.nnz()).sum();
    let index = match params {
        None => Index::Exact(in_file(corpus_path, InvertedIndex::build(vocab, docs))?),
        Some(params) => Index::Approx(in_file(corpus_path, ApproxIndex::build(vocab, docs, params))?),
    };
    let bytes = index.to_bytes();
    write_file(out, &bytes)?;

    println!("docs\t{}", index.doc_count());
    println!("vocab\t{}", vocab.size());
    println!("postings\t{total_postings}");
    match &index {
        Index::Exact(i) => {
            let est = estimate_memory_sparse(
                total_postings as u64,
                BYTES_PER_POSTING as u64,
                exact_overhead_bytes(i) as u64,
            );
            println!("estimated_memory_bytes\t{} ({:.6} GiB)", est.bytes, est.gib());
        }
        Index::Approx(i) => {
            println!("kept_postings\t{}", i.kept_postings());
            println!("blocks\t{}", i.block_count());
            let est = estimate_memory_sparse(
                (total_postings + i.kept_postings()) as u64,
                BYTES_PER_POSTING as u64,
                0,
            );
            println!("estimated_memory_bytes\t{} ({:.6} GiB)", est.bytes, est.gib());
        }
    }
    println!("file_bytes\t{}", bytes.len());
    Ok(())
}

/// Searches every query, sharded across `threads` workers, in input order.
fn search_all(
    searcher: &dyn Searcher,
    queries: &[(String, SparseVector)],
    k: usize,
    threads: usize,
) -> CliResult<RunFile> {
    let mut results = Vec::with_capacity(queries.len());
    if !queries.is_empty() {
        let shard = queries.len().div_ceil(threads.clamp(1, queries.len()));
        let shards: Vec<laconic::Result<Vec<_>>> = std::thread::scope(|s| {
            let handles: Vec<_> = queries
                .chunks(shard)
                .map(|chunk| s.spawn(move || chunk.iter().map(|(_, q)| searcher.search(q, k)).collect()))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("search worker panicked"))
                .collect()
        });
        for s in shards {
            results.extend(s?);
        }
    }
    let mut run = RunFile::new();
    for ((qid, _), hits) in queries.iter().zip(results) {
        run.set(qid, hits.into_iter().map(|h| (h.id, f64::from(h.score))).collect())?;
    }
    Ok(run)
}

pub fn search(cfg: &EngineConfig) -> CliResult<()> {
    let index_path = cfg.require("index", &cfg.index)?;
    let queries_path = cfg.require("queries", &cfg.queries)?;
    let run_path = cfg.require("run", &cfg.run)?;
    let index = load_index(index_path)?;
    let queries = read_vectors(queries_path, Some(index.vocab()))?;
    let run = search_all(index.as_searcher(), &queries, cfg.k, cfg.worker_threads()?)?;
    write_file(run_path, run.to_trec(RUN_TAG).as_bytes())?;
    println!("queries\t{}", queries.len());
    Ok(())
}

fn print_metric(name: &str, k: usize, m: &MetricSummary) {
    println!("{name}@{k}\t{:.4}", m.mean);
}

fn evaluate(run: &RunFile, qrels: &Qrels, k: usize) -> CliResult<()> {
    let ndcg = ndcg_at_k(run, qrels, k)?;
    let recall = recall_at_k(run, qrels, k)?;
    print_metric("ndcg", k, &ndcg);
    print_metric("recall", k, &recall);
    println!("evaluated\t{}", ndcg.evaluated);
    println!("missing_qrels\t{}", ndcg.missing_qrels);
    println!("no_relevant\t{}", ndcg.no_relevant);
    if ndcg.missing_qrels > 0 {
        eprintln!("warning: {} run queries have no judgments and were skipped", ndcg.missing_qrels);
    }
    if ndcg.no_relevant > 0 {
        eprintln!("warning: {} run queries have no relevant documents and were skipped", ndcg.no_relevant);
    }
    if ndcg.evaluated == 0 {
        eprintln!("warning: no query was evaluated; reporting 0.0000");
    }
    Ok(())
}

pub fn eval(cfg: &EngineConfig) -> CliResult<()> {
    let run_path = cfg.require("run", &cfg.run)?;
    let qrels_path = cfg.require("qrels", &cfg.qrels)?;
    let run = in_file(run_path, parse_run(&read_text(run_path)?))?;
    let qrels = in_file(qrels_path, parse_qrels(&read_text(qrels_path)?))?;
    evaluate(&run, &qrels, cfg.k)
}

pub fn bench(cfg: &EngineConfig) -> CliResult<()> {
    let index_path = cfg.require("index", &cfg.index)?;
    let queries_path = cfg.require("queries", &cfg.queries)?;
    let index = load_index(index_path)?;
    let queries = read_vectors(queries_path, Some(index.vocab()))?;
    let threads = cfg.worker_threads()?;
    let vectors: Vec<SparseVector> = queries.iter().map(|(_, v)| v.clone()).collect();
    let report: BenchReport = measure_qps(index.as_searcher(), &vectors, cfg.k, threads, cfg.warmup_iters)?;

    let effectiveness = match &cfg.qrels {
        Some(qrels_path) => {
            let qrels = in_file(qrels_path, parse_qrels(&read_text(qrels_path)?))?;
            let run = search_all(index.as_searcher(), &queries, cfg.k, threads)?;
            Some(ndcg_at_k(&run, &qrels, cfg.k)?.mean)
        }
        None => None,
    };

    let json = report.to_json();
    match &cfg.report {
        Some(p) => write_file(p, format!("{json}\n").as_bytes())?,
        None => println!("{json}"),
    }
    if let Some(csv) = &cfg.csv {
        let fresh = std::fs::metadata(csv).map_or(true, |m| m.len() == 0);
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(csv)
            .map_err(|e| io_err(csv, e))?;
        let mut text = String::new();
        if fresh {
            text.push_str(CSV_HEADER);
            text.push('\n');
        }
        text.push_str(&report.csv_row(&cfg.label, cfg.k, effectiveness));
        text.push('\n');
        f.write_all(text.as_bytes()).map_err(|e| io_err(csv, e))?;
    }
    eprintln!(
        "{}: {:.1} qps, p50 {:.3} ms, p99 {:.3} ms over {} queries on {} threads",
        cfg.label, report.queries_per_second, report.p50_ms, report.p99_ms, report.total_queries, report.thread_count
    );
    if let Some(e) = effectiveness {
        eprintln!("ndcg@{}\t{e:.4}", cfg.k);
    }
    Ok(())
}

pub fn train_toy_cmd(cfg: &EngineConfig) -> CliResult<()> {
    let train = cfg.train_config()?;
    let triplets_path = cfg.require("triplets", &cfg.triplets)?;
    let params_out = cfg.require("params_out", &cfg.params_out)?;
    let metrics_out = cfg.require("metrics_out", &cfg.metrics_out)?;
    let corpus = in_file(triplets_path, read_triplets_jsonl(open(triplets_path)?))?;
    let run = in_file(triplets_path, train_toy(&corpus, &train, cfg.seed))?;
    write_file(params_out, format!("{}\n", run.params.to_json()).as_bytes())?;
    write_file(metrics_out, metrics_csv(&run.metrics).as_bytes())?;
    println!("triplets\t{}", corpus.len());
    println!("initial_loss\t{:.6}", run.initial_loss);
    if let Some(last) = run.metrics.last() {
        println!("final_loss\t{:.6}", last.loss);
        println!("final_mean_q_nnz\t{:.2}", last.mean_q_nnz);
        println!("final_mean_d_nnz\t{:.2}", last.mean_d_nnz);
    }
    Ok(())
}

#[derive(Deserialize)]
struct TokenRecord {
    id: String,
    tokens: Vec<u32>,
}

pub fn encode(cfg: &EngineConfig) -> CliResult<()> {
    let params_path = cfg.require("params", &cfg.params)?;
    let input = cfg.require("input", &cfg.input)?;
    let output = cfg.require("output", &cfg.output)?;
    let params = in_file(params_path, ToyEncoderParams::load(params_path))?;

    let mut encoded = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in open(input)?.lines().enumerate() {
        let line = line.map_err(|e| io_err(input, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let at = |msg: String| CliError::Data(format!("{}: line {}: {msg}", input.display(), idx + 1));
        let rec: TokenRecord = serde_json::from_str(&line).map_err(|e| at(e.to_string()))?;
        if !seen.insert(rec.id.clone()) {
            return Err(at(format!("duplicate id `{}`", rec.id)));
        }
        let v = encode_sparse(&rec.tokens, &params).map_err(|e| at(e.to_string()))?;
        encoded.push((rec.id, v));
    }
    let mut buf = Vec::new();
    write_vectors_jsonl(&mut buf, encoded.iter().map(|(id, v)| (id.as_str(), v)))?;
    write_file(output, &buf)?;
    println!("encoded\t{}", encoded.len());
    Ok(())
}
