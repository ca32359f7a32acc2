//! Contrastive ranking loss, FLOPs sparsity regularizer, regularizer warmup
//! and the two-phase toy training loop.

use std::fmt::Write as _;
use std::io::BufRead;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{
    splade_pool_backward, splade_pool_dense, toy_encode, toy_encode_backward, ToyEncoderParams,
};
use crate::error::{Error, Result};
use crate::sparse::SparseVector;

/// Query-by-candidate score matrix with one positive column per row.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    rows: usize,
    cols: usize,
    scores: Vec<f64>,
    positive_index: Vec<usize>,
}

impl ScoreMatrix {
    pub fn new(rows: usize, cols: usize, scores: Vec<f64>, positive_index: Vec<usize>) -> Result<Self> {
        if rows == 0 {
            return Err(Error::contract("score matrix needs at least one row"));
        }
        if scores.len() != rows * cols || positive_index.len() != rows {
            return Err(Error::contract("score matrix shape mismatch"));
        }
        if let Some((row, &p)) = positive_index.iter().enumerate().find(|(_, &p)| p >= cols) {
            return Err(Error::contract(format!(
                "positive index {p} out of range for row {row} with {cols} candidates"
            )));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::contract("scores must be finite"));
        }
        Ok(ScoreMatrix {
            rows,
            cols,
            scores,
            positive_index,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], positive_index: Vec<usize>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::contract("ragged score rows"));
        }
        Self::new(rows.len(), cols, rows.concat(), positive_index)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.scores[i * self.cols..(i + 1) * self.cols]
    }

    pub fn positive_index(&self) -> &[usize] {
        &self.positive_index
    }
}

/// Mean over rows of `logsumexp(row) - row[positive]`.
pub fn infonce_loss(scores: &ScoreMatrix) -> Result<f64> {
    infonce_loss_and_grad(scores).map(|(l, _)| l)
}

/// Loss plus its gradient with respect to every score (row-major).
pub fn infonce_loss_and_grad(scores: &ScoreMatrix) -> Result<(f64, Vec<f64>)> {
    if scores.cols < 2 {
        return Err(Error::contract(
            "each query needs at least one negative candidate",
        ));
    }
    let n = scores.rows as f64;
    let mut total = 0.0;
    let mut grad = vec![0.0; scores.scores.len()];
    for i in 0..scores.rows {
        let row = scores.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|s| (s - max).exp()).sum();
        let lse = max + sum.ln();
        let pos = scores.positive_index[i];
        total += lse - row[pos];
        let g = &mut grad[i * scores.cols..(i + 1) * scores.cols];
        for (gc, s) in g.iter_mut().zip(row) {
            *gc = (s - lse).exp() / n;
        }
        g[pos] -= 1.0 / n;
    }
    Ok((total / n, grad))
}

/// Sum over vocabulary terms of the squared batch-mean activation.
pub fn flops_reg(batch: &[SparseVector]) -> Result<f64> {
    let first = batch
        .first()
        .ok_or_else(|| Error::contract("flops regularizer needs a nonempty batch"))?;
    let vocab = first.vocab();
    if batch.iter().any(|v| v.vocab() != vocab) {
        return Err(Error::contract("flops regularizer batch mixes vocabularies"));
    }
    let mut sums = vec![0.0f64; vocab.len()];
    for v in batch {
        for (t, w) in v.iter() {
            sums[t as usize] += w as f64;
        }
    }
    let b = batch.len() as f64;
    Ok(sums.iter().map(|s| (s / b) * (s / b)).sum())
}

/// Dense form of [`flops_reg`] with the gradient for every activation.
pub(crate) fn flops_reg_dense_and_grad(batch: &[Vec<f64>]) -> (f64, Vec<Vec<f64>>) {
    let width = batch[0].len();
    let b = batch.len() as f64;
    let mut means = vec![0.0f64; width];
    for row in batch {
        for (m, a) in means.iter_mut().zip(row) {
            *m += a;
        }
    }
    means.iter_mut().for_each(|m| *m /= b);
    let reg = means.iter().map(|m| m * m).sum();
    let g: Vec<f64> = means.iter().map(|m| 2.0 * m / b).collect();
    (reg, vec![g; batch.len()])
}

/// Regularizer ramp `min(1, (step / horizon)^2)`; 1 when `horizon == 0`.
pub fn warmup(step: u64, horizon: u64) -> f64 {
    warmup_with_exponent(step, horizon, 2.0)
}

pub fn warmup_with_exponent(step: u64, horizon: u64, exponent: f64) -> f64 {
    if horizon == 0 || step >= horizon {
        return 1.0;
    }
    (step as f64 / horizon as f64).powf(exponent).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// In-batch negatives only.
    PreFinetune,
    /// In-batch plus mined hard negatives.
    Finetune,
}

impl std::str::FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pre_finetune" | "pre-finetune" => Ok(Phase::PreFinetune),
            "finetune" => Ok(Phase::Finetune),
            other => Err(Error::config(
                "phase",
                format!("expected `pre_finetune` or `finetune`, got `{other}`"),
            )),
        }
    }
}

/// Hyperparameters for one training phase plus the toy encoder's shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lambda_q: f64,
    pub lambda_d: f64,
    pub warmup_steps: u64,
    pub warmup_exponent: f64,
    pub phase: Phase,
    pub hard_negatives_per_query: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub cosine_decay: bool,
    pub temperature: f64,
    /// Embedding width of the toy encoder.
    pub dim: usize,
    /// Output vocabulary size (columns of the projection).
    pub vocab: usize,
    /// Input token vocabulary; inferred from the corpus when `None`.
    pub token_vocab: Option<usize>,
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda_q: 1e-3,
            lambda_d: 1e-3,
            warmup_steps: 0,
            warmup_exponent: 2.0,
            phase: Phase::PreFinetune,
            hard_negatives_per_query: 0,
            batch_size: 8,
            epochs: 50,
            learning_rate: 0.1,
            cosine_decay: false,
            temperature: 1.0,
            dim: 16,
            vocab: 64,
            token_vocab: None,
            init_scale: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let nonneg = |field: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::config(field, format!("must be a finite value >= 0, got {v}")))
            }
        };
        let positive = |field: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(field, format!("must be a finite value > 0, got {v}")))
            }
        };
        nonneg("lambda_q", self.lambda_q)?;
        nonneg("lambda_d", self.lambda_d)?;
        positive("warmup_exponent", self.warmup_exponent)?;
        positive("learning_rate", self.learning_rate)?;
        positive("temperature", self.temperature)?;
        positive("init_scale", self.init_scale)?;
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be >= 1"));
        }
        if self.dim == 0 {
            return Err(Error::config("dim", "must be >= 1"));
        }
        if self.vocab == 0 {
            return Err(Error::config("vocab", "must be >= 1"));
        }
        if self.token_vocab == Some(0) {
            return Err(Error::config("token_vocab", "must be >= 1"));
        }
        if self.phase == Phase::PreFinetune && self.hard_negatives_per_query != 0 {
            return Err(Error::config(
                "hard_negatives_per_query",
                "pre_finetune uses in-batch negatives only; must be 0",
            ));
        }
        Ok(())
    }

    fn hard_negatives(&self) -> usize {
        match self.phase {
            Phase::PreFinetune => 0,
            Phase::Finetune => self.hard_negatives_per_query,
        }
    }
}

/// Ranking loss plus the warmed-up, weighted FLOPs penalties on query and
/// document activations.
pub fn total_loss(
    scores: &ScoreMatrix,
    q_acts: &[SparseVector],
    d_acts: &[SparseVector],
    cfg: &TrainConfig,
    step: u64,
) -> Result<f64> {
    let rank = infonce_loss(scores)?;
    if cfg.lambda_q == 0.0 && cfg.lambda_d == 0.0 {
        return Ok(rank);
    }
    let factor = warmup_with_exponent(step, cfg.warmup_steps, cfg.warmup_exponent);
    let reg = cfg.lambda_q * flops_reg(q_acts)? + cfg.lambda_d * flops_reg(d_acts)?;
    Ok(rank + factor * reg)
}

/// One `(query, positive, hard negatives)` training example over token ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triplet {
    pub query: Vec<u32>,
    pub positive: Vec<u32>,
    #[serde(default)]
    pub negatives: Vec<Vec<u32>>,
}

pub fn read_triplets_jsonl<R: BufRead>(reader: R) -> Result<Vec<Triplet>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::parse(lineno, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let t: Triplet =
            serde_json::from_str(&line).map_err(|e| Error::parse(lineno, e.to_string()))?;
        if t.query.is_empty() || t.positive.is_empty() || t.negatives.iter().any(Vec::is_empty) {
            return Err(Error::parse(lineno, "token sequences must be nonempty"));
        }
        out.push(t);
    }
    Ok(out)
}

pub fn triplets_to_jsonl(triplets: &[Triplet]) -> String {
    let mut s = String::new();
    for t in triplets {
        s.push_str(&serde_json::to_string(t).expect("triplet serializes"));
        s.push('\n');
    }
    s
}

/// Loss and parameter gradient for one batch.
#[derive(Debug, Clone)]
pub struct BatchObjective {
    pub loss: f64,
    pub grads: ToyEncoderParams,
}

fn encode_dense(tokens: &[u32], params: &ToyEncoderParams) -> Result<(crate::encoder::LogitMatrix, Vec<f64>)> {
    let h = toy_encode(tokens, params)?;
    let a = splade_pool_dense(&h);
    Ok((h, a))
}

/// Forward and backward pass of the full objective over a batch of triplets.
///
/// Candidates are every positive in the batch followed by each query's hard
/// negatives (finetune only); query `i`'s positive sits in column `i` and
/// every other candidate is a negative for it.
pub fn batch_objective(
    params: &ToyEncoderParams,
    batch: &[&Triplet],
    cfg: &TrainConfig,
    step: u64,
) -> Result<BatchObjective> {
    if batch.is_empty() {
        return Err(Error::contract("empty training batch"));
    }
    let hard = cfg.hard_negatives();
    let mut doc_tokens: Vec<&[u32]> = batch.iter().map(|t| t.positive.as_slice()).collect();
    for t in batch {
        if t.negatives.len() < hard {
            return Err(Error::contract(format!(
                "triplet carries {} hard negatives, {hard} required",
                t.negatives.len()
            )));
        }
        doc_tokens.extend(t.negatives[..hard].iter().map(Vec::as_slice));
    }

    let queries = batch
        .iter()
        .map(|t| encode_dense(&t.query, params))
        .collect::<Result<Vec<_>>>()?;
    let docs = doc_tokens
        .iter()
        .map(|d| encode_dense(d, params))
        .collect::<Result<Vec<_>>>()?;

    let (nq, nd) = (queries.len(), docs.len());
    let inv_temp = 1.0 / cfg.temperature;
    let mut scores = Vec::with_capacity(nq * nd);
    for (_, q) in &queries {
        for (_, d) in &docs {
            scores.push(q.iter().zip(d).map(|(a, b)| a * b).sum::<f64>() * inv_temp);
        }
    }
    let sm = ScoreMatrix::new(nq, nd, scores, (0..nq).collect())?;
    let (rank, dscores) = infonce_loss_and_grad(&sm)?;

    let width = params.vocab;
    let mut gq = vec![vec![0.0; width]; nq];
    let mut gd = vec![vec![0.0; width]; nd];
    for i in 0..nq {
        for c in 0..nd {
            let g = dscores[i * nd + c] * inv_temp;
            if g == 0.0 {
                continue;
            }
            let (qa, da) = (&queries[i].1, &docs[c].1);
            for j in 0..width {
                gq[i][j] += g * da[j];
                gd[c][j] += g * qa[j];
            }
        }
    }

    let mut loss = rank;
    let factor = warmup_with_exponent(step, cfg.warmup_steps, cfg.warmup_exponent);
    for (lambda, acts, grads) in [
        (cfg.lambda_q, &queries, &mut gq),
        (cfg.lambda_d, &docs, &mut gd),
    ] {
        if lambda == 0.0 {
            continue;
        }
        let dense: Vec<Vec<f64>> = acts.iter().map(|(_, a)| a.clone()).collect();
        let (reg, rg) = flops_reg_dense_and_grad(&dense);
        let w = factor * lambda;
        loss += w * reg;
        for (g, r) in grads.iter_mut().zip(rg) {
            for (gj, rj) in g.iter_mut().zip(r) {
                *gj += w * rj;
            }
        }
    }

    let mut grads = ToyEncoderParams::zeros(params.token_vocab, params.dim, params.vocab)?;
    for (((h, _), g), t) in queries.iter().zip(&gq).zip(batch) {
        toy_encode_backward(&t.query, params, &splade_pool_backward(h, g)?, &mut grads)?;
    }
    for (((h, _), g), tokens) in docs.iter().zip(&gd).zip(&doc_tokens) {
        toy_encode_backward(tokens, params, &splade_pool_backward(h, g)?, &mut grads)?;
    }
    Ok(BatchObjective { loss, grads })
}

/// Per-epoch training metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean batch objective over the epoch.
    pub loss: f64,
    pub mean_q_nnz: f64,
    pub mean_d_nnz: f64,
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub params: ToyEncoderParams,
    /// Objective of the initial parameters over the first epoch's batches.
    pub initial_loss: f64,
    pub metrics: Vec<EpochMetrics>,
}

pub fn metrics_csv(metrics: &[EpochMetrics]) -> String {
    let mut s = String::from("epoch,loss,mean_q_nnz,mean_d_nnz\n");
    for m in metrics {
        let _ = writeln!(s, "{},{},{},{}", m.epoch, m.loss, m.mean_q_nnz, m.mean_d_nnz);
    }
    s
}

fn corpus_token_vocab(corpus: &[Triplet]) -> usize {
    corpus
        .iter()
        .flat_map(|t| {
            t.query
                .iter()
                .chain(&t.positive)
                .chain(t.negatives.iter().flatten())
        })
        .copied()
        .max()
        .map_or(1, |m| m as usize + 1)
}

/// Initial parameters `train_toy` starts from for this corpus, config and seed.
pub fn initial_params(corpus: &[Triplet], cfg: &TrainConfig, seed: u64) -> Result<ToyEncoderParams> {
    let token_vocab = cfg.token_vocab.unwrap_or_else(|| corpus_token_vocab(corpus));
    ToyEncoderParams::seeded(token_vocab, cfg.dim, cfg.vocab, cfg.init_scale, seed)
}

fn mean_nnz(seqs: &[&[u32]], params: &ToyEncoderParams) -> Result<f64> {
    if seqs.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0usize;
    for s in seqs {
        let (_, a) = encode_dense(s, params)?;
        total += a.iter().filter(|&&x| x as f32 > 0.0).count();
    }
    Ok(total as f64 / seqs.len() as f64)
}

fn epoch_batches(order: &[usize], batch_size: usize, hard: usize) -> Vec<&[usize]> {
    // a lone query with no hard negatives has nothing to contrast against
    order
        .chunks(batch_size)
        .filter(|c| c.len() >= 2 || hard > 0)
        .collect()
}

/// Mean batch objective without updating, stepping warmup per batch.
fn mean_objective(
    params: &ToyEncoderParams,
    corpus: &[Triplet],
    batches: &[&[usize]],
    cfg: &TrainConfig,
) -> Result<f64> {
    if batches.is_empty() {
        return Ok(f64::NAN);
    }
    let mut sum = 0.0;
    for (step, b) in batches.iter().enumerate() {
        let refs: Vec<&Triplet> = b.iter().map(|&i| &corpus[i]).collect();
        sum += batch_objective(params, &refs, cfg, step as u64)?.loss;
    }
    Ok(sum / batches.len() as f64)
}

/// Plain SGD on [`batch_objective`], deterministic for a given seed.
pub fn train_toy(corpus: &[Triplet], cfg: &TrainConfig, seed: u64) -> Result<TrainRun> {
    if corpus.is_empty() {
        return Err(Error::contract("training corpus is empty"));
    }
    cfg.validate()?;
    let hard = cfg.hard_negatives();
    if let Some(t) = corpus.iter().find(|t| t.negatives.len() < hard) {
        return Err(Error::contract(format!(
            "finetune phase needs {hard} hard negatives per query, found a triplet with {}",
            t.negatives.len()
        )));
    }
    let mut params = initial_params(corpus, cfg, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9e37_79b9_7f4a_7c15));

    let queries: Vec<&[u32]> = corpus.iter().map(|t| t.query.as_slice()).collect();
    let docs: Vec<&[u32]> = corpus
        .iter()
        .flat_map(|t| {
            std::iter::once(t.positive.as_slice()).chain(t.negatives[..hard].iter().map(Vec::as_slice))
        })
        .collect();

    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let batches_per_epoch = epoch_batches(&order, cfg.batch_size, hard).len().max(1);
    let total_steps = (batches_per_epoch * cfg.epochs) as f64;
    let mut initial_loss = f64::NAN;
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut step = 0u64;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let batches = epoch_batches(&order, cfg.batch_size, hard);
        if batches.is_empty() {
            return Err(Error::contract(
                "no batch has a negative candidate; raise batch_size or add hard negatives",
            ));
        }
        if epoch == 1 {
            initial_loss = mean_objective(&params, corpus, &batches, cfg)?;
        }
        let mut loss_sum = 0.0;
        for b in &batches {
            let refs: Vec<&Triplet> = b.iter().map(|&i| &corpus[i]).collect();
            let obj = batch_objective(&params, &refs, cfg, step)?;
            loss_sum += obj.loss;
            let lr = if cfg.cosine_decay {
                cfg.learning_rate * 0.5 * (1.0 + (std::f64::consts::PI * step as f64 / total_steps).cos())
            } else {
                cfg.learning_rate
            };
            for (p, g) in params
                .embedding
                .iter_mut()
                .chain(params.projection.iter_mut())
                .zip(obj.grads.embedding.iter().chain(&obj.grads.projection))
            {
                *p -= lr * g;
            }
            step += 1;
        }
        metrics.push(EpochMetrics {
            epoch,
            loss: loss_sum / batches.len() as f64,
            mean_q_nnz: mean_nnz(&queries, &params)?,
            mean_d_nnz: mean_nnz(&docs, &params)?,
        });
    }
    if cfg.epochs == 0 {
        initial_loss = mean_objective(&params, corpus, &epoch_batches(&order, cfg.batch_size, hard), cfg)?;
    }
    Ok(TrainRun {
        params,
        initial_loss,
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::VocabSpec;
    use proptest::prelude::*;

    fn sv(size: u32, entries: &[(u32, f32)]) -> SparseVector {
        SparseVector::new(VocabSpec::new(size).unwrap(), entries.iter().copied()).unwrap()
    }

    #[test]
    fn infonce_examples() {
        let m = ScoreMatrix::from_rows(&[vec![0.7; 4]], vec![0]).unwrap();
        assert!((infonce_loss(&m).unwrap() - 4f64.ln()).abs() < 1e-12);

        let m = ScoreMatrix::from_rows(&[vec![10.0, 0.0]], vec![0]).unwrap();
        let closed = (1.0 + (-10f64).exp()).ln();
        assert!((infonce_loss(&m).unwrap() - closed).abs() < 1e-15);
        assert!((closed - 4.53989e-5).abs() < 1e-10);

        let m = ScoreMatrix::from_rows(&[vec![1.0; 8], vec![-3.0; 8]], vec![2, 5]).unwrap();
        assert!((infonce_loss(&m).unwrap() - 8f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn infonce_errors() {
        assert!(ScoreMatrix::from_rows(&[vec![1.0, 2.0]], vec![2]).is_err());
        let single = ScoreMatrix::from_rows(&[vec![1.0]], vec![0]).unwrap();
        assert!(matches!(infonce_loss(&single), Err(Error::Contract(_))));
    }

    #[test]
    fn flops_examples() {
        let v = VocabSpec::new(4).unwrap();
        assert_eq!(
            flops_reg(&[SparseVector::empty(v), SparseVector::empty(v)]).unwrap(),
            0.0
        );
        assert_eq!(flops_reg(&[sv(4, &[(2, 3.0)])]).unwrap(), 9.0);
        assert_eq!(
            flops_reg(&[sv(4, &[(0, 1.0)]), sv(4, &[(1, 1.0)])]).unwrap(),
            0.5
        );
        assert!(flops_reg(&[]).is_err());
        assert!(flops_reg(&[sv(4, &[]), sv(5, &[])]).is_err());
    }

    #[test]
    fn warmup_examples() {
        assert_eq!(warmup(0, 100), 0.0);
        assert_eq!(warmup(50, 100), 0.25);
        assert_eq!(warmup(100, 100), 1.0);
        assert_eq!(warmup(1000, 100), 1.0);
        assert_eq!(warmup(0, 0), 1.0);
        assert_eq!(warmup_with_exponent(50, 100, 1.0), 0.5);
    }

    #[test]
    fn total_loss_cases() {
        let m = ScoreMatrix::from_rows(&[vec![2.0, 1.0, 0.5]], vec![0]).unwrap();
        let q = [sv(4, &[(0, 1.0), (3, 2.0)])];
        let d = [sv(4, &[(1, 0.5)]), sv(4, &[(1, 1.5), (2, 1.0)])];
        let rank = infonce_loss(&m).unwrap();
        let (rq, rd) = (flops_reg(&q).unwrap(), flops_reg(&d).unwrap());

        let off = TrainConfig { lambda_q: 0.0, lambda_d: 0.0, ..TrainConfig::default() };
        assert_eq!(total_loss(&m, &q, &d, &off, 7).unwrap(), rank);

        let on = TrainConfig { lambda_q: 1e-3, lambda_d: 1e-3, warmup_steps: 10, ..TrainConfig::default() };
        let full = total_loss(&m, &q, &d, &on, 10).unwrap();
        assert!((full - (rank + 1e-3 * (rq + rd))).abs() < 1e-15);
        assert_eq!(total_loss(&m, &q, &d, &on, 0).unwrap(), rank);
    }

    #[test]
    fn config_validation_names_field() {
        let bad = TrainConfig {
            hard_negatives_per_query: 3,
            ..TrainConfig::default()
        };
        match bad.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "hard_negatives_per_query"),
            other => panic!("unexpected {other:?}"),
        }
        let bad = TrainConfig { learning_rate: -1.0, ..TrainConfig::default() };
        assert!(matches!(bad.validate(), Err(Error::Config { field, .. }) if field == "learning_rate"));
        assert!("bogus".parse::<Phase>().is_err());
    }

    #[test]
    fn empty_corpus_is_rejected() {
        assert!(matches!(
            train_toy(&[], &TrainConfig::default(), 0),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn triplets_parse_and_report_line() {
        let text = "{\"query\":[1,2],\"positive\":[3],\"negatives\":[[4]]}\n{\"query\":[1],\"positive\":[2]}\n";
        let t = read_triplets_jsonl(text.as_bytes()).unwrap();
        assert_eq!(t.len(), 2);
        assert!(t[1].negatives.is_empty());
        assert_eq!(read_triplets_jsonl(triplets_to_jsonl(&t).as_bytes()).unwrap(), t);
        let bad = "{\"query\":[1],\"positive\":[2]}\n{\"query\":[],\"positive\":[2]}\n";
        assert!(matches!(read_triplets_jsonl(bad.as_bytes()), Err(Error::Parse { line: 2, .. })));
    }

    fn score_rows() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<usize>)> {
        (1usize..5, 2usize..7).prop_flat_map(|(r, c)| {
            (
                prop::collection::vec(prop::collection::vec(-20.0f64..20.0, c), r),
                prop::collection::vec(0..c, r),
            )
        })
    }

    proptest! {
        #[test]
        fn infonce_shift_invariant((rows, pos) in score_rows(), shift in -50.0f64..50.0) {
            let base = infonce_loss(&ScoreMatrix::from_rows(&rows, pos.clone()).unwrap()).unwrap();
            let shifted: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|s| s + shift).collect()).collect();
            let moved = infonce_loss(&ScoreMatrix::from_rows(&shifted, pos).unwrap()).unwrap();
            prop_assert!(base >= 0.0);
            prop_assert!((base - moved).abs() <= 1e-9 * base.max(1.0));
        }

        #[test]
        fn flops_permutation_and_scaling(
            dense in prop::collection::vec(prop::collection::vec(prop_oneof![Just(0.0f32), 0.01f32..4.0], 6), 1..6),
            c in 0.5f32..3.0,
        ) {
            let vocab = VocabSpec::new(6).unwrap();
            let batch: Vec<SparseVector> = dense.iter().map(|d| SparseVector::from_dense(vocab, d).unwrap()).collect();
            let reg = flops_reg(&batch).unwrap();
            let mut rev = batch.clone();
            rev.reverse();
            prop_assert!((flops_reg(&rev).unwrap() - reg).abs() <= 1e-9 * reg.max(1e-12));
            let scaled: Vec<SparseVector> = dense.iter()
                .map(|d| SparseVector::from_dense(vocab, &d.iter().map(|x| x * c).collect::<Vec<_>>()).unwrap())
                .collect();
            let expect = (c as f64) * (c as f64) * reg;
            prop_assert!((flops_reg(&scaled).unwrap() - expect).abs() <= 1e-5 * expect.max(1e-12));
        }

        #[test]
        fn warmup_bounded_and_monotone(t in 0u64..500, step in 0u64..1000) {
            let a = warmup(step, t);
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert!(warmup(step + 1, t) >= a);
            if step >= t { prop_assert_eq!(a, 1.0); }
        }
    }
}
