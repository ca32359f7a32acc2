//! Log-saturated max-pooled sparse encoding and a toy differentiable encoder
//! that feeds it.
//!
//! A document's logits form an `L x V` matrix (one row per token, one column
//! per vocabulary term). Pooling takes the column-wise max, clamps it at zero
//! and applies `log1p`, which yields a nonnegative, mostly-zero vocabulary
//! vector.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::{SparseVector, VocabSpec};

/// Row-major `rows x cols` matrix of finite per-token vocabulary logits.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl LogitMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::contract(format!(
                "logit matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::contract(format!(
                "logit matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::contract(format!(
                "non-finite logit at row {}, column {}",
                pos / cols,
                pos % cols
            )));
        }
        Ok(LogitMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::contract("ragged logit rows"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Column-wise `(argmax row, max)`; ties resolve to the lowest row.
fn column_max(h: &LogitMatrix) -> Vec<(usize, f64)> {
    let mut best: Vec<(usize, f64)> = h.row(0).iter().map(|&v| (0, v)).collect();
    for i in 1..h.rows {
        for (j, &v) in h.row(i).iter().enumerate() {
            if v > best[j].1 {
                best[j] = (i, v);
            }
        }
    }
    best
}

/// Full-precision pooled activations, `log(1 + max(0, max_i H[i][j]))` for
/// every column `j`.
pub fn splade_pool_dense(h: &LogitMatrix) -> Vec<f64> {
    column_max(h)
        .into_iter()
        .map(|(_, m)| m.max(0.0).ln_1p())
        .collect()
}

/// Pools a logit matrix into a sparse vector over a vocabulary of `h.cols()`
/// terms.
pub fn splade_pool(h: &LogitMatrix) -> Result<SparseVector> {
    let vocab = VocabSpec::new(h.cols as u32)?;
    SparseVector::from_dense_f64(vocab, &splade_pool_dense(h))
}

/// Gradient of a scalar loss with respect to the logits, given the gradient
/// with respect to the pooled output.
///
/// Each column routes its upstream gradient to the arg-max row (lowest index
/// on ties), scaled by `1 / (1 + max)`; columns whose max is not positive get
/// no gradient.
pub fn splade_pool_backward(h: &LogitMatrix, upstream: &[f64]) -> Result<LogitMatrix> {
    if upstream.len() != h.cols {
        return Err(Error::contract(format!(
            "upstream gradient length {} does not match {} columns",
            upstream.len(),
            h.cols
        )));
    }
    let mut grad = vec![0.0; h.rows * h.cols];
    for (j, (i, m)) in column_max(h).into_iter().enumerate() {
        if m > 0.0 {
            grad[i * h.cols + j] = upstream[j] / (1.0 + m);
        }
    }
    LogitMatrix::new(h.rows, h.cols, grad)
}

/// Embedding table plus linear projection onto the vocabulary.
///
/// `embedding` is `token_vocab x dim`, `projection` is `dim x vocab`, both
/// row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyEncoderParams {
    pub token_vocab: usize,
    pub dim: usize,
    pub vocab: usize,
    pub embedding: Vec<f64>,
    pub projection: Vec<f64>,
}

impl ToyEncoderParams {
    pub fn zeros(token_vocab: usize, dim: usize, vocab: usize) -> Result<Self> {
        let p = ToyEncoderParams {
            token_vocab,
            dim,
            vocab,
            embedding: vec![0.0; token_vocab * dim],
            projection: vec![0.0; dim * vocab],
        };
        p.validate()?;
        Ok(p)
    }

    /// Seeded uniform initialization in `[-scale, scale]`.
    pub fn seeded(token_vocab: usize, dim: usize, vocab: usize, scale: f64, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(token_vocab, dim, vocab)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in p.embedding.iter_mut().chain(p.projection.iter_mut()) {
            *v = rng.gen_range(-scale..=scale);
        }
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.token_vocab == 0 || self.dim == 0 || self.vocab == 0 {
            return Err(Error::contract("encoder dimensions must be positive"));
        }
        if self.embedding.len() != self.token_vocab * self.dim {
            return Err(Error::contract("embedding table has the wrong length"));
        }
        if self.projection.len() != self.dim * self.vocab {
            return Err(Error::contract("projection matrix has the wrong length"));
        }
        if self
            .embedding
            .iter()
            .chain(&self.projection)
            .any(|v| !v.is_finite())
        {
            return Err(Error::contract("encoder parameters must be finite"));
        }
        Ok(())
    }

    pub fn vocab_spec(&self) -> Result<VocabSpec> {
        VocabSpec::new(self.vocab as u32)
    }

    pub fn embedding_row(&self, token: usize) -> &[f64] {
        &self.embedding[token * self.dim..(token + 1) * self.dim]
    }

    pub fn param_count(&self) -> usize {
        self.embedding.len() + self.projection.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("encoder params serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: ToyEncoderParams =
            serde_json::from_str(text).map_err(|e| Error::parse(e.line(), e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_json().as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut text = String::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_string(&mut text))
            .map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

fn check_tokens(tokens: &[u32], params: &ToyEncoderParams) -> Result<()> {
    if tokens.is_empty() {
        return Err(Error::contract("token sequence must be nonempty"));
    }
    if let Some(&t) = tokens.iter().find(|&&t| t as usize >= params.token_vocab) {
        return Err(Error::contract(format!(
            "unknown token id {t} (embedding table has {} rows)",
            params.token_vocab
        )));
    }
    Ok(())
}

/// Logits for a token sequence: row `i` is `embedding[tokens[i]] * projection`.
pub fn toy_encode(tokens: &[u32], params: &ToyEncoderParams) -> Result<LogitMatrix> {
    check_tokens(tokens, params)?;
    let v = params.vocab;
    let mut data = vec![0.0; tokens.len() * v];
    for (i, &t) in tokens.iter().enumerate() {
        let out = &mut data[i * v..(i + 1) * v];
        for (k, &e) in params.embedding_row(t as usize).iter().enumerate() {
            if e == 0.0 {
                continue;
            }
            let proj = &params.projection[k * v..(k + 1) * v];
            for (o, &p) in out.iter_mut().zip(proj) {
                *o += e * p;
            }
        }
    }
    LogitMatrix::new(tokens.len(), v, data)
}

/// Encodes a token sequence straight to its pooled sparse vector.
pub fn encode_sparse(tokens: &[u32], params: &ToyEncoderParams) -> Result<SparseVector> {
    splade_pool(&toy_encode(tokens, params)?)
}

/// Accumulates parameter gradients for one sequence, given the gradient with
/// respect to its logits.
pub fn toy_encode_backward(
    tokens: &[u32],
    params: &ToyEncoderParams,
    grad_logits: &LogitMatrix,
    grads: &mut ToyEncoderParams,
) -> Result<()> {
    check_tokens(tokens, params)?;
    if grad_logits.rows != tokens.len() || grad_logits.cols != params.vocab {
        return Err(Error::contract("logit gradient shape does not match sequence"));
    }
    if grads.dim != params.dim || grads.vocab != params.vocab || grads.token_vocab != params.token_vocab {
        return Err(Error::contract("gradient buffer shape does not match parameters"));
    }
    let (d, v) = (params.dim, params.vocab);
    for (i, &t) in tokens.iter().enumerate() {
        let g = grad_logits.row(i);
        if g.iter().all(|&x| x == 0.0) {
            continue;
        }
        let t = t as usize;
        for k in 0..d {
            let proj = &params.projection[k * v..(k + 1) * v];
            let e = params.embedding[t * d + k];
            let mut acc = 0.0;
            let gp = &mut grads.projection[k * v..(k + 1) * v];
            for j in 0..v {
                acc += g[j] * proj[j];
                gp[j] += e * g[j];
            }
            grads.embedding[t * d + k] += acc;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use std::f64::consts::E;

    fn rand_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> LogitMatrix {
        let data = (0..rows * cols).map(|_| rng.gen_range(-2.0..2.0)).collect();
        LogitMatrix::new(rows, cols, data).unwrap()
    }

    /// log1p(relu(column max)) written without sharing any helper.
    fn dense_reference(h: &LogitMatrix) -> Vec<f64> {
        (0..h.cols())
            .map(|j| {
                let m = (0..h.rows())
                    .map(|i| h.get(i, j))
                    .fold(f64::NEG_INFINITY, f64::max);
                (1.0 + if m > 0.0 { m } else { 0.0 }).ln()
            })
            .collect()
    }

    #[test]
    fn pool_all_negative_is_empty() {
        let h = LogitMatrix::new(2, 3, vec![-1.0; 6]).unwrap();
        assert!(splade_pool(&h).unwrap().is_empty());
    }

    #[test]
    fn pool_log_saturation_is_analytic() {
        let h = LogitMatrix::from_rows(&[vec![E - 1.0, 0.0]]).unwrap();
        let s = splade_pool(&h).unwrap();
        assert_eq!(s.terms(), &[0]);
        assert!((s.weights()[0] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn pool_matches_dense_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = rand_matrix(&mut rng, 4, 8);
        let reference = dense_reference(&h);
        let got = splade_pool_dense(&h);
        for (a, b) in got.iter().zip(&reference) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        let vocab = VocabSpec::new(8).unwrap();
        assert_eq!(
            splade_pool(&h).unwrap(),
            SparseVector::from_dense_f64(vocab, &reference).unwrap()
        );
    }

    #[test]
    fn rejects_non_finite_and_bad_shapes() {
        assert!(LogitMatrix::new(1, 2, vec![0.0, f64::NAN]).is_err());
        assert!(LogitMatrix::new(0, 2, vec![]).is_err());
        assert!(LogitMatrix::new(1, 2, vec![0.0]).is_err());
        let h = LogitMatrix::zeros(2, 3).unwrap();
        assert!(matches!(
            splade_pool_backward(&h, &[1.0, 1.0]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn backward_dead_region_and_single_cell() {
        let h = LogitMatrix::new(2, 2, vec![-1.0, -0.5, -3.0, -0.1]).unwrap();
        let g = splade_pool_backward(&h, &[1.0, 1.0]).unwrap();
        assert!(g.as_slice().iter().all(|&x| x == 0.0));

        let h = LogitMatrix::new(1, 1, vec![E - 1.0]).unwrap();
        let g = splade_pool_backward(&h, &[1.0]).unwrap();
        assert!((g.get(0, 0) - 1.0 / E).abs() < 1e-15);
    }

    #[test]
    fn backward_ties_route_to_lowest_row() {
        let h = LogitMatrix::new(3, 1, vec![0.5, 2.0, 2.0]).unwrap();
        let g = splade_pool_backward(&h, &[3.0]).unwrap();
        assert_eq!(g.as_slice(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let step = 1e-4;
        let mut checked = 0;
        while checked < 20 {
            let h = rand_matrix(&mut rng, 3, 5);
            let up: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            // skip instances near a kink (ties or zero crossings)
            let near_kink = (0..5).any(|j| {
                let mut col: Vec<f64> = (0..3).map(|i| h.get(i, j)).collect();
                col.sort_by(|a, b| b.partial_cmp(a).unwrap());
                col[0].abs() < 1e-3 || col[0] - col[1] < 1e-3
            });
            if near_kink {
                continue;
            }
            checked += 1;
            let f = |m: &LogitMatrix| -> f64 {
                splade_pool_dense(m).iter().zip(&up).map(|(a, b)| a * b).sum()
            };
            let g = splade_pool_backward(&h, &up).unwrap();
            for idx in 0..15 {
                let mut plus = h.as_slice().to_vec();
                let mut minus = plus.clone();
                plus[idx] += step;
                minus[idx] -= step;
                let fd = (f(&LogitMatrix::new(3, 5, plus).unwrap())
                    - f(&LogitMatrix::new(3, 5, minus).unwrap()))
                    / (2.0 * step);
                let an = g.as_slice()[idx];
                let denom = fd.abs().max(an.abs()).max(1e-8);
                assert!((fd - an).abs() / denom < 1e-4, "idx {idx}: fd {fd} vs {an}");
            }
        }
    }

    #[test]
    fn toy_encode_examples() {
        let p = ToyEncoderParams::zeros(4, 3, 5).unwrap();
        let h = toy_encode(&[0, 3, 1], &p).unwrap();
        assert!(h.as_slice().iter().all(|&x| x == 0.0));

        let p = ToyEncoderParams {
            token_vocab: 1,
            dim: 1,
            vocab: 2,
            embedding: vec![2.0],
            projection: vec![1.0, -1.0],
        };
        assert_eq!(toy_encode(&[0], &p).unwrap().as_slice(), &[2.0, -2.0]);
        assert!(matches!(toy_encode(&[1], &p), Err(Error::Contract(_))));
        assert!(matches!(toy_encode(&[], &p), Err(Error::Contract(_))));
    }

    #[test]
    fn toy_encode_matches_triple_loop() {
        let p = ToyEncoderParams::seeded(7, 4, 6, 1.0, 3).unwrap();
        let tokens = [2u32, 6, 0];
        let h = toy_encode(&tokens, &p).unwrap();
        for (i, &t) in tokens.iter().enumerate() {
            for j in 0..6 {
                let mut s = 0.0;
                for k in 0..4 {
                    s += p.embedding[t as usize * 4 + k] * p.projection[k * 6 + j];
                }
                assert!((h.get(i, j) - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn params_json_round_trip() {
        let p = ToyEncoderParams::seeded(5, 2, 3, 0.5, 9).unwrap();
        assert_eq!(ToyEncoderParams::from_json(&p.to_json()).unwrap(), p);
        let broken = r#"{"token_vocab":2,"dim":1,"vocab":1,"embedding":[1.0],"projection":[1.0]}"#;
        assert!(ToyEncoderParams::from_json(broken).is_err());
    }

    fn matrix_strategy() -> impl Strategy<Value = LogitMatrix> {
        (1usize..5, 1usize..7).prop_flat_map(|(r, c)| {
            prop::collection::vec(-3.0f64..3.0, r * c)
                .prop_map(move |d| LogitMatrix::new(r, c, d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn pool_is_row_order_invariant_and_idempotent(h in matrix_strategy(), shift in 0usize..5) {
            let pooled = splade_pool(&h).unwrap();
            prop_assert!(pooled.weights().iter().all(|&w| w > 0.0));

            let rows: Vec<Vec<f64>> = (0..h.rows()).map(|i| h.row(i).to_vec()).collect();
            let mut rotated = rows.clone();
            rotated.rotate_left(shift % rows.len());
            prop_assert_eq!(&splade_pool(&LogitMatrix::from_rows(&rotated).unwrap()).unwrap(), &pooled);

            let doubled: Vec<Vec<f64>> = rows.iter().chain(rows.iter()).cloned().collect();
            prop_assert_eq!(&splade_pool(&LogitMatrix::from_rows(&doubled).unwrap()).unwrap(), &pooled);
        }

        #[test]
        fn pool_is_monotone(h in matrix_strategy(), cell in 0usize..64, bump in 0.0f64..2.0) {
            let before = splade_pool_dense(&h);
            let mut data = h.as_slice().to_vec();
            let idx = cell % data.len();
            data[idx] += bump;
            let after = splade_pool_dense(&LogitMatrix::new(h.rows(), h.cols(), data).unwrap());
            for (a, b) in after.iter().zip(&before) {
                prop_assert!(a >= b);
            }
        }
    }
}
