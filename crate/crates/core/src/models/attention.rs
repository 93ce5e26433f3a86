//! Scaled dot-product, multi-head and ProbSparse attention.

use crate::error::{Error, Result};
use crate::models::layers::Linear;
use crate::tensor::{Graph, Tensor, Var};

/// Sinusoidal position table `[length, dim]`:
/// `PE(pos, 2i) = sin(pos / 10000^(2i/dim))`, `PE(pos, 2i+1) = cos(...)`.
pub fn positional_encoding(length: usize, dim: usize) -> Result<Tensor> {
    if length == 0 || dim == 0 || dim % 2 != 0 {
        return Err(Error::shape(
            "positional_encoding",
            format!("length {length} and dim {dim}; dim must be even and both positive"),
        ));
    }
    let mut data = vec![0.0; length * dim];
    for pos in 0..length {
        for i in 0..dim / 2 {
            let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / dim as f64);
            data[pos * dim + 2 * i] = angle.sin();
            data[pos * dim + 2 * i + 1] = angle.cos();
        }
    }
    Tensor::new(vec![length, dim], data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mask {
    None,
    /// Query `i` may only attend to keys `0..=i`.
    Causal,
}

/// Attention output together with its weight matrix.
#[derive(Debug, Clone, Copy)]
pub struct Attended {
    pub output: Var,
    pub weights: Var,
}

fn causal_mask(rows: usize, cols: usize) -> Tensor {
    let mut t = Tensor::zeros(&[rows, cols]);
    for i in 0..rows {
        for j in i + 1..cols {
            t.data_mut()[i * cols + j] = f64::NEG_INFINITY;
        }
    }
    t
}

/// `softmax(Q·Kᵀ/√d + mask)·V`.
pub fn self_attention(g: &mut Graph, q: Var, k: Var, v: Var, mask: Mask) -> Result<Attended> {
    let (lq, d) = (g.shape(q)[0], g.shape(q)[1]);
    let (lk, dk) = (g.shape(k)[0], g.shape(k)[1]);
    if d != dk || g.shape(v)[0] != lk {
        return Err(Error::shape(
            "self_attention",
            format!("Q {:?}, K {:?}, V {:?}", g.shape(q), g.shape(k), g.shape(v)),
        ));
    }
    let kt = g.transpose(k)?;
    let raw = g.matmul(q, kt)?;
    let mut scores = g.scale(raw, 1.0 / (d as f64).sqrt());
    if mask == Mask::Causal {
        let m = g.constant(causal_mask(lq, lk));
        scores = g.add(scores, m)?;
    }
    let weights = g.softmax(scores);
    let output = g.matmul(weights, v)?;
    Ok(Attended { output, weights })
}

/// Number of queries that get full attention: `min(L_Q, ceil(c · ln L_Q))`,
/// at least one.
pub fn sparse_query_count(len_q: usize, factor: f64) -> usize {
    let u = (factor * (len_q as f64).ln()).ceil().max(1.0) as usize;
    u.min(len_q)
}

/// Sparsity measurement `M(q) = max_j s_j − mean_j s_j` over the scaled
/// scores of each query row.
pub fn sparsity_scores(q: &Tensor, k: &Tensor) -> Vec<f64> {
    let d = q.cols();
    let scale = 1.0 / (d as f64).sqrt();
    (0..q.rows())
        .map(|i| {
            let qi = q.row(i);
            let s: Vec<f64> = (0..k.rows())
                .map(|j| qi.iter().zip(k.row(j)).map(|(a, b)| a * b).sum::<f64>() * scale)
                .collect();
            let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mean = s.iter().sum::<f64>() / s.len() as f64;
            max - mean
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SparseAttended {
    pub output: Var,
    pub weights: Var,
    /// Indices of the queries that received full attention, ascending.
    pub selected: Vec<usize>,
}

/// ProbSparse attention: the `u` queries with the largest sparsity score
/// get full attention; every other query outputs the mean of `V`'s rows.
/// Ties in the score go to the lower query index.
pub fn probsparse_attention(g: &mut Graph, q: Var, k: Var, v: Var, factor: f64) -> Result<SparseAttended> {
    if !(factor >= 1.0) {
        return Err(Error::Config(format!("probsparse factor must be >= 1, got {factor}")));
    }
    let full = self_attention(g, q, k, v, Mask::None)?;
    let lq = g.shape(q)[0];
    let u = sparse_query_count(lq, factor);
    let m = sparsity_scores(g.value(q), g.value(k));
    let mut order: Vec<usize> = (0..lq).collect();
    order.sort_by(|&a, &b| m[b].total_cmp(&m[a]).then(a.cmp(&b)));
    let mut selected: Vec<usize> = order[..u].to_vec();
    selected.sort_unstable();
    let mut flags = vec![false; lq];
    selected.iter().for_each(|&i| flags[i] = true);
    let lazy = g.mean_rows(v)?;
    let output = g.select_rows(full.output, lazy, &flags)?;
    Ok(SparseAttended {
        output,
        weights: full.weights,
        selected,
    })
}

/// Which attention kernel a multi-head block runs per head.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttentionKind {
    Full(Mask),
    ProbSparse { factor: f64 },
}

/// Projection weights of one multi-head block.
#[derive(Debug, Clone, Copy)]
pub struct MhaVars {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub out: Linear,
}

/// Project, split into `heads` column blocks, attend per head, concatenate
/// and apply the output projection.
pub fn multi_head_attention(
    g: &mut Graph,
    p: &MhaVars,
    x_q: Var,
    x_kv: Var,
    heads: usize,
    kind: AttentionKind,
) -> Result<Var> {
    let d = g.shape(x_q)[1];
    if heads == 0 || d % heads != 0 {
        return Err(Error::shape(
            "multi_head_attention",
            format!("model dim {d} is not divisible by {heads} heads"),
        ));
    }
    let q = p.query.forward(g, x_q)?;
    let k = p.key.forward(g, x_kv)?;
    let v = p.value.forward(g, x_kv)?;
    let dh = d / heads;
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = g.slice(q, 1, h * dh, dh)?;
        let kh = g.slice(k, 1, h * dh, dh)?;
        let vh = g.slice(v, 1, h * dh, dh)?;
        let out = match kind {
            AttentionKind::Full(mask) => self_attention(g, qh, kh, vh, mask)?.output,
            AttentionKind::ProbSparse { factor } => probsparse_attention(g, qh, kh, vh, factor)?.output,
        };
        outs.push(out);
    }
    let merged = if heads == 1 { outs[0] } else { g.concat(&outs, 1)? };
    p.out.forward(g, merged)
}
