//! Aspect-aware attention and the emission layer.
//!
//! For token `t` the aspect memory is
//! `m_t = (1/n) Σ_k v_{a_k} (1 - l_{t,k} / T)`, where `v_{a_k}` is the word
//! embedding of the k-th aspect token and `l_{t,k}` its distance to `t`.
//! The relevance score is `g_t = tanh(W_attn · [m_t; h_t] + b_attn)`, the
//! weights are `α = softmax(g)`, and emissions are
//! `P_t = W_linearᵀ (α_t h_t) + b_linear`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamId, Tape, Var};
use crate::error::{Error, Result};
use crate::params::{ParamStore, INIT_EPSILON};

/// How the token-to-aspect distance `l_{t,k}` is measured.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum DistanceMode {
    /// `|t - a_k|`; the aspect token itself has distance 0.
    #[default]
    Absolute,
    /// Number of words strictly between: `max(|t - a_k| - 1, 0)`.
    Between,
}

impl DistanceMode {
    pub fn distance(self, t: usize, a: usize) -> usize {
        let d = t.abs_diff(a);
        match self {
            DistanceMode::Absolute => d,
            DistanceMode::Between => d.saturating_sub(1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionParams {
    /// Shape `[d_w + 2d, 1]`; the first `d_w` rows weigh the memory vector.
    pub weight: ParamId,
    /// Shape `[1]`.
    pub bias: ParamId,
}

impl AttentionParams {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        word_dim: usize,
        hidden_out: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(AttentionParams {
            weight: store.add_uniform("attn.w", vec![word_dim + hidden_out, 1], INIT_EPSILON, rng)?,
            bias: store.add_uniform("attn.b", vec![1], INIT_EPSILON, rng)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmissionParams {
    /// Shape `[2d, q]`.
    pub weight: ParamId,
    /// Shape `[q]`.
    pub bias: ParamId,
}

impl EmissionParams {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        hidden_out: usize,
        num_labels: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(EmissionParams {
            weight: store.add_uniform("linear.w", vec![hidden_out, num_labels], INIT_EPSILON, rng)?,
            bias: store.add_uniform("linear.b", vec![num_labels], INIT_EPSILON, rng)?,
        })
    }
}

/// Coefficient matrix `C[t][k] = (1 - l_{t,k}/T) / n`, so that `m_t = Σ_k C[t][k] v_{a_k}`.
pub fn memory_coefficients(len: usize, aspects: &[usize], mode: DistanceMode) -> Vec<Vec<f64>> {
    let n = aspects.len() as f64;
    let t_len = len as f64;
    (0..len)
        .map(|t| {
            aspects
                .iter()
                .map(|&a| (1.0 - mode.distance(t, a) as f64 / t_len) / n)
                .collect()
        })
        .collect()
}

/// Memory vectors `m_t` for every token. With no aspects every `m_t` is zero.
pub fn memory_vectors(
    tape: &mut Tape,
    aspect_embeddings: &[Var],
    aspects: &[usize],
    len: usize,
    word_dim: usize,
    mode: DistanceMode,
) -> Result<Vec<Var>> {
    if aspect_embeddings.len() != aspects.len() {
        return Err(Error::dim("memory", &[aspects.len()], &[aspect_embeddings.len()]));
    }
    if let Some(&a) = aspects.iter().find(|&&a| a >= len) {
        return Err(Error::domain(format!("aspect position {a} out of range {len}")));
    }
    if aspects.is_empty() {
        let zero = tape.zeros(word_dim);
        return Ok(vec![zero; len]);
    }
    let n = aspects.len();
    let coef: Vec<f64> = memory_coefficients(len, aspects, mode).concat();
    let c = tape.constant(vec![len, n], coef)?;
    let stacked = tape.concat(aspect_embeddings)?;
    let v = tape.reshape(stacked, vec![n, word_dim])?;
    let m = tape.matmul(c, v)?;
    (0..len).map(|t| tape.slice(m, t * word_dim, word_dim)).collect()
}

/// Attention weights `α` (shape `[T]`) from hidden states and memory vectors.
pub fn attention_weights(tape: &mut Tape, hidden: &[Var], memory: &[Var], weight: Var, bias: Var) -> Result<Var> {
    if hidden.len() != memory.len() || hidden.is_empty() {
        return Err(Error::dim("attention", &[hidden.len()], &[memory.len()]));
    }
    let wt = tape.transpose(weight)?;
    let mut scores = Vec::with_capacity(hidden.len());
    for (h, m) in hidden.iter().zip(memory) {
        let z = tape.concat(&[*m, *h])?;
        let s = tape.matmul(wt, z)?;
        let s = tape.add(s, bias)?;
        scores.push(tape.tanh(s));
    }
    let g = tape.concat(&scores)?;
    tape.softmax(g)
}

/// Emission scores `P` with shape `[T, q]`. `alpha = None` is the
/// no-attention case where every `α_t` is 1. With `rescale_by_len` each
/// weight is multiplied by `T` so the mean weight is 1.
pub fn emissions(
    tape: &mut Tape,
    hidden: &[Var],
    alpha: Option<Var>,
    weight: Var,
    bias: Var,
    rescale_by_len: bool,
) -> Result<Var> {
    let len = hidden.len();
    if len == 0 {
        return Err(Error::domain("emissions of an empty sentence"));
    }
    if let Some(a) = alpha {
        if tape.shape(a) != [len] {
            return Err(Error::dim("emissions", &[len], tape.shape(a)));
        }
    }
    let wt = tape.transpose(weight)?;
    let q = tape.shape(wt)[0];
    let mut rows = Vec::with_capacity(len);
    for (t, h) in hidden.iter().enumerate() {
        let x = match alpha {
            Some(a) => {
                let mut at = tape.slice(a, t, 1)?;
                if rescale_by_len {
                    at = tape.scale(at, len as f64);
                }
                tape.mul(at, *h)?
            }
            None => *h,
        };
        let p = tape.matmul(wt, x)?;
        rows.push(tape.add(p, bias)?);
    }
    let flat = tape.concat(&rows)?;
    tape.reshape(flat, vec![len, q])
}

/// Tab-separated `token\tα` lines (α to 4 decimals) followed by a `sum` line.
pub fn format_attention(tokens: &[String], alpha: &[f64]) -> String {
    let mut out = String::new();
    for (tok, a) in tokens.iter().zip(alpha) {
        out.push_str(&format!("{tok}\t{a:.4}\n"));
    }
    out.push_str(&format!("sum\t{:.4}\n", alpha.iter().sum::<f64>()));
    out
}
