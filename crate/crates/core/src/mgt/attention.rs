use rayon::prelude::*;

use super::window::{dilated_window_gather, dilated_window_scatter, WindowBatch};
use crate::error::{ensure, Result};
use crate::scalar::Scalar;
use crate::tensor::{softmax_in_place, Tensor};

/// Per-head scaling and relative-position bias for one attention branch.
#[derive(Clone, Copy, Debug)]
pub struct HeadParams<'a, W> {
    pub heads: usize,
    /// One learnable temperature per head; logits are divided by it.
    pub tau: &'a [W],
    /// `heads × (2P−1) × (2P−1)`, indexed by lattice offset `(Δy, Δx)`.
    pub rel_bias: &'a [W],
}

/// Index of the offset from token `j` to token `i` in a `(2P−1)²` table.
#[inline]
pub fn rel_index(window: usize, i: usize, j: usize) -> usize {
    let side = 2 * window - 1;
    let (iy, ix) = (i / window, i % window);
    let (jy, jx) = (j / window, j % window);
    (iy + window - 1 - jy) * side + (ix + window - 1 - jx)
}

fn check_heads<W: Scalar>(hp: &HeadParams<'_, W>, window: usize, dq: usize, dv: usize) -> Result<()> {
    ensure!(hp.heads >= 1, "attention needs at least one head");
    ensure!(
        dq.is_multiple_of(hp.heads) && dv.is_multiple_of(hp.heads) && dq >= hp.heads && dv >= hp.heads,
        "query dim {} / value dim {} not divisible into {} heads",
        dq,
        dv,
        hp.heads
    );
    ensure!(hp.tau.len() == hp.heads, "tau length {} != heads {}", hp.tau.len(), hp.heads);
    let side = 2 * window - 1;
    ensure!(
        hp.rel_bias.len() == hp.heads * side * side,
        "relative bias length {} != heads * (2P-1)^2 = {}",
        hp.rel_bias.len(),
        hp.heads * side * side
    );
    Ok(())
}

/// Softmax attention matrix (`P² × P²`, row-major) of one head in one window.
///
/// `q` and `k` are the window's tokens with `dq` channels each; the head
/// reads channels `head·dq/heads ..`.
pub fn attention_weights<T: Scalar, W: Scalar>(
    q: &[T],
    k: &[T],
    dq: usize,
    window: usize,
    hp: &HeadParams<'_, W>,
    head: usize,
) -> Vec<f64> {
    let tokens = window * window;
    let hd = dq / hp.heads;
    let c0 = head * hd;
    let side = 2 * window - 1;
    let tau = hp.tau[head].to_f64_exact();
    let bias = &hp.rel_bias[head * side * side..(head + 1) * side * side];
    let mut probs = vec![0.0f64; tokens * tokens];
    for (i, row) in probs.chunks_mut(tokens).enumerate() {
        let qi = &q[i * dq + c0..i * dq + c0 + hd];
        for (j, logit) in row.iter_mut().enumerate() {
            let kj = &k[j * dq + c0..j * dq + c0 + hd];
            let mut dot = 0.0f64;
            for (a, b) in qi.iter().zip(kj) {
                dot += a.to_f64_exact() * b.to_f64_exact();
            }
            *logit = dot / tau + bias[rel_index(window, i, j)].to_f64_exact();
        }
        softmax_in_place(row);
    }
    probs
}

/// Multi-head attention inside every window of pre-gathered batches.
/// Returns a batch with `v`'s channel count on the same layout.
pub fn window_attention<T: Scalar, W: Scalar>(
    q: &WindowBatch<T>,
    k: &WindowBatch<T>,
    v: &WindowBatch<T>,
    hp: &HeadParams<'_, W>,
) -> Result<WindowBatch<T>> {
    ensure!(
        q.layout.same_tokens(&k.layout) && k.layout.same_tokens(&v.layout),
        "query/key/value window layouts differ"
    );
    ensure!(q.channels == k.channels, "query and key widths differ: {} vs {}", q.channels, k.channels);
    let window = q.layout.window;
    let (dq, dv) = (q.channels, v.channels);
    check_heads(hp, window, dq, dv)?;
    let tokens = q.layout.tokens_per_window();
    let hdv = dv / hp.heads;
    let mut out = vec![T::zero(); v.tokens.len()];
    out.par_chunks_mut(tokens * dv).enumerate().for_each(|(wi, dst)| {
        let (qw, kw, vw) = (q.window(wi), k.window(wi), v.window(wi));
        for head in 0..hp.heads {
            let probs = attention_weights(qw, kw, dq, window, hp, head);
            let c0 = head * hdv;
            for i in 0..tokens {
                let p = &probs[i * tokens..(i + 1) * tokens];
                for c in c0..c0 + hdv {
                    let mut acc = 0.0f64;
                    for (j, &pj) in p.iter().enumerate() {
                        acc += pj * vw[j * dv + c].to_f64_exact();
                    }
                    dst[i * dv + c] = T::from_f64_round(acc + 0.0);
                }
            }
        }
    });
    Ok(WindowBatch {
        layout: v.layout,
        channels: dv,
        tokens: out,
    })
}

/// Dilated (optionally shifted) window attention over full feature maps:
/// gather `q`, `k`, `v` on the same lattice, attend per window, scatter back.
#[allow(clippy::too_many_arguments)]
pub fn dilated_window_attention<T: Scalar, W: Scalar>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    hp: &HeadParams<'_, W>,
    window: usize,
    dilation: usize,
    shifted: bool,
) -> Result<Tensor<T>> {
    ensure!(
        q.shape() == k.shape() && q.shape()[2..] == v.shape()[2..] && q.batch() == v.batch(),
        "query/key/value shapes disagree: {:?} {:?} {:?}",
        q.shape(),
        k.shape(),
        v.shape()
    );
    let qb = dilated_window_gather(q, window, dilation, shifted)?;
    let kb = dilated_window_gather(k, window, dilation, shifted)?;
    let vb = dilated_window_gather(v, window, dilation, shifted)?;
    let ob = window_attention(&qb, &kb, &vb, hp)?;
    dilated_window_scatter(&ob)
}
