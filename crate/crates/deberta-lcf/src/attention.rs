//! Disentangled self-attention with relative position embeddings.
//!
//! Attention scores decompose into content-content, content-position,
//! position-content and (optionally) position-position terms. Content rows
//! come from the hidden states; position rows come from a learned table of
//! relative-position embeddings indexed by a clamped offset bucket.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{ParamId, ParamStore, Tape, Tensor, Var};

/// Epsilon for every layer normalization in the encoder.
pub const LN_EPS: f64 = 1e-5;

// ── Relative position bucketing ──────────────────────────────────────

/// Map the offset `i - j` into a table index in `[0, 2k-1]` by clamping
/// to `[-k, k-1]` and shifting by `k`.
pub fn rel_bucket(i: usize, j: usize, k: usize) -> usize {
    debug_assert!(k >= 1);
    let delta = i as i64 - j as i64;
    let clamped = delta.clamp(-(k as i64), k as i64 - 1);
    (clamped + k as i64) as usize
}

/// `n*n` grid of buckets; `flip` swaps the roles of query and key
/// position, producing the `rel_bucket(j, i, k)` grid.
fn bucket_grid(n: usize, k: usize, flip: bool) -> Vec<usize> {
    let mut grid = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            grid.push(if flip { rel_bucket(j, i, k) } else { rel_bucket(i, j, k) });
        }
    }
    grid
}

// ── Parameter bundles ────────────────────────────────────────────────

/// Learned relative-position embedding table with `2k` rows.
#[derive(Clone, Debug)]
pub struct RelPosTable {
    pub k: usize,
    pub table: ParamId,
}

impl RelPosTable {
    pub fn init(store: &mut ParamStore, name: &str, k: usize, d_model: usize, rng: &mut Rng, std: f64) -> RelPosTable {
        assert!(k >= 1, "max relative distance must be at least 1");
        let t = Tensor::from_fn(vec![2 * k, d_model], |_| rng.normal_scaled(std));
        RelPosTable { k, table: store.add(name, t) }
    }
}

/// Which score terms participate in the attention matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TermFlags {
    pub c2c: bool,
    pub c2p: bool,
    pub p2c: bool,
    pub p2p: bool,
}

impl TermFlags {
    /// Content-to-content, content-to-position and position-to-content;
    /// the position-to-position term stays off unless requested.
    pub fn standard() -> TermFlags {
        TermFlags { c2c: true, c2p: true, p2c: true, p2p: false }
    }

    pub fn all() -> TermFlags {
        TermFlags { c2c: true, c2p: true, p2c: true, p2p: true }
    }

    pub fn content_only() -> TermFlags {
        TermFlags { c2c: true, c2p: false, p2c: false, p2p: false }
    }

    pub fn enabled_count(&self) -> usize {
        [self.c2c, self.c2p, self.p2c, self.p2p].iter().filter(|&&b| b).count()
    }
}

/// Per-layer content projections plus the (layer-shared) position
/// projections, one of each per head.
#[derive(Clone, Debug)]
pub struct AttentionParams {
    pub heads: usize,
    pub d_head: usize,
    pub w_q: Vec<ParamId>,
    pub w_k: Vec<ParamId>,
    pub w_v: Vec<ParamId>,
    pub w_qr: Vec<ParamId>,
    pub w_kr: Vec<ParamId>,
    pub w_o: ParamId,
    pub terms: TermFlags,
}

/// Position projections are created once and shared by every encoder
/// layer, mirroring the single relative-position embedding matrix.
#[derive(Clone, Debug)]
pub struct PositionProjections {
    pub w_qr: Vec<ParamId>,
    pub w_kr: Vec<ParamId>,
}

impl PositionProjections {
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        d_model: usize,
        heads: usize,
        rng: &mut Rng,
        std: f64,
    ) -> PositionProjections {
        assert_eq!(d_model % heads, 0);
        let d_head = d_model / heads;
        let mut w_qr = Vec::with_capacity(heads);
        let mut w_kr = Vec::with_capacity(heads);
        for h in 0..heads {
            let q = Tensor::from_fn(vec![d_model, d_head], |_| rng.normal_scaled(std));
            let k = Tensor::from_fn(vec![d_model, d_head], |_| rng.normal_scaled(std));
            w_qr.push(store.add(format!("{prefix}.head{h}.w_qr"), q));
            w_kr.push(store.add(format!("{prefix}.head{h}.w_kr"), k));
        }
        PositionProjections { w_qr, w_kr }
    }
}

impl AttentionParams {
    #[allow(clippy::too_many_arguments)]
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        d_model: usize,
        heads: usize,
        pos: &PositionProjections,
        terms: TermFlags,
        rng: &mut Rng,
        std: f64,
    ) -> AttentionParams {
        assert_eq!(d_model % heads, 0, "d_model must be divisible by the head count");
        assert!(terms.enabled_count() >= 1, "at least one score term must be enabled");
        let d_head = d_model / heads;
        let mut w_q = Vec::with_capacity(heads);
        let mut w_k = Vec::with_capacity(heads);
        let mut w_v = Vec::with_capacity(heads);
        for h in 0..heads {
            for (list, role) in [(&mut w_q, "w_q"), (&mut w_k, "w_k"), (&mut w_v, "w_v")] {
                let t = Tensor::from_fn(vec![d_model, d_head], |_| rng.normal_scaled(std));
                list.push(store.add(format!("{prefix}.head{h}.{role}"), t));
            }
        }
        let w_o = store.add(
            format!("{prefix}.w_o"),
            Tensor::from_fn(vec![d_model, d_model], |_| rng.normal_scaled(std)),
        );
        AttentionParams {
            heads,
            d_head,
            w_q,
            w_k,
            w_v,
            w_qr: pos.w_qr.clone(),
            w_kr: pos.w_kr.clone(),
            w_o,
            terms,
        }
    }
}

/// One transformer encoder block: attention, feed-forward, two layer norms.
#[derive(Clone, Debug)]
pub struct EncoderParams {
    pub attn: AttentionParams,
    pub w_ff1: ParamId,
    pub w_ff2: ParamId,
    pub ln1_gamma: ParamId,
    pub ln1_beta: ParamId,
    pub ln2_gamma: ParamId,
    pub ln2_beta: ParamId,
}

impl EncoderParams {
    #[allow(clippy::too_many_arguments)]
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        d_model: usize,
        d_ff: usize,
        heads: usize,
        pos: &PositionProjections,
        terms: TermFlags,
        rng: &mut Rng,
        std: f64,
    ) -> EncoderParams {
        let attn = AttentionParams::init(store, &format!("{prefix}.attn"), d_model, heads, pos, terms, rng, std);
        let w_ff1 = store.add(
            format!("{prefix}.ffn.w1"),
            Tensor::from_fn(vec![d_model, d_ff], |_| rng.normal_scaled(std)),
        );
        let w_ff2 = store.add(
            format!("{prefix}.ffn.w2"),
            Tensor::from_fn(vec![d_ff, d_model], |_| rng.normal_scaled(std)),
        );
        let ln1_gamma = store.add(format!("{prefix}.ln1.gamma"), Tensor::filled(1.0, vec![d_model]));
        let ln1_beta = store.add(format!("{prefix}.ln1.beta"), Tensor::zeros(vec![d_model]));
        let ln2_gamma = store.add(format!("{prefix}.ln2.gamma"), Tensor::filled(1.0, vec![d_model]));
        let ln2_beta = store.add(format!("{prefix}.ln2.beta"), Tensor::zeros(vec![d_model]));
        EncoderParams { attn, w_ff1, w_ff2, ln1_gamma, ln1_beta, ln2_gamma, ln2_beta }
    }
}

// ── Score computation ────────────────────────────────────────────────

/// The individual score matrices for one head, before scaling. Disabled
/// terms are `None`.
pub struct ScoreTerms {
    pub c2c: Option<Var>,
    pub c2p: Option<Var>,
    pub p2c: Option<Var>,
    pub p2p: Option<Var>,
}

/// Compute each enabled term of the attention score decomposition for one
/// head:
///
/// * `c2c[i][j] = (H_i W_q) · (H_j W_k)`
/// * `c2p[i][j] = (H_i W_q) · (P[δ(i,j)] W_kr)`
/// * `p2c[i][j] = (P[δ(j,i)] W_qr) · (H_j W_k)`
/// * `p2p[i][j] = (P[δ(i,j)] W_qr) · (P[δ(j,i)] W_kr)`
///
/// where `δ` is [`rel_bucket`].
pub fn disentangled_score_terms(
    tape: &mut Tape,
    store: &ParamStore,
    h: Var,
    rel: &RelPosTable,
    params: &AttentionParams,
    head: usize,
) -> Result<ScoreTerms> {
    let terms = params.terms;
    if terms.enabled_count() == 0 {
        return Err(Error::Contract("no attention score terms enabled".into()));
    }
    let n = tape.shape(h)[0];
    let k = rel.k;

    let q = if terms.c2c || terms.c2p {
        let w = tape.param(store, params.w_q[head]);
        Some(tape.matmul(h, w)?)
    } else {
        None
    };
    let key = if terms.c2c || terms.p2c {
        let w = tape.param(store, params.w_k[head]);
        Some(tape.matmul(h, w)?)
    } else {
        None
    };
    let qr = if terms.p2c || terms.p2p {
        let table = tape.param(store, rel.table);
        let w = tape.param(store, params.w_qr[head]);
        Some(tape.matmul(table, w)?)
    } else {
        None
    };
    let kr = if terms.c2p || terms.p2p {
        let table = tape.param(store, rel.table);
        let w = tape.param(store, params.w_kr[head]);
        Some(tape.matmul(table, w)?)
    } else {
        None
    };

    let ident_rows: Vec<usize> = (0..n).flat_map(|i| std::iter::repeat_n(i, n)).collect();
    let ident_cols: Vec<usize> = (0..n).flat_map(|_| 0..n).collect();
    let fwd = bucket_grid(n, k, false);
    let rev = bucket_grid(n, k, true);

    let c2c = if terms.c2c {
        let kt = tape.transpose(key.unwrap())?;
        Some(tape.matmul(q.unwrap(), kt)?)
    } else {
        None
    };
    let c2p = if terms.c2p {
        Some(tape.pair_dot(q.unwrap(), kr.unwrap(), &ident_rows, &fwd, n)?)
    } else {
        None
    };
    let p2c = if terms.p2c {
        Some(tape.pair_dot(qr.unwrap(), key.unwrap(), &rev, &ident_cols, n)?)
    } else {
        None
    };
    let p2p = if terms.p2p {
        Some(tape.pair_dot(qr.unwrap(), kr.unwrap(), &fwd, &rev, n)?)
    } else {
        None
    };
    Ok(ScoreTerms { c2c, c2p, p2c, p2p })
}

/// Sum of the enabled terms, scaled by `1/sqrt(T * d_head)` where `T` is
/// the number of enabled terms.
pub fn disentangled_scores(
    tape: &mut Tape,
    store: &ParamStore,
    h: Var,
    rel: &RelPosTable,
    params: &AttentionParams,
    head: usize,
) -> Result<Var> {
    let terms = disentangled_score_terms(tape, store, h, rel, params, head)?;
    let mut sum: Option<Var> = None;
    for part in [terms.c2c, terms.c2p, terms.p2c, terms.p2p].into_iter().flatten() {
        sum = Some(match sum {
            None => part,
            Some(acc) => tape.add(acc, part)?,
        });
    }
    let sum = sum.expect("at least one term enabled");
    let t = params.terms.enabled_count() as f64;
    Ok(tape.scale(sum, 1.0 / (t * params.d_head as f64).sqrt()))
}

// ── Multi-head self-attention ────────────────────────────────────────

/// Key mask broadcast from the padding mask: every query row may attend
/// to exactly the unpadded key positions.
fn key_mask(pad_mask: &[f64]) -> Tensor {
    let n = pad_mask.len();
    let mut data = Vec::with_capacity(n * n);
    for _ in 0..n {
        data.extend_from_slice(pad_mask);
    }
    Tensor::new(data, vec![n, n])
}

/// Multi-head self-attention over `h`, masking padded key positions.
/// Returns the projected output and the per-head attention weight
/// matrices (softmax rows over the keys).
pub fn mhsa_with_weights(
    tape: &mut Tape,
    store: &ParamStore,
    h: Var,
    rel: &RelPosTable,
    params: &AttentionParams,
    pad_mask: &[f64],
) -> Result<(Var, Vec<Var>)> {
    let n = tape.shape(h)[0];
    if pad_mask.len() != n {
        return Err(Error::Contract(format!(
            "pad mask has {} entries for {n} rows",
            pad_mask.len()
        )));
    }
    let mask = key_mask(pad_mask);
    let mut contexts = Vec::with_capacity(params.heads);
    let mut weights = Vec::with_capacity(params.heads);
    for head in 0..params.heads {
        let scores = disentangled_scores(tape, store, h, rel, params, head)?;
        let w = tape.softmax_rows(scores, Some(&mask))?;
        let wv = tape.param(store, params.w_v[head]);
        let v = tape.matmul(h, wv)?;
        contexts.push(tape.matmul(w, v)?);
        weights.push(w);
    }
    let cat = tape.concat(1, &contexts)?;
    let wo = tape.param(store, params.w_o);
    Ok((tape.matmul(cat, wo)?, weights))
}

pub fn mhsa(
    tape: &mut Tape,
    store: &ParamStore,
    h: Var,
    rel: &RelPosTable,
    params: &AttentionParams,
    pad_mask: &[f64],
) -> Result<Var> {
    mhsa_with_weights(tape, store, h, rel, params, pad_mask).map(|(out, _)| out)
}

// ── Encoder layer ────────────────────────────────────────────────────

/// Post-layer-norm residual block: `LN(H + MHSA(H))` followed by
/// `LN(x + FFN(x))` with a gelu feed-forward.
#[allow(clippy::too_many_arguments)]
pub fn encoder_layer_with_weights(
    tape: &mut Tape,
    store: &ParamStore,
    h: Var,
    enc: &EncoderParams,
    rel: &RelPosTable,
    pad_mask: &[f64],
    dropout_p: f64,
    rng: &mut Rng,
) -> Result<(Var, Vec<Var>)> {
    let (attn_out, weights) = mhsa_with_weights(tape, store, h, rel, &enc.attn, pad_mask)?;
    let attn_out = tape.dropout(attn_out, dropout_p, rng);
    let res1 = tape.add(h, attn_out)?;
    let g1 = tape.param(store, enc.ln1_gamma);
    let b1 = tape.param(store, enc.ln1_beta);
    let normed1 = tape.layer_norm(res1, g1, b1, LN_EPS)?;

    let w1 = tape.param(store, enc.w_ff1);
    let mid = tape.matmul(normed1, w1)?;
    let act = tape.gelu(mid);
    let w2 = tape.param(store, enc.w_ff2);
    let ff = tape.matmul(act, w2)?;
    let ff = tape.dropout(ff, dropout_p, rng);
    let res2 = tape.add(normed1, ff)?;
    let g2 = tape.param(store, enc.ln2_gamma);
    let b2 = tape.param(store, enc.ln2_beta);
    let out = tape.layer_norm(res2, g2, b2, LN_EPS)?;
    Ok((out, weights))
}

#[allow(clippy::too_many_arguments)]
pub fn encoder_layer(
    tape: &mut Tape,
    store: &ParamStore,
    h: Var,
    enc: &EncoderParams,
    rel: &RelPosTable,
    pad_mask: &[f64],
    dropout_p: f64,
    rng: &mut Rng,
) -> Result<Var> {
    encoder_layer_with_weights(tape, store, h, enc, rel, pad_mask, dropout_p, rng)
        .map(|(out, _)| out)
}
