//! Local context focus: semantic-relative distance, context-feature
//! masking (CDM) and weighting (CDW), and local/global feature fusion.

use crate::attention::{encoder_layer, EncoderParams, PositionProjections, RelPosTable, TermFlags};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{ParamId, ParamStore, Tape, Tensor, Var};

// ── Domain types ─────────────────────────────────────────────────────

/// Inclusive token range of an aspect inside its sentence, plus the
/// original character offsets it was aligned from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AspectSpan {
    pub token_start: usize,
    pub token_end: usize,
    pub char_from: usize,
    pub char_to: usize,
}

impl AspectSpan {
    pub fn new(token_start: usize, token_end: usize, char_from: usize, char_to: usize) -> AspectSpan {
        assert!(token_start <= token_end);
        AspectSpan { token_start, token_end, char_from, char_to }
    }

    pub fn token_len(&self) -> usize {
        self.token_end - self.token_start + 1
    }
}

/// Per-token semantic-relative distance from the aspect span: zero on the
/// span, growing by one per token away from it.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SrdProfile {
    pub values: Vec<usize>,
}

/// How the local branch suppresses non-local features.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LcfMode {
    /// Zero every feature row whose distance exceeds the threshold.
    Cdm,
    /// Linearly down-weight rows beyond the threshold.
    Cdw,
}

/// Threshold and mode for the local context focus layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LcfConfig {
    pub alpha: usize,
    pub mode: LcfMode,
}

// ── Distance and masks ───────────────────────────────────────────────

/// Distance of every token from the aspect span: zero on the span itself,
/// otherwise the distance to the nearest span endpoint.
pub fn compute_srd(n: usize, span: &AspectSpan) -> Result<SrdProfile> {
    if span.token_end >= n {
        return Err(Error::Contract(format!(
            "aspect span [{}, {}] exceeds sequence length {n}",
            span.token_start, span.token_end
        )));
    }
    let values = (0..n)
        .map(|i| {
            if i >= span.token_start && i <= span.token_end {
                0
            } else if i < span.token_start {
                span.token_start - i
            } else {
                i - span.token_end
            }
        })
        .collect();
    Ok(SrdProfile { values })
}

/// `{0,1}` feature mask: row `i` is all ones iff `srd_i <= alpha`.
pub fn cdm_mask(srd: &SrdProfile, alpha: usize, d_model: usize) -> Tensor {
    let n = srd.values.len();
    let mut data = Vec::with_capacity(n * d_model);
    for &s in &srd.values {
        let v = if s <= alpha { 1.0 } else { 0.0 };
        data.extend(std::iter::repeat_n(v, d_model));
    }
    Tensor::new(data, vec![n, d_model])
}

/// Per-row weights: `1` inside the threshold, then a linear decay
/// `(n - (srd - alpha)) / n` clamped at zero.
pub fn cdw_weights(srd: &SrdProfile, alpha: usize) -> Tensor {
    let n = srd.values.len();
    let data = srd
        .values
        .iter()
        .map(|&s| {
            if s <= alpha {
                1.0
            } else {
                let overshoot = (s - alpha) as f64;
                ((n as f64 - overshoot) / n as f64).max(0.0)
            }
        })
        .collect();
    Tensor::new(data, vec![n, 1])
}

/// Apply the configured focus to the feature rows. Gradients flow only
/// through surviving (nonzero-weighted) entries.
pub fn apply_lcf(tape: &mut Tape, features: Var, cfg: &LcfConfig, srd: &SrdProfile) -> Result<Var> {
    let shape = tape.shape(features).to_vec();
    if shape.len() != 2 || shape[0] != srd.values.len() {
        return Err(Error::Shape {
            op: "apply_lcf",
            lhs: shape,
            rhs: vec![srd.values.len()],
        });
    }
    match cfg.mode {
        LcfMode::Cdm => {
            let mask = cdm_mask(srd, cfg.alpha, shape[1]);
            let m = tape.value_leaf(&mask);
            tape.mul(features, m)
        }
        LcfMode::Cdw => {
            let weights = cdw_weights(srd, cfg.alpha);
            let w = tape.value_leaf(&weights);
            tape.mul(features, w)
        }
    }
}

// ── Fusion ───────────────────────────────────────────────────────────

/// Projection plus one attention block applied to the concatenated
/// local/global features.
#[derive(Clone, Debug)]
pub struct FusionParams {
    pub w_fuse: ParamId,
    pub encoder: EncoderParams,
}

impl FusionParams {
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
    ) -> FusionParams {
        let w_fuse = store.add(
            format!("{prefix}.w"),
            Tensor::from_fn(vec![2 * d_model, d_model], |_| rng.normal_scaled(std)),
        );
        let encoder = EncoderParams::init(
            store,
            &format!("{prefix}.enc"),
            d_model,
            d_ff,
            heads,
            pos,
            terms,
            rng,
            std,
        );
        FusionParams { w_fuse, encoder }
    }
}

/// Concatenate local and global features along the feature axis, project
/// back to `d_model`, then run one attention encoder layer over the fused
/// sequence.
#[allow(clippy::too_many_arguments)]
pub fn fuse_local_global(
    tape: &mut Tape,
    store: &ParamStore,
    local: Var,
    global: Var,
    fusion: &FusionParams,
    rel: &RelPosTable,
    dropout_p: f64,
    rng: &mut Rng,
) -> Result<Var> {
    if tape.shape(local) != tape.shape(global) {
        return Err(Error::Shape {
            op: "fuse_local_global",
            lhs: tape.shape(local).to_vec(),
            rhs: tape.shape(global).to_vec(),
        });
    }
    let n = tape.shape(local)[0];
    let cat = tape.concat(1, &[local, global])?;
    let w = tape.param(store, fusion.w_fuse);
    let projected = tape.matmul(cat, w)?;
    let pad = vec![1.0; n];
    encoder_layer(tape, store, projected, &fusion.encoder, rel, &pad, dropout_p, rng)
}
