//! The full classifier: shared disentangled-attention trunk run over a
//! global (`[CLS] sentence [SEP] aspect [SEP]`) and a local
//! (`[CLS] sentence [SEP]`) view, local context focus on the local
//! branch, fusion over the overlapping region, and a 3-way head on the
//! fused `[CLS]` row.

use crate::attention::{
    encoder_layer_with_weights, EncoderParams, PositionProjections, RelPosTable, TermFlags,
};
use crate::data::{batch_of, Batch, Example, Polarity, PAD_ID};
use crate::error::{Error, Result};
use crate::lcf::{apply_lcf, compute_srd, FusionParams, LcfConfig, LcfMode, SrdProfile};
use crate::rng::Rng;
use crate::tensor::{ParamId, ParamStore, Tape, Tensor, Var};

pub const N_CLASSES: usize = 3;

const INIT_STD: f64 = 0.02;

/// Split `key = value` lines, ignoring blanks and `#` comments.
pub fn parse_kv_lines(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "line {}: expected `key = value`, found {raw:?}",
                no + 1
            )));
        };
        out.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(out)
}

// ── Configuration ────────────────────────────────────────────────────

/// Hyperparameters that fully determine the parameter layout.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    /// Maximum relative distance; the position table has twice this many rows.
    pub max_rel_distance: usize,
    pub vocab_size: usize,
    pub dropout: f64,
    /// Semantic-relative distance threshold for the focus layer.
    pub alpha: usize,
    pub mode: LcfMode,
    /// Include the position-to-position score term.
    pub use_p2p: bool,
    pub seed: u64,
}

impl ModelConfig {
    /// Small defaults suitable for desk-scale training.
    pub fn small(vocab_size: usize) -> ModelConfig {
        ModelConfig {
            layers: 2,
            heads: 2,
            d_model: 32,
            d_ff: 64,
            max_rel_distance: 8,
            vocab_size,
            dropout: 0.1,
            alpha: 5,
            mode: LcfMode::Cdm,
            use_p2p: false,
            seed: 42,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let checks: [(bool, &str); 7] = [
            (self.layers >= 1, "layers must be at least 1"),
            (self.heads >= 1, "heads must be at least 1"),
            (self.d_model >= 1 && self.d_ff >= 1, "dimensions must be at least 1"),
            (
                self.d_model.is_multiple_of(self.heads),
                "d_model must be divisible by the head count",
            ),
            (self.max_rel_distance >= 1, "max relative distance must be at least 1"),
            (
                self.vocab_size >= 4,
                "vocabulary must include the four reserved entries",
            ),
            (
                self.dropout >= 0.0 && self.dropout < 1.0,
                "dropout must lie in [0, 1)",
            ),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::Config(msg.to_string()));
            }
        }
        Ok(())
    }

    pub fn terms(&self) -> TermFlags {
        if self.use_p2p {
            TermFlags::all()
        } else {
            TermFlags::standard()
        }
    }

    pub fn lcf(&self) -> LcfConfig {
        LcfConfig { alpha: self.alpha, mode: self.mode }
    }

    /// Flat `key = value` serialization, one field per line.
    pub fn to_kv_string(&self) -> String {
        let mode = match self.mode {
            LcfMode::Cdm => "cdm",
            LcfMode::Cdw => "cdw",
        };
        format!(
            "layers = {}\nheads = {}\nd_model = {}\nd_ff = {}\nmax_rel_distance = {}\n\
             vocab_size = {}\ndropout = {}\nalpha = {}\nmode = {mode}\np2p = {}\nseed = {}\n",
            self.layers,
            self.heads,
            self.d_model,
            self.d_ff,
            self.max_rel_distance,
            self.vocab_size,
            self.dropout,
            self.alpha,
            self.use_p2p,
            self.seed,
        )
    }

    /// Parse the serialization produced by [`ModelConfig::to_kv_string`].
    /// Unknown or missing keys are configuration errors.
    pub fn from_kv_string(text: &str) -> Result<ModelConfig> {
        let mut cfg = ModelConfig {
            layers: 0,
            heads: 0,
            d_model: 0,
            d_ff: 0,
            max_rel_distance: 0,
            vocab_size: 0,
            dropout: 0.0,
            alpha: 0,
            mode: LcfMode::Cdm,
            use_p2p: false,
            seed: 0,
        };
        let mut seen = std::collections::HashSet::new();
        for (key, value) in parse_kv_lines(text)? {
            if !seen.insert(key.clone()) {
                return Err(Error::Config(format!("duplicate key {key}")));
            }
            let bad = |what: &str| Error::Config(format!("{key}: {value:?} is not a valid {what}"));
            match key.as_str() {
                "layers" => cfg.layers = value.parse().map_err(|_| bad("count"))?,
                "heads" => cfg.heads = value.parse().map_err(|_| bad("count"))?,
                "d_model" => cfg.d_model = value.parse().map_err(|_| bad("dimension"))?,
                "d_ff" => cfg.d_ff = value.parse().map_err(|_| bad("dimension"))?,
                "max_rel_distance" => {
                    cfg.max_rel_distance = value.parse().map_err(|_| bad("distance"))?
                }
                "vocab_size" => cfg.vocab_size = value.parse().map_err(|_| bad("size"))?,
                "dropout" => cfg.dropout = value.parse().map_err(|_| bad("probability"))?,
                "alpha" => cfg.alpha = value.parse().map_err(|_| bad("threshold"))?,
                "mode" => {
                    cfg.mode = match value.as_str() {
                        "cdm" => LcfMode::Cdm,
                        "cdw" => LcfMode::Cdw,
                        _ => return Err(bad("mode (cdm or cdw)")),
                    }
                }
                "p2p" => cfg.use_p2p = value.parse().map_err(|_| bad("flag"))?,
                "seed" => cfg.seed = value.parse().map_err(|_| bad("seed"))?,
                other => return Err(Error::Config(format!("unknown key {other}"))),
            }
        }
        let required = [
            "layers", "heads", "d_model", "d_ff", "max_rel_distance", "vocab_size", "dropout",
            "alpha", "mode", "p2p", "seed",
        ];
        for key in required {
            if !seen.contains(key) {
                return Err(Error::Config(format!("missing key {key}")));
            }
        }
        Ok(cfg)
    }

    /// Closed-form scalar parameter count for this configuration.
    pub fn param_count(&self) -> usize {
        let d = self.d_model;
        let per_encoder_layer = 4 * d * d + 2 * d * self.d_ff + 4 * d;
        self.vocab_size * d                       // token embedding
            + 2 * self.max_rel_distance * d       // relative position table
            + 2 * d * d                           // shared position projections
            + (self.layers + 1) * per_encoder_layer // trunk plus fusion block
            + 2 * d * d                           // fusion projection
            + d * N_CLASSES + N_CLASSES           // classifier
    }
}

// ── Parameter layout ─────────────────────────────────────────────────

/// Handles of every parameter group in the store.
#[derive(Clone, Debug)]
pub struct ModelLayout {
    pub embedding: ParamId,
    pub rel: RelPosTable,
    pub pos: PositionProjections,
    pub encoder: Vec<EncoderParams>,
    pub fusion: FusionParams,
    pub classifier_w: ParamId,
    pub classifier_b: ParamId,
}

/// Layout plus storage plus the configuration that produced them.
#[derive(Clone, Debug)]
pub struct DebertaLcfModel {
    pub config: ModelConfig,
    pub layout: ModelLayout,
    pub params: ParamStore,
}

/// Build a model with freshly initialized parameters: weights from
/// normal(0, 0.02), biases zero, layer-norm scale one. The draw order is
/// the parameter insertion order, so a seed pins every value.
pub fn build(config: &ModelConfig) -> Result<DebertaLcfModel> {
    config.validate()?;
    let mut store = ParamStore::new();
    let mut rng = Rng::new(config.seed);
    let d = config.d_model;
    let terms = config.terms();

    let embedding = store.add(
        "embedding.token",
        Tensor::from_fn(vec![config.vocab_size, d], |_| rng.normal_scaled(INIT_STD)),
    );
    let rel = RelPosTable::init(&mut store, "rel.table", config.max_rel_distance, d, &mut rng, INIT_STD);
    let pos = PositionProjections::init(&mut store, "pos", d, config.heads, &mut rng, INIT_STD);
    let encoder = (0..config.layers)
        .map(|l| {
            EncoderParams::init(
                &mut store,
                &format!("encoder{l}"),
                d,
                config.d_ff,
                config.heads,
                &pos,
                terms,
                &mut rng,
                INIT_STD,
            )
        })
        .collect();
    let fusion = FusionParams::init(
        &mut store,
        "fusion",
        d,
        config.d_ff,
        config.heads,
        &pos,
        terms,
        &mut rng,
        INIT_STD,
    );
    let classifier_w = store.add(
        "classifier.w",
        Tensor::from_fn(vec![d, N_CLASSES], |_| rng.normal_scaled(INIT_STD)),
    );
    let classifier_b = store.add("classifier.b", Tensor::zeros(vec![N_CLASSES]));

    let layout = ModelLayout { embedding, rel, pos, encoder, fusion, classifier_w, classifier_b };
    Ok(DebertaLcfModel { config: config.clone(), layout, params: store })
}

// ── Forward pass ─────────────────────────────────────────────────────

/// Attention weights and focus vectors captured from a single-example
/// forward pass, for inspection and CSV export.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// `[layer][head]` attention weights over the global sequence.
    pub global_attn: Vec<Vec<Tensor>>,
    /// `[layer][head]` attention weights over the local sequence.
    pub local_attn: Vec<Vec<Tensor>>,
    /// `[head]` attention weights of the fusion block.
    pub fusion_attn: Vec<Tensor>,
    /// Distance profile over the local sequence (leading `[CLS]` included).
    pub srd: SrdProfile,
    /// Per-row focus weight actually applied (0/1 under CDM).
    pub lcf_weights: Vec<f64>,
    /// Local-branch features after the focus layer.
    pub local_focused: Tensor,
    /// The local-sequence tokens the rows correspond to.
    pub local_len: usize,
}

/// Distance profile for `[CLS] sentence [SEP]`: special tokens sit at the
/// threshold (always local), sentence tokens carry their span distance.
fn local_srd(sentence_len: usize, span: &crate::lcf::AspectSpan, alpha: usize) -> Result<SrdProfile> {
    let sentence = compute_srd(sentence_len, span)?;
    let mut values = Vec::with_capacity(sentence_len + 2);
    values.push(alpha);
    values.extend_from_slice(&sentence.values);
    values.push(alpha);
    Ok(SrdProfile { values })
}

#[allow(clippy::too_many_arguments)]
fn forward_impl(
    tape: &mut Tape,
    store: &ParamStore,
    config: &ModelConfig,
    layout: &ModelLayout,
    batch: &Batch,
    rng: &mut Rng,
    apply_focus: bool,
    mut trace: Option<&mut ForwardTrace>,
) -> Result<Var> {
    if batch.is_empty() {
        return Err(Error::Contract("forward needs a non-empty batch".into()));
    }
    if trace.is_some() && batch.len() != 1 {
        return Err(Error::Contract("tracing requires a batch of one".into()));
    }
    let lcf_cfg = config.lcf();
    let mut logit_rows = Vec::with_capacity(batch.len());

    for b in 0..batch.len() {
        let global_ids = &batch.tokens[b];
        let pad_global = &batch.pad_mask[b];
        let m = batch.sentence_len[b];
        let span = batch.spans[b];
        let real_len = pad_global.iter().filter(|&&v| v != 0.0).count();
        if span.token_end >= m || m + 2 > real_len {
            return Err(Error::Contract(format!(
                "aspect span [{}, {}] invalid for sentence length {m} in a sequence of {real_len}",
                span.token_start, span.token_end
            )));
        }

        let local_len = m + 2;
        let mut local_ids = global_ids[..local_len].to_vec();
        local_ids.resize(batch.width, PAD_ID);
        let mut pad_local = vec![1.0; local_len];
        pad_local.resize(batch.width, 0.0);

        let emb = tape.param(store, layout.embedding);
        let mut h_global = tape.gather(emb, global_ids)?;
        let mut h_local = tape.gather(emb, &local_ids)?;

        for (l, enc) in layout.encoder.iter().enumerate() {
            let (g_out, g_w) = encoder_layer_with_weights(
                tape, store, h_global, enc, &layout.rel, pad_global, config.dropout, rng,
            )?;
            let (l_out, l_w) = encoder_layer_with_weights(
                tape, store, h_local, enc, &layout.rel, &pad_local, config.dropout, rng,
            )?;
            h_global = g_out;
            h_local = l_out;
            if let Some(t) = trace.as_deref_mut() {
                if t.global_attn.len() == l {
                    t.global_attn.push(Vec::new());
                    t.local_attn.push(Vec::new());
                }
                t.global_attn[l] = g_w.iter().map(|&w| tape.to_tensor(w)).collect();
                t.local_attn[l] = l_w.iter().map(|&w| tape.to_tensor(w)).collect();
            }
        }

        // overlap between the two views: [CLS] sentence [SEP]
        let overlap: Vec<usize> = (0..local_len).collect();
        let global_slice = tape.gather(h_global, &overlap)?;
        let local_slice = tape.gather(h_local, &overlap)?;

        let srd = local_srd(m, &span, config.alpha)?;
        let focused = if apply_focus {
            apply_lcf(tape, local_slice, &lcf_cfg, &srd)?
        } else {
            local_slice
        };

        if let Some(t) = trace.as_deref_mut() {
            t.local_focused = tape.to_tensor(focused);
            t.srd = srd.clone();
            t.lcf_weights = match config.mode {
                LcfMode::Cdm => crate::lcf::cdm_mask(&srd, config.alpha, 1).data,
                LcfMode::Cdw => crate::lcf::cdw_weights(&srd, config.alpha).data,
            };
            t.local_len = local_len;
        }

        let fused = {
            let (out, f_w) = fuse_with_weights(
                tape, store, focused, global_slice, &layout.fusion, &layout.rel, config.dropout,
                rng,
            )?;
            if let Some(t) = trace.as_deref_mut() {
                t.fusion_attn = f_w.iter().map(|&w| tape.to_tensor(w)).collect();
            }
            out
        };

        let cls = tape.gather(fused, &[0])?;
        let w = tape.param(store, layout.classifier_w);
        let bias = tape.param(store, layout.classifier_b);
        let proj = tape.matmul(cls, w)?;
        logit_rows.push(tape.bias_add(proj, bias)?);
    }

    tape.concat(0, &logit_rows)
}

/// `fuse_local_global` with the fusion block's attention weights exposed.
#[allow(clippy::too_many_arguments)]
fn fuse_with_weights(
    tape: &mut Tape,
    store: &ParamStore,
    local: Var,
    global: Var,
    fusion: &FusionParams,
    rel: &RelPosTable,
    dropout_p: f64,
    rng: &mut Rng,
) -> Result<(Var, Vec<Var>)> {
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
    encoder_layer_with_weights(tape, store, projected, &fusion.encoder, rel, &pad, dropout_p, rng)
}

/// Forward pass over a padded batch with explicit parameter storage, for
/// callers (like the gradient checker) that manage the store themselves.
pub fn forward_batch(
    tape: &mut Tape,
    store: &ParamStore,
    config: &ModelConfig,
    layout: &ModelLayout,
    batch: &Batch,
    rng: &mut Rng,
) -> Result<Var> {
    forward_impl(tape, store, config, layout, batch, rng, true, None)
}

impl DebertaLcfModel {
    /// Logits `[B x 3]` for a padded batch.
    pub fn forward(&self, tape: &mut Tape, batch: &Batch, rng: &mut Rng) -> Result<Var> {
        forward_impl(tape, &self.params, &self.config, &self.layout, batch, rng, true, None)
    }

    /// Forward pass with the focus layer bypassed; the reference point for
    /// the all-local reduction (a CDM mask that keeps every row must match
    /// this bitwise).
    pub fn forward_without_focus(
        &self,
        tape: &mut Tape,
        batch: &Batch,
        rng: &mut Rng,
    ) -> Result<Var> {
        forward_impl(tape, &self.params, &self.config, &self.layout, batch, rng, false, None)
    }

    /// Single-example forward pass that records attention weights, the
    /// distance profile, and the applied focus vector.
    pub fn forward_traced(
        &self,
        tape: &mut Tape,
        batch: &Batch,
        rng: &mut Rng,
    ) -> Result<(Var, ForwardTrace)> {
        let mut trace = ForwardTrace {
            global_attn: Vec::new(),
            local_attn: Vec::new(),
            fusion_attn: Vec::new(),
            srd: SrdProfile::default(),
            lcf_weights: Vec::new(),
            local_focused: Tensor::zeros(vec![1]),
            local_len: 0,
        };
        let logits = forward_impl(
            tape,
            &self.params,
            &self.config,
            &self.layout,
            batch,
            rng,
            true,
            Some(&mut trace),
        )?;
        Ok((logits, trace))
    }

    /// Predicted polarity and class probabilities for one example.
    /// Ties break toward the lowest class index.
    pub fn predict(&self, example: &Example) -> Result<(Polarity, [f64; 3])> {
        let batch = batch_of(std::slice::from_ref(example));
        let mut tape = Tape::new();
        let mut rng = Rng::new(0);
        let logits = self.forward(&mut tape, &batch, &mut rng)?;
        let row = tape.value(logits);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: [f64; 3] = [
            (row[0] - max).exp(),
            (row[1] - max).exp(),
            (row[2] - max).exp(),
        ];
        let sum: f64 = exps.iter().sum();
        let probs = [exps[0] / sum, exps[1] / sum, exps[2] / sum];
        let mut best = 0;
        for i in 1..3 {
            if probs[i] > probs[best] {
                best = i;
            }
        }
        Ok((Polarity::from_index(best).unwrap(), probs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::batch_of;

    fn tiny_config(vocab_size: usize) -> ModelConfig {
        ModelConfig {
            layers: 1,
            heads: 2,
            d_model: 8,
            d_ff: 16,
            max_rel_distance: 4,
            vocab_size,
            dropout: 0.0,
            alpha: 2,
            mode: LcfMode::Cdm,
            use_p2p: false,
            seed: 7,
        }
    }

    fn example(tokens: Vec<usize>, start: usize, end: usize) -> Example {
        Example {
            tokens,
            span: crate::lcf::AspectSpan::new(start, end, 0, 0),
            label: Polarity::Positive,
        }
    }

    #[test]
    fn same_seed_builds_identical_parameters() {
        let cfg = tiny_config(12);
        let a = build(&cfg).unwrap();
        let b = build(&cfg).unwrap();
        for (pa, pb) in a.params.iter().zip(b.params.iter()) {
            assert_eq!(pa.0, pb.0);
            assert_eq!(pa.1.data, pb.1.data);
        }
    }

    #[test]
    fn built_parameters_are_all_finite() {
        let model = build(&ModelConfig::small(64)).unwrap();
        for (name, tensor) in model.params.iter() {
            assert!(tensor.data.iter().all(|v| v.is_finite()), "{name} has non-finite entries");
        }
    }

    #[test]
    fn enumerated_parameter_count_matches_closed_form() {
        for cfg in [tiny_config(12), ModelConfig::small(37)] {
            let model = build(&cfg).unwrap();
            assert_eq!(model.params.total_len(), cfg.param_count());
        }
    }

    #[test]
    fn invalid_head_split_is_a_config_error() {
        let mut cfg = tiny_config(12);
        cfg.d_model = 9;
        match build(&cfg) {
            Err(Error::Config(msg)) => assert!(msg.contains("divisible")),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn logits_shape_is_batch_by_three() {
        let cfg = tiny_config(12);
        let model = build(&cfg).unwrap();
        let batch = batch_of(&[
            example(vec![4, 5, 6], 1, 1),
            example(vec![7, 8, 9, 10, 11], 0, 2),
        ]);
        let mut tape = Tape::new();
        let logits = model.forward(&mut tape, &batch, &mut Rng::new(0)).unwrap();
        assert_eq!(tape.shape(logits), &[2, 3]);
    }

    #[test]
    fn all_local_cdm_matches_focusless_model_bitwise() {
        let mut cfg = tiny_config(12);
        cfg.alpha = 64; // larger than any sentence in the batch
        let model = build(&cfg).unwrap();
        let batch = batch_of(&[example(vec![4, 5, 6, 7], 2, 2)]);
        let mut t1 = Tape::new();
        let with = model.forward(&mut t1, &batch, &mut Rng::new(0)).unwrap();
        let mut t2 = Tape::new();
        let without = model.forward_without_focus(&mut t2, &batch, &mut Rng::new(0)).unwrap();
        assert_eq!(t1.value(with), t2.value(without));
    }

    #[test]
    fn batch_of_one_equals_batched_row() {
        let cfg = tiny_config(16);
        let model = build(&cfg).unwrap();
        let examples = [
            example(vec![4, 5, 6], 1, 1),
            example(vec![7, 8, 9, 10, 11, 12], 0, 1),
            example(vec![13, 14], 1, 1),
        ];
        let full = batch_of(&examples);
        let mut tape = Tape::new();
        let logits = model.forward(&mut tape, &full, &mut Rng::new(0)).unwrap();
        let all = tape.value(logits).to_vec();
        for (i, ex) in examples.iter().enumerate() {
            let single = batch_of(std::slice::from_ref(ex));
            let mut t = Tape::new();
            let row = model.forward(&mut t, &single, &mut Rng::new(0)).unwrap();
            for j in 0..3 {
                assert!(
                    (t.value(row)[j] - all[i * 3 + j]).abs() < 1e-12,
                    "row {i} col {j} differs"
                );
            }
        }
    }

    #[test]
    fn appending_padding_never_changes_logits() {
        let cfg = tiny_config(16);
        let model = build(&cfg).unwrap();
        let examples = [
            example(vec![4, 5, 6, 7], 1, 2),
            example(vec![8, 9], 0, 0),
        ];
        let batch = batch_of(&examples);
        let mut widened = batch.clone();
        widened.width += 5;
        for row in &mut widened.tokens {
            row.resize(widened.width, PAD_ID);
        }
        for row in &mut widened.pad_mask {
            row.resize(widened.width, 0.0);
        }
        let mut t1 = Tape::new();
        let a = model.forward(&mut t1, &batch, &mut Rng::new(0)).unwrap();
        let mut t2 = Tape::new();
        let b = model.forward(&mut t2, &widened, &mut Rng::new(0)).unwrap();
        assert_eq!(t1.value(a), t2.value(b), "padding changed the logits");
    }

    #[test]
    fn span_outside_sentence_is_a_contract_error() {
        let cfg = tiny_config(12);
        let model = build(&cfg).unwrap();
        let mut batch = batch_of(&[example(vec![4, 5, 6], 1, 1)]);
        batch.spans[0] = crate::lcf::AspectSpan::new(1, 3, 0, 0);
        let mut tape = Tape::new();
        assert!(matches!(
            model.forward(&mut tape, &batch, &mut Rng::new(0)),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn predict_probabilities_sum_to_one() {
        let cfg = tiny_config(12);
        let model = build(&cfg).unwrap();
        let (_, probs) = model.predict(&example(vec![4, 5, 6], 1, 1)).unwrap();
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn argmax_invariant_under_logit_shift() {
        // the head is shift-invariant because softmax is; nudging the
        // classifier bias by a constant must not change the prediction
        let cfg = tiny_config(12);
        let mut model = build(&cfg).unwrap();
        let ex = example(vec![4, 5, 6, 7], 1, 2);
        let (before, _) = model.predict(&ex).unwrap();
        let bias = model.layout.classifier_b;
        for v in &mut model.params.get_mut(bias).data {
            *v += 3.75;
        }
        let (after, _) = model.predict(&ex).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn traced_forward_exposes_layers_heads_and_focus() {
        let cfg = tiny_config(12);
        let model = build(&cfg).unwrap();
        let batch = batch_of(&[example(vec![4, 5, 6, 7, 8], 2, 2)]);
        let mut tape = Tape::new();
        let (_, trace) = model.forward_traced(&mut tape, &batch, &mut Rng::new(0)).unwrap();
        assert_eq!(trace.global_attn.len(), cfg.layers);
        assert_eq!(trace.global_attn[0].len(), cfg.heads);
        assert_eq!(trace.fusion_attn.len(), cfg.heads);
        assert_eq!(trace.srd.values.len(), 7); // CLS + 5 tokens + SEP
        assert_eq!(trace.lcf_weights.len(), 7);
    }

    #[test]
    fn masked_local_rows_are_exactly_zero_before_fusion() {
        // alpha 0 with a mid-sentence aspect leaves distant rows masked;
        // verify through the focus layer directly on traced features
        let cfg = ModelConfig { alpha: 0, ..tiny_config(12) };
        let model = build(&cfg).unwrap();
        let batch = batch_of(&[example(vec![4, 5, 6, 7, 8], 2, 2)]);
        let mut tape = Tape::new();
        let (_, trace) = model.forward_traced(&mut tape, &batch, &mut Rng::new(0)).unwrap();
        // rows with srd > alpha got weight 0; CLS/SEP sit at the threshold
        for (i, &srd) in trace.srd.values.iter().enumerate() {
            let expected = if srd > cfg.alpha { 0.0 } else { 1.0 };
            assert_eq!(trace.lcf_weights[i], expected);
        }
    }
}
