//! From-scratch aspect-based sentiment classification: a DeBERTa-style
//! encoder with disentangled attention and relative position embeddings,
//! combined with a Local Context Focus layer (semantic-relative distance
//! masking or weighting) and dual local/global feature branches.
//!
//! Everything runs on a small f64 reverse-mode autodiff tape, so analytic
//! gradients can be checked against finite differences end to end. See
//! the `examples/` directory for one runnable program per capability.

pub mod attention;
pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod lcf;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod train;

pub use attention::{
    disentangled_score_terms, disentangled_scores, encoder_layer, mhsa, rel_bucket,
    AttentionParams, EncoderParams, PositionProjections, RelPosTable, TermFlags,
};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use data::{
    build_vocab, dataset_stats, encode_corpus, make_batches, parse_semeval, parse_twitter,
    tokenize, Batch, DatasetFormat, Example, LabelCounts, Polarity, RawAnnotation, RawPolarity,
    Vocab,
};
pub use error::{Error, Result};
pub use gradcheck::grad_check;
pub use lcf::{
    apply_lcf, cdm_mask, cdw_weights, compute_srd, fuse_local_global, AspectSpan, FusionParams,
    LcfConfig, LcfMode, SrdProfile,
};
pub use metrics::{confusion_matrix, evaluate, metrics_from_confusion, Metrics};
pub use model::{build, DebertaLcfModel, ForwardTrace, ModelConfig, N_CLASSES};
pub use rng::Rng;
pub use tensor::{ParamId, ParamStore, Tape, Tensor, Var};
pub use train::{adam_step, train, AdamState, EpochStats, TrainConfig, TrainOutcome};
