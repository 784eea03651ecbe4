//! The full pipeline on the synthetic restaurant corpus: build a
//! vocabulary, train with held-out model selection, evaluate on a test
//! split, and round-trip the best model through a checkpoint file.
//!
//! ```bash
//! cargo run --release --example train_and_eval
//! ```

use deberta_lcf::checkpoint::{load_checkpoint, save_checkpoint};
use deberta_lcf::data::{build_vocab, encode_corpus, synthetic};
use deberta_lcf::lcf::LcfMode;
use deberta_lcf::metrics::evaluate;
use deberta_lcf::model::{build, ModelConfig};
use deberta_lcf::train::{train, TrainConfig};
use deberta_lcf::Result;

fn main() -> Result<()> {
    let (train_ann, test_ann) = synthetic::restaurant_corpus(150, 60, 2024);
    let vocab = build_vocab(&train_ann, 1);
    let train_set = encode_corpus(&train_ann, &vocab)?;
    let test_set = encode_corpus(&test_ann, &vocab)?;
    println!(
        "train {} / test {} examples, vocabulary {}",
        train_set.len(),
        test_set.len(),
        vocab.len()
    );

    let config = ModelConfig {
        layers: 2,
        heads: 2,
        d_model: 32,
        d_ff: 64,
        max_rel_distance: 8,
        vocab_size: vocab.len(),
        dropout: 0.1,
        alpha: 2,
        mode: LcfMode::Cdm,
        use_p2p: false,
        seed: 2024,
    };
    let model = build(&config)?;
    let cfg = TrainConfig {
        epochs: 80,
        batch_size: 16,
        lr: 1.5e-3,
        seed: 2024,
        patience: Some(25),
        ..TrainConfig::default()
    };
    let outcome = train(model, &train_set, &cfg)?;
    println!(
        "trained {} epochs, best validation macro-F1 {:.4} at epoch {}",
        outcome.history.len(),
        outcome.best_val_macro_f1,
        outcome.best_epoch
    );

    let metrics = evaluate(&outcome.model, &test_set)?;
    print!("\ntest metrics:\n{}", metrics.to_kv_lines());

    let path = std::env::temp_dir().join("deberta-lcf-example.ckpt");
    save_checkpoint(&outcome.model, &vocab, &path)?;
    let (reloaded, _) = load_checkpoint(&path)?;
    let again = evaluate(&reloaded, &test_set)?;
    assert_eq!(metrics, again, "checkpoint round trip must be exact");
    println!("\ncheckpoint round trip reproduced every metric at {}", path.display());
    Ok(())
}
