//! Optimization sanity: drive a tiny model to memorize 32 synthetic
//! examples and watch the loss curve collapse.
//!
//! ```bash
//! cargo run --release --example overfit_tiny
//! ```

use deberta_lcf::data::{build_vocab, encode_corpus, synthetic};
use deberta_lcf::lcf::LcfMode;
use deberta_lcf::model::{build, ModelConfig};
use deberta_lcf::train::{train, TrainConfig};
use deberta_lcf::Result;

fn main() -> Result<()> {
    let (annotations, _) = synthetic::restaurant_corpus(32, 0, 9);
    let vocab = build_vocab(&annotations, 1);
    let examples = encode_corpus(&annotations, &vocab)?;

    let config = ModelConfig {
        layers: 1,
        heads: 2,
        d_model: 16,
        d_ff: 32,
        max_rel_distance: 8,
        vocab_size: vocab.len(),
        dropout: 0.0,
        alpha: 5,
        mode: LcfMode::Cdm,
        use_p2p: false,
        seed: 9,
    };
    let model = build(&config)?;
    println!(
        "overfitting {} examples with {} parameters\n",
        examples.len(),
        model.params.total_len()
    );

    let cfg = TrainConfig { epochs: 300, batch_size: 8, lr: 2e-3, seed: 9, ..TrainConfig::default() };
    let start = std::time::Instant::now();
    let outcome = train(model, &examples, &cfg)?;
    for h in outcome.history.iter().filter(|h| h.epoch % 20 == 0 || h.epoch == 1) {
        println!(
            "epoch {:>3}  loss {:>9.5}  train acc {:>6.3}",
            h.epoch, h.mean_loss, h.train_accuracy
        );
    }
    let best = outcome
        .history
        .iter()
        .map(|h| h.train_accuracy)
        .fold(f64::NEG_INFINITY, f64::max);
    println!("\nbest train accuracy {best:.4} in {:?}", start.elapsed());
    Ok(())
}
