//! Train briefly on the synthetic corpus, then classify the polarity of
//! an aspect inside a sentence. Dual-aspect sentences show the local
//! focus at work: each aspect gets its own verdict.
//!
//! ```bash
//! cargo run --release --example predict
//! cargo run --release --example predict -- "the wine was superb but the waiter seemed rude" wine
//! ```

use deberta_lcf::data::{build_vocab, char_span_to_token_span, encode_corpus, synthetic, tokenize, Example, Polarity};
use deberta_lcf::lcf::LcfMode;
use deberta_lcf::model::{build, DebertaLcfModel, ModelConfig};
use deberta_lcf::train::{train, TrainConfig};
use deberta_lcf::{Result, Vocab};

fn classify(model: &DebertaLcfModel, vocab: &Vocab, text: &str, aspect: &str) -> Result<()> {
    let lower = text.to_lowercase();
    let Some(byte) = lower.find(&aspect.to_lowercase()) else {
        println!("{aspect:?} does not occur in {text:?}");
        return Ok(());
    };
    let char_from = lower[..byte].chars().count();
    let char_to = char_from + aspect.chars().count();
    let tokens = tokenize(text);
    let span = char_span_to_token_span(&tokens, char_from, char_to)?;
    let ids = vocab.encode(tokens.iter().map(|t| t.text.as_str()));
    let example = Example { tokens: ids, span, label: Polarity::Neutral };
    let (label, probs) = model.predict(&example)?;
    println!(
        "  {aspect:<10} -> {:<8} (neg {:.3} / neu {:.3} / pos {:.3})",
        label.as_str(),
        probs[0],
        probs[1],
        probs[2]
    );
    Ok(())
}

fn main() -> Result<()> {
    let (train_ann, _) = synthetic::restaurant_corpus(150, 0, 31);
    let vocab = build_vocab(&train_ann, 1);
    let examples = encode_corpus(&train_ann, &vocab)?;
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
        seed: 31,
    };
    println!("training on {} synthetic examples...", examples.len());
    let outcome = train(build(&config)?, &examples, &TrainConfig {
        epochs: 80,
        batch_size: 16,
        lr: 1.5e-3,
        seed: 31,
        patience: Some(25),
        ..TrainConfig::default()
    })?;
    let model = outcome.model;

    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.len() == 2 {
        println!("\n{}", args[0]);
        return classify(&model, &vocab, &args[0], &args[1]);
    }
    let text = "the pasta was delicious but the service was awful";
    println!("\n{text}");
    classify(&model, &vocab, text, "pasta")?;
    classify(&model, &vocab, text, "service")?;
    Ok(())
}
