//! End-to-end training pipeline: overfitting sanity, determinism of the
//! loop, and checkpoint persistence through a real train/eval cycle.

use deberta_lcf::checkpoint::{load_checkpoint, save_checkpoint};
use deberta_lcf::data::{batch_of, build_vocab, encode_corpus, synthetic};
use deberta_lcf::lcf::LcfMode;
use deberta_lcf::metrics::evaluate;
use deberta_lcf::model::{build, ModelConfig};
use deberta_lcf::train::{train, TrainConfig};
use deberta_lcf::{Rng, Tape};

fn tmp(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join("deberta-lcf-pipeline-tests");
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn overfit_setup(n: usize, seed: u64) -> (deberta_lcf::DebertaLcfModel, Vec<deberta_lcf::Example>, deberta_lcf::Vocab) {
    let (annotations, _) = synthetic::restaurant_corpus(n, 0, seed);
    let vocab = build_vocab(&annotations, 1);
    let examples = encode_corpus(&annotations, &vocab).unwrap();
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
        seed,
    };
    (build(&config).unwrap(), examples, vocab)
}

#[test]
fn tiny_model_overfits_32_examples() {
    let (model, examples, _) = overfit_setup(32, 17);
    assert_eq!(examples.len(), 32);
    let cfg = TrainConfig {
        epochs: 300,
        batch_size: 8,
        lr: 2e-3,
        patience: None,
        seed: 17,
        ..TrainConfig::default()
    };
    let start = std::time::Instant::now();
    let outcome = train(model, &examples, &cfg).unwrap();
    let elapsed = start.elapsed();
    let best_acc = outcome
        .history
        .iter()
        .map(|h| h.train_accuracy)
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(
        best_acc >= 0.95,
        "train accuracy only reached {best_acc:.4} in {} epochs",
        outcome.history.len()
    );
    assert!(elapsed.as_secs() < 300, "overfit run took {elapsed:?}");
}

#[test]
fn model_overfit_on_one_example_predicts_its_label() {
    let (model, examples, _) = overfit_setup(3, 23);
    let one = vec![examples[0].clone()];
    let cfg = TrainConfig {
        epochs: 60,
        batch_size: 1,
        lr: 5e-3,
        seed: 23,
        ..TrainConfig::default()
    };
    let outcome = train(model, &one, &cfg).unwrap();
    let (label, probs) = outcome.model.predict(&one[0]).unwrap();
    assert_eq!(label, one[0].label, "probs {probs:?}");
}

#[test]
fn identical_seeds_give_bitwise_identical_history() {
    let make = || {
        let (model, examples, _) = overfit_setup(20, 31);
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 4,
            seed: 31,
            ..TrainConfig::default()
        };
        train(model, &examples, &cfg).unwrap()
    };
    let a = make();
    let b = make();
    assert_eq!(a.history.len(), b.history.len());
    for (x, y) in a.history.iter().zip(&b.history) {
        assert_eq!(x.mean_loss.to_bits(), y.mean_loss.to_bits());
        assert_eq!(x.train_accuracy.to_bits(), y.train_accuracy.to_bits());
        assert_eq!(x.val_macro_f1.to_bits(), y.val_macro_f1.to_bits());
    }
    for ((_, ta), (_, tb)) in a.model.params.iter().zip(b.model.params.iter()) {
        assert_eq!(ta.data, tb.data);
    }
}

#[test]
fn trained_checkpoint_round_trips_through_disk() {
    let (model, examples, vocab) = overfit_setup(16, 41);
    let cfg = TrainConfig { epochs: 4, batch_size: 4, seed: 41, ..TrainConfig::default() };
    let outcome = train(model, &examples, &cfg).unwrap();

    let path = tmp("trained.ckpt");
    save_checkpoint(&outcome.model, &vocab, &path).unwrap();
    let (reloaded, vocab2) = load_checkpoint(&path).unwrap();
    assert_eq!(vocab, vocab2);

    // forward outputs must be bit-identical through the round trip
    let batch = batch_of(&examples[..4]);
    let mut t1 = Tape::new();
    let a = outcome.model.forward(&mut t1, &batch, &mut Rng::new(0)).unwrap();
    let mut t2 = Tape::new();
    let b = reloaded.forward(&mut t2, &batch, &mut Rng::new(0)).unwrap();
    let (av, bv) = (t1.value(a), t2.value(b));
    assert_eq!(av.len(), bv.len());
    for (x, y) in av.iter().zip(bv) {
        assert_eq!(x.to_bits(), y.to_bits());
    }

    // and the metrics computed from both models agree exactly
    let ma = evaluate(&outcome.model, &examples).unwrap();
    let mb = evaluate(&reloaded, &examples).unwrap();
    assert_eq!(ma, mb);
}

#[test]
fn early_stopping_respects_patience() {
    let (model, examples, _) = overfit_setup(20, 53);
    let cfg = TrainConfig {
        epochs: 200,
        batch_size: 4,
        lr: 0.0, // nothing improves, so the stop triggers right after patience
        patience: Some(3),
        seed: 53,
        ..TrainConfig::default()
    };
    let outcome = train(model, &examples, &cfg).unwrap();
    assert_eq!(outcome.history.len(), 4, "expected 1 best epoch + 3 patience epochs");
}
