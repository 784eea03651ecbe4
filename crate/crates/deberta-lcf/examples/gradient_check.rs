//! Verify analytic gradients against central finite differences, op by
//! op and through a full tiny model.
//!
//! ```bash
//! cargo run --example gradient_check
//! ```

use deberta_lcf::data::{batch_of, Example, Polarity};
use deberta_lcf::gradcheck::grad_check;
use deberta_lcf::lcf::{AspectSpan, LcfMode};
use deberta_lcf::model::{build, forward_batch, ModelConfig};
use deberta_lcf::tensor::{ParamStore, Tape, Tensor};
use deberta_lcf::{Result, Rng};

fn report(name: &str, err: f64) {
    println!("{name:<18} max relative error {err:.3e}");
}

fn main() -> Result<()> {
    let mut rng = Rng::new(7);

    // a single matrix product
    let mut store = ParamStore::new();
    let a = store.add("a", Tensor::param((0..12).map(|_| rng.uniform_signed()).collect(), vec![3, 4]));
    let b = store.add("b", Tensor::param((0..8).map(|_| rng.uniform_signed()).collect(), vec![4, 2]));
    let err = grad_check(&mut store, 1e-5, |p| {
        let mut tape = Tape::new();
        let (av, bv) = (tape.param(p, a), tape.param(p, b));
        let c = tape.matmul(av, bv)?;
        let loss = tape.mean(c);
        Ok((tape, loss))
    })?;
    report("matmul", err);

    // masked softmax
    let mut store = ParamStore::new();
    let x = store.add("x", Tensor::param((0..12).map(|_| rng.uniform_signed()).collect(), vec![3, 4]));
    let mask = Tensor::new(vec![1., 1., 0., 1., 1., 1., 1., 0., 1., 1., 1., 1.], vec![3, 4]);
    let weights = Tensor::from_fn(vec![3, 4], |i| (i % 5) as f64 * 0.3 - 0.5);
    let err = grad_check(&mut store, 1e-5, |p| {
        let mut tape = Tape::new();
        let xv = tape.param(p, x);
        let y = tape.softmax_rows(xv, Some(&mask))?;
        let w = tape.value_leaf(&weights);
        let weighted = tape.mul(y, w)?;
        let loss = tape.mean(weighted);
        Ok((tape, loss))
    })?;
    report("softmax_rows", err);

    // one full encoder block
    use deberta_lcf::attention::{encoder_layer, EncoderParams, PositionProjections, RelPosTable, TermFlags};
    let mut store = ParamStore::new();
    let rel = RelPosTable::init(&mut store, "rel", 3, 8, &mut rng, 0.3);
    let pos = PositionProjections::init(&mut store, "pos", 8, 2, &mut rng, 0.3);
    let enc = EncoderParams::init(&mut store, "enc", 8, 16, 2, &pos, TermFlags::all(), &mut rng, 0.3);
    let h = Tensor::from_fn(vec![4, 8], |_| rng.uniform_signed());
    let pad = vec![1.0; 4];
    let err = grad_check(&mut store, 1e-5, |p| {
        let mut tape = Tape::new();
        let mut drop_rng = Rng::new(0);
        let hv = tape.value_leaf(&h);
        let out = encoder_layer(&mut tape, p, hv, &enc, &rel, &pad, 0.0, &mut drop_rng)?;
        let loss = tape.mean(out);
        Ok((tape, loss))
    })?;
    report("encoder_layer", err);

    // the entire model, every parameter
    let config = ModelConfig {
        layers: 1,
        heads: 2,
        d_model: 8,
        d_ff: 16,
        max_rel_distance: 4,
        vocab_size: 14,
        dropout: 0.0,
        alpha: 1,
        mode: LcfMode::Cdw,
        use_p2p: true,
        seed: 3,
    };
    let model = build(&config)?;
    let batch = batch_of(&[Example {
        tokens: vec![4, 5, 6, 7],
        span: AspectSpan::new(1, 1, 0, 0),
        label: Polarity::Positive,
    }]);
    let labels = batch.labels.clone();
    let deberta_lcf::DebertaLcfModel { config, layout, mut params } = model;
    let count = params.total_len();
    let err = grad_check(&mut params, 1e-5, |p| {
        let mut tape = Tape::new();
        let mut drop_rng = Rng::new(0);
        let logits = forward_batch(&mut tape, p, &config, &layout, &batch, &mut drop_rng)?;
        let loss = tape.cross_entropy(logits, &labels)?;
        Ok((tape, loss))
    })?;
    report("full model", err);
    println!("({count} scalar parameters checked by central differences)");
    Ok(())
}
