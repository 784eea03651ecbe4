//! Inspect the disentangled attention score decomposition: the
//! content/position terms for one head, and the exact collapse to
//! content-only attention when the position table is zeroed.
//!
//! ```bash
//! cargo run --example disentangled_attention
//! ```

use deberta_lcf::attention::{
    disentangled_score_terms, disentangled_scores, AttentionParams, PositionProjections,
    RelPosTable, TermFlags,
};
use deberta_lcf::tensor::{ParamStore, Tape, Tensor};
use deberta_lcf::{Result, Rng};

fn print_matrix(name: &str, data: &[f64], n: usize) {
    println!("{name}:");
    for i in 0..n {
        let row: Vec<String> = (0..n).map(|j| format!("{:+.3}", data[i * n + j])).collect();
        println!("  {}", row.join(" "));
    }
}

fn main() -> Result<()> {
    let n = 4;
    let d = 6;
    let k = 3;
    let mut store = ParamStore::new();
    let mut rng = Rng::new(42);
    let rel = RelPosTable::init(&mut store, "rel", k, d, &mut rng, 0.5);
    let pos = PositionProjections::init(&mut store, "pos", d, 1, &mut rng, 0.5);
    let attn = AttentionParams::init(&mut store, "attn", d, 1, &pos, TermFlags::all(), &mut rng, 0.5);
    let h = Tensor::from_fn(vec![n, d], |_| rng.uniform_signed());

    let mut tape = Tape::new();
    let hv = tape.value_leaf(&h);
    let terms = disentangled_score_terms(&mut tape, &store, hv, &rel, &attn, 0)?;
    println!("score terms for one head over {n} tokens (before scaling)\n");
    print_matrix("content -> content", tape.value(terms.c2c.unwrap()), n);
    print_matrix("content -> position", tape.value(terms.c2p.unwrap()), n);
    print_matrix("position -> content", tape.value(terms.p2c.unwrap()), n);
    print_matrix("position -> position", tape.value(terms.p2p.unwrap()), n);

    let combined = disentangled_scores(&mut tape, &store, hv, &rel, &attn, 0)?;
    print_matrix("\ncombined, scaled by 1/sqrt(4*d_head)", tape.value(combined), n);

    // zero the position table: every position term vanishes exactly
    store.get_mut(rel.table).data.iter_mut().for_each(|v| *v = 0.0);
    let mut tape = Tape::new();
    let hv = tape.value_leaf(&h);
    let terms = disentangled_score_terms(&mut tape, &store, hv, &rel, &attn, 0)?;
    let max_pos_term = [terms.c2p, terms.p2c, terms.p2p]
        .into_iter()
        .flatten()
        .flat_map(|v| tape.value(v).to_vec())
        .fold(0.0_f64, |acc, x| acc.max(x.abs()));
    println!("\nwith a zeroed position table the position terms peak at {max_pos_term:.1e} (exactly zero)");
    Ok(())
}
