//! Show how the local context focus layer sees a sentence: the
//! semantic-relative distance of every token from the aspect, the CDM
//! mask, and the CDW weights at a few thresholds.
//!
//! ```bash
//! cargo run --example lcf_masks
//! cargo run --example lcf_masks -- "the soup was cold but the staff was lovely" soup
//! ```

use deberta_lcf::data::{char_span_to_token_span, tokenize};
use deberta_lcf::lcf::{cdm_mask, cdw_weights, compute_srd};
use deberta_lcf::Result;

fn main() -> Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (text, aspect) = if args.len() == 2 {
        (args[0].clone(), args[1].clone())
    } else {
        (
            "the pasta was delicious but the service was awful".to_string(),
            "pasta".to_string(),
        )
    };

    let lower = text.to_lowercase();
    let byte = lower.find(&aspect.to_lowercase()).expect("aspect occurs in the text");
    let char_from = lower[..byte].chars().count();
    let char_to = char_from + aspect.chars().count();

    let tokens = tokenize(&text);
    let span = char_span_to_token_span(&tokens, char_from, char_to)?;
    let srd = compute_srd(tokens.len(), &span)?;

    println!("aspect: {aspect:?} -> tokens [{}, {}]\n", span.token_start, span.token_end);
    println!("{:<12} {:>4} {:>6} {:>6} {:>6}", "token", "srd", "cdm@1", "cdm@2", "cdw@1");
    let m1 = cdm_mask(&srd, 1, 1);
    let m2 = cdm_mask(&srd, 2, 1);
    let w1 = cdw_weights(&srd, 1);
    for (i, tok) in tokens.iter().enumerate() {
        println!(
            "{:<12} {:>4} {:>6} {:>6} {:>6.3}",
            tok.text, srd.values[i], m1.data[i], m2.data[i], w1.data[i]
        );
    }
    println!("\ncdm zeroes rows beyond the threshold; cdw decays them linearly toward zero");
    Ok(())
}
