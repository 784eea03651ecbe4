//! Versioned binary checkpoints.
//!
//! Layout: 4-byte magic `LCFD`, little-endian u32 version, length-prefixed
//! configuration text, u32 tensor count, then per-tensor records
//! (length-prefixed name, u32 rank, u64 dims, raw little-endian f64
//! values), and finally the length-prefixed vocabulary block. All lengths
//! are little-endian u32 byte counts.

use crate::data::Vocab;
use crate::error::{Error, Result};
use crate::model::{build, DebertaLcfModel, ModelConfig};
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"LCFD";
pub const VERSION: u32 = 1;

fn ck(field: &str, msg: impl Into<String>) -> Error {
    Error::Checkpoint { field: field.to_string(), msg: msg.into() }
}

// ── Writing ──────────────────────────────────────────────────────────

fn write_bytes(w: &mut impl Write, field: &str, bytes: &[u8]) -> Result<()> {
    let len = u32::try_from(bytes.len()).map_err(|_| ck(field, "block too large"))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(bytes)?;
    Ok(())
}

/// Serialize the model and its vocabulary.
pub fn save_checkpoint(model: &DebertaLcfModel, vocab: &Vocab, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    write_bytes(&mut out, "config", model.config.to_kv_string().as_bytes())?;

    let count = u32::try_from(model.params.len()).unwrap();
    out.write_all(&count.to_le_bytes())?;
    for (name, tensor) in model.params.iter() {
        write_bytes(&mut out, name, name.as_bytes())?;
        out.write_all(&u32::try_from(tensor.shape.len()).unwrap().to_le_bytes())?;
        for &dim in &tensor.shape {
            out.write_all(&(dim as u64).to_le_bytes())?;
        }
        for &v in &tensor.data {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    write_bytes(&mut out, "vocabulary", vocab.to_file_string().as_bytes())?;
    std::fs::write(path, out)?;
    Ok(())
}

// ── Reading ──────────────────────────────────────────────────────────

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn exact(&mut self, field: &str, buf: &mut [u8]) -> Result<()> {
        self.inner
            .read_exact(buf)
            .map_err(|_| ck(field, "file is truncated"))
    }

    fn u32(&mut self, field: &str) -> Result<u32> {
        let mut b = [0u8; 4];
        self.exact(field, &mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    fn u64(&mut self, field: &str) -> Result<u64> {
        let mut b = [0u8; 8];
        self.exact(field, &mut b)?;
        Ok(u64::from_le_bytes(b))
    }

    fn f64(&mut self, field: &str) -> Result<f64> {
        let mut b = [0u8; 8];
        self.exact(field, &mut b)?;
        Ok(f64::from_le_bytes(b))
    }

    fn string(&mut self, field: &str) -> Result<String> {
        let len = self.u32(field)? as usize;
        let mut buf = vec![0u8; len];
        self.exact(field, &mut buf)?;
        String::from_utf8(buf).map_err(|_| ck(field, "block is not valid UTF-8"))
    }
}

/// Load a checkpoint, rebuilding the model from its embedded
/// configuration. Every tensor must match the layout the configuration
/// implies, by name and by shape.
pub fn load_checkpoint(path: &Path) -> Result<(DebertaLcfModel, Vocab)> {
    let file = std::fs::File::open(path)?;
    let mut r = Reader { inner: std::io::BufReader::new(file) };

    let mut magic = [0u8; 4];
    r.exact("magic", &mut magic)?;
    if &magic != MAGIC {
        return Err(ck("magic", format!("expected {MAGIC:?}, found {magic:?}")));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(ck("version", format!("unsupported version {version} (expected {VERSION})")));
    }

    let config_text = r.string("config")?;
    let config = ModelConfig::from_kv_string(&config_text)?;
    let mut model = build(&config)?;

    let count = r.u32("tensor count")? as usize;
    if count != model.params.len() {
        return Err(ck(
            "tensor count",
            format!("{count} tensors but the configuration implies {}", model.params.len()),
        ));
    }
    let mut loaded = vec![false; model.params.len()];
    for _ in 0..count {
        let name = r.string("tensor name")?;
        let rank = r.u32(&name)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u64(&name)? as usize);
        }
        let Some(id) = model.params.by_name(&name) else {
            return Err(ck(&name, "tensor does not exist in this configuration"));
        };
        if model.params.get(id).shape != shape {
            return Err(ck(
                &name,
                format!("shape {:?} does not match expected {:?}", shape, model.params.get(id).shape),
            ));
        }
        if loaded[id.0] {
            return Err(ck(&name, "tensor appears twice"));
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            data.push(r.f64(&name)?);
        }
        model.params.get_mut(id).data = data;
        loaded[id.0] = true;
    }
    let vocab_text = r.string("vocabulary")?;
    let vocab = Vocab::from_file_string(&vocab_text)?;
    if vocab.len() != config.vocab_size {
        return Err(ck(
            "vocabulary",
            format!("{} entries but the configuration says {}", vocab.len(), config.vocab_size),
        ));
    }
    Ok((model, vocab))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{batch_of, Example, Polarity};
    use crate::lcf::{AspectSpan, LcfMode};
    use crate::rng::Rng;
    use crate::tensor::Tape;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("deberta-lcf-ckpt-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    fn fixture_model(seed: u64) -> (DebertaLcfModel, Vocab) {
        let vocab = Vocab::build(["the", "soup", "was", "cold", "great"], 1);
        let config = ModelConfig {
            layers: 1,
            heads: 2,
            d_model: 8,
            d_ff: 16,
            max_rel_distance: 4,
            vocab_size: vocab.len(),
            dropout: 0.0,
            alpha: 3,
            mode: LcfMode::Cdw,
            use_p2p: true,
            seed,
        };
        (build(&config).unwrap(), vocab)
    }

    fn sample_logits(model: &DebertaLcfModel) -> Vec<f64> {
        let ex = Example {
            tokens: vec![4, 5, 6, 7],
            span: AspectSpan::new(1, 1, 0, 0),
            label: Polarity::Negative,
        };
        let batch = batch_of(&[ex]);
        let mut tape = Tape::new();
        let logits = model.forward(&mut tape, &batch, &mut Rng::new(0)).unwrap();
        tape.value(logits).to_vec()
    }

    #[test]
    fn round_trip_preserves_forward_outputs_bitwise() {
        let (model, vocab) = fixture_model(5);
        let path = tmp("roundtrip.ckpt");
        save_checkpoint(&model, &vocab, &path).unwrap();
        let (reloaded, vocab2) = load_checkpoint(&path).unwrap();
        assert_eq!(vocab, vocab2);
        assert_eq!(reloaded.config, model.config);
        let a = sample_logits(&model);
        let b = sample_logits(&reloaded);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn truncated_file_is_a_load_error() {
        let (model, vocab) = fixture_model(6);
        let path = tmp("truncated.ckpt");
        save_checkpoint(&model, &vocab, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        match load_checkpoint(&path) {
            Err(Error::Checkpoint { .. }) => {}
            other => panic!("expected checkpoint error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let path = tmp("magic.ckpt");
        std::fs::write(&path, b"NOPE....").unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");
    }

    #[test]
    fn config_tensor_mismatch_names_the_field() {
        // write a checkpoint, then edit its config text so the expected
        // shapes no longer match the stored tensors
        let (model, vocab) = fixture_model(7);
        let path = tmp("mismatch.ckpt");
        save_checkpoint(&model, &vocab, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let config_text = model.config.to_kv_string();
        let swapped = config_text.replace("d_model = 8", "d_model = 16");
        assert_ne!(config_text, swapped);
        let mut out = bytes[..8].to_vec();
        out.extend_from_slice(&(swapped.len() as u32).to_le_bytes());
        out.extend_from_slice(swapped.as_bytes());
        out.extend_from_slice(&bytes[8 + 4 + config_text.len()..]);
        std::fs::write(&path, out).unwrap();
        match load_checkpoint(&path) {
            Err(Error::Checkpoint { field, .. }) => {
                assert!(!field.is_empty());
            }
            other => panic!("expected checkpoint error, got {other:?}"),
        }
    }

    #[test]
    fn unsupported_version_is_rejected() {
        let (model, vocab) = fixture_model(8);
        let path = tmp("version.ckpt");
        save_checkpoint(&model, &vocab, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 99;
        std::fs::write(&path, bytes).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
    }
}
