//! Versioned binary checkpoints.
//!
//! Layout (all integers little-endian `u64` unless noted):
//!
//! ```text
//! magic "RFADOCCK" | version u32
//! config text length | config text (key = value lines)
//! vocab text length  | vocab text (empty when absent)
//! tensor count
//! per tensor: name length | name | rows | cols | rows*cols f64 LE
//! ```
//!
//! Random feature maps are not stored; they are redrawn from the config seed.

use std::path::Path;

use crate::error::{Error, Result};
use crate::fsutil::write_file;
use crate::transformer::{init_parameters, Model, ModelConfig};
use crate::vocab::Vocab;

pub const MAGIC: &[u8; 8] = b"RFADOCCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model,
    pub vocab: Option<Vocab>,
}

pub fn encode(model: &Model, vocab: Option<&Vocab>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let config: String = model
        .config
        .to_pairs()
        .into_iter()
        .map(|(k, v)| format!("{k} = {v}\n"))
        .collect();
    put_bytes(&mut out, config.as_bytes());
    put_bytes(&mut out, vocab.map(Vocab::to_text).unwrap_or_default().as_bytes());
    let names = model.params.names();
    let leaves = model.params.leaves();
    put_u64(&mut out, leaves.len() as u64);
    for (name, t) in names.iter().zip(leaves) {
        put_bytes(&mut out, name.as_bytes());
        put_u64(&mut out, t.rows as u64);
        put_u64(&mut out, t.cols as u64);
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::parse("checkpoint", "bad magic"));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::parse("checkpoint", format!("unsupported version {version}")));
    }
    let config_text = r.string()?;
    let mut config = ModelConfig::default();
    for line in config_text.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse("checkpoint", format!("bad config line {line:?}")))?;
        config.set(k.trim(), v)?;
    }
    config.validate()?;
    let vocab_text = r.string()?;
    let vocab = if vocab_text.is_empty() {
        None
    } else {
        Some(Vocab::from_text(&vocab_text)?)
    };
    if let Some(v) = &vocab {
        if v.len() != config.vocab_size {
            return Err(Error::parse(
                "checkpoint",
                format!("vocab has {} symbols, config says {}", v.len(), config.vocab_size),
            ));
        }
    }

    let mut params = init_parameters(&config)?;
    let names = params.names();
    let count = r.u64()? as usize;
    if count != names.len() {
        return Err(Error::parse(
            "checkpoint",
            format!("{count} tensors stored, model has {}", names.len()),
        ));
    }
    for (name, t) in names.iter().zip(params.leaves_mut()) {
        let stored = r.string()?;
        if stored != *name {
            return Err(Error::parse("checkpoint", format!("expected tensor {name}, found {stored}")));
        }
        let (rows, cols) = (r.u64()? as usize, r.u64()? as usize);
        if (rows, cols) != (t.rows, t.cols) {
            return Err(Error::parse(
                "checkpoint",
                format!("tensor {name} is {rows}x{cols}, expected {}x{}", t.rows, t.cols),
            ));
        }
        for v in t.data.iter_mut() {
            *v = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::parse("checkpoint", "trailing bytes"));
    }
    Ok(Checkpoint {
        model: Model::from_parts(config, params)?,
        vocab,
    })
}

pub fn save(path: &Path, model: &Model, vocab: Option<&Vocab>, force: bool) -> Result<()> {
    write_file(path, encode(model, vocab), force)
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    put_u64(out, b.len() as u64);
    out.extend_from_slice(b);
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::parse("checkpoint", "truncated file"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u64()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::parse("checkpoint", "invalid utf-8"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transformer::Variant;

    #[test]
    fn round_trip_is_bit_exact() {
        let config = ModelConfig {
            vocab_size: 9,
            d_model: 8,
            n_heads: 2,
            d_ff: 8,
            sigma: 0.7,
            ..ModelConfig::default()
        }
        .with_variant(Variant::RfaSgateAvg);
        let model = Model::new(config).unwrap();
        let vocab = Vocab::new(["a", "b", "c", "d", "e"]).unwrap();
        let bytes = encode(&model, Some(&vocab));
        let back = decode(&bytes).unwrap();
        assert_eq!(back.model.config, model.config);
        assert_eq!(back.model.params, model.params);
        assert_eq!(back.vocab.as_ref(), Some(&vocab));
        assert_eq!(encode(&back.model, back.vocab.as_ref()), bytes);
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let model = Model::new(ModelConfig {
            vocab_size: 9,
            d_model: 8,
            n_heads: 2,
            d_ff: 8,
            ..ModelConfig::default()
        })
        .unwrap();
        let bytes = encode(&model, None);
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode(b"nonsense").is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode(&extra).is_err());
    }
}
