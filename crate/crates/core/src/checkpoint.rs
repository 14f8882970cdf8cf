//! Binary checkpoints holding the run configuration, the vocabularies and
//! every parameter tensor.
//!
//! Layout, all integers little-endian `u64`, floats little-endian `f64`,
//! strings as a length followed by UTF-8 bytes:
//!
//! ```text
//! magic "JOINTRE\x01"
//! config text (key = value lines)
//! word count, then (word, training frequency) pairs
//! char count, chars
//! entity tag count, tags
//! relation label count, labels
//! parameter count, then (name, rank, dims.., values..)
//! ```

use std::path::Path;

use crate::config::RunConfig;
use crate::data::{Boundary, SymbolTable, Vocabularies};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::numerics::{ParamStore, Tensor};

const MAGIC: &[u8; 8] = b"JOINTRE\x01";

struct Writer(Vec<u8>);

impl Writer {
    fn u64(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u64).to_le_bytes());
    }

    fn str(&mut self, s: &str) {
        self.u64(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }

    fn table(&mut self, t: &SymbolTable) {
        self.u64(t.len());
        for s in t.symbols() {
            self.str(s);
        }
    }
}

struct Reader<'b> {
    bytes: &'b [u8],
    pos: usize,
}

impl<'b> Reader<'b> {
    fn take(&mut self, n: usize) -> Result<&'b [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u64(&mut self) -> Result<usize> {
        let b = self.take(8)?;
        let v = u64::from_le_bytes(b.try_into().expect("eight bytes"));
        usize::try_from(v).map_err(|_| Error::Checkpoint(format!("length {v} too large")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("eight bytes")))
    }

    fn str(&mut self) -> Result<String> {
        let n = self.u64()?;
        let at = self.pos;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Checkpoint(format!("invalid UTF-8 at byte {at}")))
    }

    fn table(&mut self) -> Result<SymbolTable> {
        let n = self.u64()?;
        let symbols = (0..n).map(|_| self.str()).collect::<Result<Vec<_>>>()?;
        Ok(SymbolTable::from_symbols(symbols))
    }
}

pub fn to_bytes(model: &Model) -> Vec<u8> {
    let mut w = Writer(MAGIC.to_vec());
    w.str(&model.config.to_kv_string());
    let v = &model.vocab;
    w.u64(v.words.len());
    for (word, &count) in v.words.symbols().iter().zip(&v.word_counts) {
        w.str(word);
        w.u64(count);
    }
    w.table(&v.chars);
    w.table(&v.entity_tags);
    w.table(&v.relations);
    w.u64(model.params.len());
    for (_, name, t) in model.params.iter() {
        w.str(name);
        w.u64(t.shape().len());
        for &d in t.shape() {
            w.u64(d);
        }
        for &x in t.values() {
            w.0.extend_from_slice(&x.to_le_bytes());
        }
    }
    w.0
}

/// Rebuilds the model, checking every stored tensor against the shapes its
/// configuration and vocabularies imply.
pub fn from_bytes(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len()).ok() != Some(&MAGIC[..]) {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let config = RunConfig::from_kv_str(&r.str()?)?;
    let n = r.u64()?;
    let mut words = Vec::with_capacity(n.min(1 << 20));
    let mut word_counts = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        words.push(r.str()?);
        word_counts.push(r.u64()?);
    }
    let vocab = Vocabularies {
        words: SymbolTable::from_symbols(words),
        word_counts,
        chars: r.table()?,
        entity_tags: r.table()?,
        boundary_tags: SymbolTable::from_symbols(Boundary::ALL.iter().map(|b| b.letter())),
        relations: r.table()?,
    };
    let mut params = ParamStore::new();
    for _ in 0..r.u64()? {
        let name = r.str()?;
        let rank = r.u64()?;
        let shape = (0..rank).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        let len = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .filter(|&l| l > 0 && l <= bytes.len() / 8)
            .ok_or_else(|| Error::Checkpoint(format!("parameter `{name}` has bad shape {shape:?}")))?;
        let values = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        if params.id(&name).is_some() {
            return Err(Error::Checkpoint(format!("parameter `{name}` stored twice")));
        }
        params.add(name, Tensor::new(shape, values));
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let mut model = Model::new(config, vocab)?;
    model.audit_shapes(&params)?;
    model.params.copy_values_from(&params);
    Ok(model)
}

pub fn save(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::parse_corpus_str;

    fn model() -> Model {
        let corpus = parse_corpus_str("0\tAnn\tU-Peop\n1\tin\tO\n2\tOslo\tU-Loc\nR\t0\t2\tLive_In\n").unwrap();
        let mut c = RunConfig::default();
        c.dims.word = 3;
        c.dims.char = 2;
        c.dims.label = 2;
        c.dims.ffnn = 3;
        c.dims.lstm_hidden = 2;
        c.dims.lstm_layers = 1;
        Model::new(c, Vocabularies::build(&corpus)).unwrap()
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let m = model();
        let bytes = to_bytes(&m);
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(back.params, m.params);
        assert_eq!(back.vocab, m.vocab);
        assert_eq!(back.config, m.config);
        assert_eq!(to_bytes(&back), bytes);
    }

    #[test]
    fn corrupt_input_is_an_error() {
        let bytes = to_bytes(&model());
        assert!(from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(from_bytes(b"nonsense").is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(from_bytes(&extra).is_err());
    }

    #[test]
    fn shape_mismatch_names_the_parameter() {
        let m = model();
        let mut bytes = to_bytes(&m);
        // rewrite the stored config so the checkpoint's tensors no longer fit
        let text = m.config.to_kv_string();
        let patched = text.replace("ffnn_dim = 3", "ffnn_dim = 4");
        assert_eq!(patched.len(), text.len());
        let at = bytes.windows(text.len()).position(|w| w == text.as_bytes()).unwrap();
        bytes[at..at + text.len()].copy_from_slice(patched.as_bytes());
        match from_bytes(&bytes) {
            Err(Error::ParamMismatch { name, expected, found }) => {
                assert_eq!(name, "rc.head.w");
                assert_eq!(expected, vec![4, 4]);
                assert_eq!(found, vec![3, 4]);
            }
            other => panic!("unexpected {:?}", other.map(|m| m.config)),
        }
    }
}
