use std::io::BufRead;
use std::path::Path;

use super::vocab::Vocabularies;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Overwrites the rows of `matrix` (|words| × dim) for every vocabulary word
/// listed in the vector file. Later lines win over earlier ones for a repeated
/// word. Returns the number of distinct rows overwritten.
pub fn load_pretrained_words(
    path: impl AsRef<Path>,
    vocab: &Vocabularies,
    matrix: &mut Tensor,
) -> Result<usize> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_pretrained_words(std::io::BufReader::new(file), vocab, matrix)
        .map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        })
}

pub fn read_pretrained_words(
    reader: impl BufRead,
    vocab: &Vocabularies,
    matrix: &mut Tensor,
) -> Result<usize> {
    let dim = matrix.shape()[1];
    let mut touched = vec![false; vocab.words.len()];
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<pretrained>", e))?;
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else {
            continue;
        };
        let values: Vec<f64> = fields
            .map(|f| {
                f.parse().map_err(|_| Error::Parse {
                    line: i + 1,
                    message: format!("bad vector component `{f}`"),
                })
            })
            .collect::<Result<_>>()?;
        if values.len() != dim {
            return Err(Error::EmbeddingDim {
                line: i + 1,
                expected: dim,
                found: values.len(),
            });
        }
        if let Some(id) = vocab.words.id(word) {
            matrix.row_mut(id).copy_from_slice(&values);
            touched[id] = true;
        }
    }
    Ok(touched.iter().filter(|&&t| t).count())
}
