use std::collections::HashMap;
use std::io::BufRead;

use super::RuntimeError;

/// Word vectors in the whitespace-separated text format, one
/// `word v1 v2 ... vd` per line. A leading `count dim` header line (as
/// written by word2vec) is skipped.
#[derive(Clone, Debug, Default)]
pub struct WordVectors {
    pub dim: usize,
    vectors: HashMap<String, Vec<f32>>,
}

impl WordVectors {
    pub fn read<R: BufRead>(reader: R) -> Result<WordVectors, RuntimeError> {
        let mut out = WordVectors::default();
        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| RuntimeError::Io(e.to_string()))?;
            let mut fields = line.split_whitespace();
            let Some(word) = fields.next() else {
                continue;
            };
            let values: Result<Vec<f32>, _> = fields.map(str::parse::<f32>).collect();
            let values = values.map_err(|_| RuntimeError::Format(format!(
                "word vectors line {}: non-numeric component",
                idx + 1
            )))?;
            if idx == 0 && values.len() == 1 && word.parse::<usize>().is_ok() {
                continue;
            }
            if values.is_empty() {
                continue;
            }
            if out.dim == 0 {
                out.dim = values.len();
            } else if values.len() != out.dim {
                return Err(RuntimeError::Format(format!(
                    "word vectors line {}: expected {} components, found {}",
                    idx + 1,
                    out.dim,
                    values.len()
                )));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(RuntimeError::Format(format!(
                    "word vectors line {}: non-finite component",
                    idx + 1
                )));
            }
            out.vectors.insert(word.to_owned(), values);
        }
        Ok(out)
    }

    pub fn get(&self, word: &str) -> Option<&[f32]> {
        self.vectors.get(word).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}
