use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::{Error, Result};

/// Pretrained word vectors keyed by lowercased token.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WordEmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl WordEmbeddingTable {
    pub fn from_map(vectors: HashMap<String, Vec<f64>>) -> Result<Self> {
        let mut dim = None;
        let mut lowered = HashMap::with_capacity(vectors.len());
        for (token, v) in vectors {
            match dim {
                None => dim = Some(v.len()),
                Some(d) if d != v.len() => {
                    return Err(Error::InvalidConfig(format!(
                        "embedding for `{token}` has {} values, expected {d}",
                        v.len()
                    )))
                }
                _ => {}
            }
            lowered.insert(token.to_lowercase(), v);
        }
        Ok(WordEmbeddingTable {
            dim: dim.unwrap_or(0),
            vectors: lowered,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        match self.vectors.get(token) {
            Some(v) => Some(v),
            None => self.vectors.get(&token.to_lowercase()).map(Vec::as_slice),
        }
    }

    /// GloVe-style text, tokens sorted for stable output.
    pub fn write(&self, mut out: impl Write) -> Result<()> {
        let mut tokens: Vec<&String> = self.vectors.keys().collect();
        tokens.sort();
        for token in tokens {
            write!(out, "{token}")?;
            for x in &self.vectors[token] {
                write!(out, " {x}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<WordEmbeddingTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    read_embeddings(file)
}

/// Parse `token v1 v2 ... vd` lines; the first line fixes `d`.
/// A repeated token keeps its last vector.
pub fn read_embeddings(reader: impl Read) -> Result<WordEmbeddingTable> {
    let mut dim = None;
    let mut vectors = HashMap::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else {
            continue;
        };
        let values = fields
            .map(|f| {
                f.parse::<f64>().map_err(|_| Error::Malformed {
                    line: line_no,
                    message: format!("unparseable value `{f}`"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        match dim {
            None if values.is_empty() => {
                return Err(Error::Malformed {
                    line: line_no,
                    message: "no vector values".into(),
                })
            }
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::Malformed {
                    line: line_no,
                    message: format!("expected {d} values, found {}", values.len()),
                })
            }
            _ => {}
        }
        if vectors.insert(token.to_lowercase(), values).is_some() {
            log::warn!("line {line_no}: duplicate embedding for `{token}`, keeping the later one");
        }
    }
    Ok(WordEmbeddingTable {
        dim: dim.unwrap_or(0),
        vectors,
    })
}

/// Unweighted mean of in-table token vectors; all-OOV gives the zero vector.
pub fn average_word_embedding<S: AsRef<str>>(tokens: &[S], table: &WordEmbeddingTable) -> Vec<f64> {
    let mut sum = vec![0.0; table.dim()];
    let mut count = 0usize;
    for token in tokens {
        if let Some(v) = table.get(token.as_ref()) {
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x;
            }
            count += 1;
        }
    }
    if count > 0 {
        for s in &mut sum {
            *s /= count as f64;
        }
    }
    sum
}
