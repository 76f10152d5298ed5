use serde::{Deserialize, Serialize};

use super::vocab::{TermId, Vocabulary};

/// Sparse vector with strictly increasing term ids and no stored zeros.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    entries: Vec<(TermId, f64)>,
}

impl SparseVector {
    /// Sum duplicate ids and drop zeros.
    pub fn from_unsorted(mut pairs: Vec<(TermId, f64)>) -> Self {
        pairs.sort_by_key(|p| p.0);
        let mut entries: Vec<(TermId, f64)> = Vec::with_capacity(pairs.len());
        for (id, w) in pairs {
            match entries.last_mut() {
                Some(last) if last.0 == id => last.1 += w,
                _ => entries.push((id, w)),
            }
        }
        entries.retain(|e| e.1 != 0.0);
        SparseVector { entries }
    }

    pub fn entries(&self) -> &[(TermId, f64)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (a, b) = (&self.entries, &other.entries);
        let (mut i, mut j, mut sum) = (0, 0, 0.0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    sum += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        sum
    }

    /// Cosine similarity; 0 when either vector is empty.
    pub fn cosine(&self, other: &SparseVector) -> f64 {
        let denom = self.norm() * other.norm();
        if denom == 0.0 {
            0.0
        } else {
            self.dot(other) / denom
        }
    }
}

/// TF-IDF with raw term frequency and smoothed idf `ln((n+1)/(df+1)) + 1`.
/// Out-of-vocabulary tokens are dropped.
pub fn tfidf<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary, n_docs: usize) -> SparseVector {
    let mut tf: Vec<(TermId, f64)> = vocab.ids_of(tokens).into_iter().map(|id| (id, 1.0)).collect();
    tf.sort_by_key(|p| p.0);
    let counted = SparseVector::from_unsorted(tf);
    let entries = counted
        .entries
        .into_iter()
        .map(|(id, tf)| {
            let idf = ((n_docs as f64 + 1.0) / (f64::from(vocab.df(id)) + 1.0)).ln() + 1.0;
            (id, tf * idf)
        })
        .collect();
    SparseVector { entries }
}

/// Cosine similarity of dense vectors; 0 if either has zero norm.
pub fn cosine_dense(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}
