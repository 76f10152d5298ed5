//! Tokenization, vocabularies, TF-IDF, query overlap and word embeddings.

mod embeddings;
mod sparse;
mod tokenize;
mod vocab;

pub use embeddings::{average_word_embedding, load_embeddings, read_embeddings, WordEmbeddingTable};
pub use sparse::{cosine_dense, tfidf, SparseVector};
pub use tokenize::{tokenize, Tokenizer};
pub use vocab::{TermId, Vocabulary};

use std::collections::HashSet;
use std::hash::Hash;

/// Set overlap `|a ∩ b| / |a ∪ b|`; two empty sets give 0.
pub fn jaccard_similarity<T: Eq + Hash>(a: &HashSet<T>, b: &HashSet<T>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Jaccard over sorted, deduplicated id slices.
pub fn jaccard_sorted(a: &[u32], b: &[u32]) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn set(words: &[&'static str]) -> HashSet<&'static str> {
        words.iter().copied().collect()
    }

    #[test]
    fn jaccard_examples() {
        assert_eq!(jaccard_similarity(&set(&["a", "b"]), &set(&["b", "a"])), 1.0);
        assert_eq!(jaccard_similarity(&set(&["a"]), &set(&["b"])), 0.0);
        assert_eq!(
            jaccard_similarity(&set(&["sam", "email"]), &set(&["sam", "address"])),
            1.0 / 3.0
        );
        assert_eq!(jaccard_similarity(&set(&[]), &set(&[])), 0.0);
    }

    proptest! {
        #[test]
        fn jaccard_symmetric_bounded(a in prop::collection::btree_set(0u32..12, 0..8),
                                     b in prop::collection::btree_set(0u32..12, 0..8)) {
            let ha: HashSet<u32> = a.iter().copied().collect();
            let hb: HashSet<u32> = b.iter().copied().collect();
            let s = jaccard_similarity(&ha, &hb);
            prop_assert_eq!(s, jaccard_similarity(&hb, &ha));
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert_eq!(s == 1.0, !a.is_empty() && a == b);
            let va: Vec<u32> = a.into_iter().collect();
            let vb: Vec<u32> = b.into_iter().collect();
            prop_assert_eq!(s, jaccard_sorted(&va, &vb));
        }
    }
}
