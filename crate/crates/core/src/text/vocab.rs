use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub type TermId = u32;

/// Term dictionary with document and collection frequencies.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabularyData", into = "VocabularyData")]
pub struct Vocabulary {
    terms: Vec<String>,
    ids: HashMap<String, TermId>,
    df: Vec<u32>,
    cf: Vec<u64>,
    total_terms: u64,
    n_docs: usize,
}

#[derive(Clone, Serialize, Deserialize)]
struct VocabularyData {
    terms: Vec<String>,
    df: Vec<u32>,
    cf: Vec<u64>,
    total_terms: u64,
    n_docs: usize,
}

impl From<VocabularyData> for Vocabulary {
    fn from(d: VocabularyData) -> Self {
        let ids = d
            .terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TermId))
            .collect();
        Vocabulary {
            terms: d.terms,
            ids,
            df: d.df,
            cf: d.cf,
            total_terms: d.total_terms,
            n_docs: d.n_docs,
        }
    }
}

impl From<Vocabulary> for VocabularyData {
    fn from(v: Vocabulary) -> Self {
        VocabularyData {
            terms: v.terms,
            df: v.df,
            cf: v.cf,
            total_terms: v.total_terms,
            n_docs: v.n_docs,
        }
    }
}

impl Vocabulary {
    /// Build from tokenized documents; ids follow first occurrence.
    pub fn build<'a, I, D>(docs: I) -> Self
    where
        I: IntoIterator<Item = D>,
        D: IntoIterator<Item = &'a String>,
    {
        let mut vocab = Vocabulary::default();
        let mut last_doc: Vec<usize> = Vec::new();
        for doc in docs {
            vocab.n_docs += 1;
            for token in doc {
                let id = match vocab.ids.get(token) {
                    Some(&id) => id,
                    None => {
                        let id = vocab.terms.len() as TermId;
                        vocab.ids.insert(token.clone(), id);
                        vocab.terms.push(token.clone());
                        vocab.df.push(0);
                        vocab.cf.push(0);
                        last_doc.push(0);
                        id
                    }
                } as usize;
                vocab.cf[id] += 1;
                vocab.total_terms += 1;
                if last_doc[id] != vocab.n_docs {
                    last_doc[id] = vocab.n_docs;
                    vocab.df[id] += 1;
                }
            }
        }
        vocab
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn id(&self, term: &str) -> Option<TermId> {
        self.ids.get(term).copied()
    }

    pub fn term(&self, id: TermId) -> &str {
        &self.terms[id as usize]
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn df(&self, id: TermId) -> u32 {
        self.df[id as usize]
    }

    pub fn cf(&self, id: TermId) -> u64 {
        self.cf[id as usize]
    }

    pub fn total_terms(&self) -> u64 {
        self.total_terms
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    /// Map tokens to ids, dropping out-of-vocabulary ones.
    pub fn ids_of<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<TermId> {
        tokens.iter().filter_map(|t| self.id(t.as_ref())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(raw: &[&str]) -> Vec<Vec<String>> {
        raw.iter()
            .map(|d| d.split_whitespace().map(String::from).collect())
            .collect()
    }

    #[test]
    fn frequencies() {
        let d = docs(&["a b a", "b c", "c c c"]);
        let v = Vocabulary::build(d.iter());
        assert_eq!(v.len(), 3);
        assert_eq!(v.n_docs(), 3);
        let a = v.id("a").unwrap();
        let c = v.id("c").unwrap();
        assert_eq!((v.df(a), v.cf(a)), (1, 2));
        assert_eq!((v.df(c), v.cf(c)), (2, 4));
        assert_eq!(v.total_terms(), 8);
        assert_eq!(v.ids_of(&["c", "zzz", "a"]), vec![c, a]);
    }

    #[test]
    fn deserialized_vocabulary_has_lookup() {
        let d = docs(&["x y"]);
        let v = Vocabulary::build(d.iter());
        let back: Vocabulary = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
        assert_eq!(back.id("y"), Some(1));
        assert_eq!(back, v);
    }
}
