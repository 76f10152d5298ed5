use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{AppId, Dataset};
use crate::text::{TermId, Tokenizer, Vocabulary};

/// All training queries labeled with one app, as a bag of terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AppDocument {
    pub app: AppId,
    pub terms: BTreeMap<TermId, u32>,
    pub length: u32,
}

/// Term-to-app postings over the per-app query documents.
///
/// Term statistics (document and collection frequency, total length) come
/// from a [`Vocabulary`] built with one document per indexed app.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvertedIndex {
    vocab: Vocabulary,
    postings: Vec<Vec<(AppId, u32)>>,
    documents: Vec<Option<AppDocument>>,
    avgdl: f64,
}

impl InvertedIndex {
    /// Index every app that appears in at least one training record.
    pub fn build(train: &Dataset, tokenizer: &Tokenizer) -> Self {
        let n_apps = train.apps().len();
        let mut tokens_by_app: Vec<Vec<String>> = vec![Vec::new(); n_apps];
        let mut has_doc = vec![false; n_apps];
        for record in train.records() {
            let tokens = tokenizer.tokenize(&record.text);
            for app in &record.target_apps {
                has_doc[app.index()] = true;
                tokens_by_app[app.index()].extend(tokens.iter().cloned());
            }
        }
        let indexed: Vec<usize> = (0..n_apps).filter(|&a| has_doc[a]).collect();
        let vocab = Vocabulary::build(indexed.iter().map(|&a| tokens_by_app[a].iter()));

        let mut postings = vec![Vec::new(); vocab.len()];
        let mut documents = vec![None; n_apps];
        for &a in &indexed {
            let mut terms: BTreeMap<TermId, u32> = BTreeMap::new();
            for token in &tokens_by_app[a] {
                let id = vocab.id(token).expect("token indexed above");
                *terms.entry(id).or_default() += 1;
            }
            for (&id, &tf) in &terms {
                postings[id as usize].push((AppId(a as u32), tf));
            }
            documents[a] = Some(AppDocument {
                app: AppId(a as u32),
                length: tokens_by_app[a].len() as u32,
                terms,
            });
        }
        let avgdl = if indexed.is_empty() {
            0.0
        } else {
            vocab.total_terms() as f64 / indexed.len() as f64
        };
        InvertedIndex {
            vocab,
            postings,
            documents,
            avgdl,
        }
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    /// Number of app documents.
    pub fn n_docs(&self) -> usize {
        self.vocab.n_docs()
    }

    pub fn n_apps(&self) -> usize {
        self.documents.len()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn postings(&self, term: TermId) -> &[(AppId, u32)] {
        &self.postings[term as usize]
    }

    pub fn document(&self, app: AppId) -> Option<&AppDocument> {
        self.documents[app.index()].as_ref()
    }

    pub fn documents(&self) -> impl Iterator<Item = &AppDocument> {
        self.documents.iter().flatten()
    }

    pub fn tf(&self, term: TermId, app: AppId) -> u32 {
        let list = self.postings(term);
        list.binary_search_by_key(&app, |p| p.0)
            .map(|i| list[i].1)
            .unwrap_or(0)
    }

    /// In-vocabulary query terms with their occurrence counts, by term id.
    pub fn query_terms<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<(TermId, f64)> {
        let mut counts: BTreeMap<TermId, f64> = BTreeMap::new();
        for id in self.vocab.ids_of(tokens) {
            *counts.entry(id).or_default() += 1.0;
        }
        counts.into_iter().collect()
    }
}
