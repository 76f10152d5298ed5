use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

/// Lowercasing word splitter.
///
/// Alphanumeric runs become tokens; every other character separates them,
/// except characters in `retained`, which are emitted as tokens of their own.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tokenizer {
    pub retained: BTreeSet<char>,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Tokenizer {
            retained: BTreeSet::from(['?']),
        }
    }
}

impl Tokenizer {
    /// A tokenizer that drops all punctuation.
    pub fn words_only() -> Self {
        Tokenizer {
            retained: BTreeSet::new(),
        }
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        let lower = text.to_lowercase();
        let mut tokens = Vec::new();
        let mut current = String::new();
        for c in lower.chars() {
            if c.is_alphanumeric() {
                current.push(c);
                continue;
            }
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            if self.retained.contains(&c) {
                tokens.push(c.to_string());
            }
        }
        if !current.is_empty() {
            tokens.push(current);
        }
        tokens
    }
}

/// Tokenize with the default tokenizer (retains `?`).
pub fn tokenize(text: &str) -> Vec<String> {
    Tokenizer::default().tokenize(text)
}
