//! Target app selection for unified mobile search.
//!
//! Given a free-text query, rank the apps on a device by how likely each one
//! is to satisfy it. The crate covers the whole pipeline:
//!
//! - [`corpus`]: query records, app catalog, splitting, synthetic data
//! - [`text`]: tokenization, vocabularies, TF-IDF, word embeddings
//! - [`baselines`]: popularity, query likelihood, BM25, Bo1 expansion,
//!   k-NN and LambdaMART rankers over per-app query documents
//! - [`neural`]: the pair-scoring and classification networks with
//!   hand-written backpropagation and seeded training
//! - [`eval`]: graded-relevance metrics, paired t-tests and the
//!   multi-method experiment runner
//! - [`analysis`]: query-log statistics and embedding projection

pub mod analysis;
pub mod baselines;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod neural;
pub mod ranking;
pub mod seed;
pub mod text;

pub use error::{Error, Result};
