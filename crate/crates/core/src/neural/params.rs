use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ModelKind;
use crate::seed;

/// Shape of a model: vocabulary size, embedding dimension, catalog size and
/// hidden-layer widths.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub kind: ModelKind,
    pub vocab: usize,
    pub dim: usize,
    pub apps: usize,
    pub hidden: (usize, usize),
}

impl Dims {
    pub fn output(&self) -> usize {
        if self.kind.scores_pairs() {
            1
        } else {
            self.apps
        }
    }

    /// Rows of the app embedding matrix (none for the classifier).
    pub fn app_rows(&self) -> usize {
        if self.kind.scores_pairs() {
            self.apps
        } else {
            0
        }
    }
}

/// Every trainable tensor. `a` has zero rows for the classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    /// Term embeddings, one row per vocabulary term.
    pub e: Array2<f64>,
    /// Raw (pre-softmax) term importance.
    pub w: Array1<f64>,
    /// App embeddings.
    pub a: Array2<f64>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w3: Array2<f64>,
    pub b3: Array1<f64>,
}

impl Params {
    pub fn zeros(dims: &Dims) -> Self {
        let (h1, h2) = dims.hidden;
        Params {
            e: Array2::zeros((dims.vocab, dims.dim)),
            w: Array1::zeros(dims.vocab),
            a: Array2::zeros((dims.app_rows(), dims.dim)),
            w1: Array2::zeros((h1, dims.dim)),
            b1: Array1::zeros(h1),
            w2: Array2::zeros((h2, h1)),
            b2: Array1::zeros(h2),
            w3: Array2::zeros((dims.output(), h2)),
            b3: Array1::zeros(dims.output()),
        }
    }

    /// Weights and embeddings uniform in `±1/sqrt(fan_in)` (the embedding
    /// dimension for E and A); term weights and biases start at zero.
    pub fn init(dims: &Dims, seed_value: u64) -> Self {
        let mut rng = seed::rng(seed::derive(seed_value, "init"));
        let mut p = Params::zeros(dims);
        let emb = 1.0 / (dims.dim as f64).sqrt();
        let mut fill = |m: &mut Array2<f64>, bound: f64| {
            for v in m.iter_mut() {
                *v = rng.random_range(-bound..bound);
            }
        };
        fill(&mut p.e, emb);
        fill(&mut p.a, emb);
        let (h1, h2) = dims.hidden;
        fill(&mut p.w1, 1.0 / (dims.dim as f64).sqrt());
        fill(&mut p.w2, 1.0 / (h1 as f64).sqrt());
        fill(&mut p.w3, 1.0 / (h2 as f64).sqrt());
        p
    }

    pub fn dims(&self, kind: ModelKind) -> Dims {
        Dims {
            kind,
            vocab: self.e.nrows(),
            dim: self.e.ncols(),
            apps: if kind.scores_pairs() { self.a.nrows() } else { self.b3.len() },
            hidden: (self.b1.len(), self.b2.len()),
        }
    }

    /// All tensors as flat row-major slices, in checkpoint order.
    pub fn slices(&self) -> [&[f64]; 9] {
        fn s(v: Option<&[f64]>) -> &[f64] {
            v.expect("parameters are contiguous")
        }
        [
            s(self.e.as_slice()),
            s(self.w.as_slice()),
            s(self.a.as_slice()),
            s(self.w1.as_slice()),
            s(self.b1.as_slice()),
            s(self.w2.as_slice()),
            s(self.b2.as_slice()),
            s(self.w3.as_slice()),
            s(self.b3.as_slice()),
        ]
    }

    pub fn slices_mut(&mut self) -> [&mut [f64]; 9] {
        fn s(v: Option<&mut [f64]>) -> &mut [f64] {
            v.expect("parameters are contiguous")
        }
        [
            s(self.e.as_slice_mut()),
            s(self.w.as_slice_mut()),
            s(self.a.as_slice_mut()),
            s(self.w1.as_slice_mut()),
            s(self.b1.as_slice_mut()),
            s(self.w2.as_slice_mut()),
            s(self.b2.as_slice_mut()),
            s(self.w3.as_slice_mut()),
            s(self.b3.as_slice_mut()),
        ]
    }

    pub fn len(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}
