use serde::{Deserialize, Serialize};

use super::Params;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

/// Plain gradient descent or Adam with the usual moment constants.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    moments: Option<(Params, Params)>,
    step: i32,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        Optimizer {
            kind,
            learning_rate,
            moments: None,
            step: 0,
        }
    }

    pub fn step(&mut self, params: &mut Params, grads: &Params) {
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.slices_mut().into_iter().zip(grads.slices()) {
                    for (p, g) in p.iter_mut().zip(g) {
                        *p -= lr * g;
                    }
                }
            }
            OptimizerKind::Adam => {
                self.step += 1;
                let (m, v) = self
                    .moments
                    .get_or_insert_with(|| (zeroed(grads), zeroed(grads)));
                let c1 = 1.0 - BETA1.powi(self.step);
                let c2 = 1.0 - BETA2.powi(self.step);
                let tensors = params
                    .slices_mut()
                    .into_iter()
                    .zip(grads.slices())
                    .zip(m.slices_mut().into_iter().zip(v.slices_mut()));
                for ((p, g), (m, v)) in tensors {
                    for i in 0..p.len() {
                        m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                        v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                        p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + EPSILON);
                    }
                }
            }
        }
    }
}

fn zeroed(like: &Params) -> Params {
    let mut z = like.clone();
    for s in z.slices_mut() {
        s.fill(0.0);
    }
    z
}
