use ndarray::{Array1, Axis};
use rand::Rng;

use super::loss::{loss_cross_entropy, loss_hinge, loss_mse, PROBABILITY_FLOOR};
use super::model::{mlp, pair_input, query_representation, Pass, QueryRep};
use super::train::Instance;
use super::{Head, ModelKind, Params};
use crate::{Error, Result};

/// Inverted-dropout multipliers for the two hidden layers of one pass:
/// 0 with probability `p`, otherwise `1 / (1 - p)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMask {
    pub m1: Array1<f64>,
    pub m2: Array1<f64>,
}

impl DropoutMask {
    pub fn sample(hidden: (usize, usize), p: f64, rng: &mut impl Rng) -> Self {
        let keep = 1.0 / (1.0 - p);
        let mut draw = |n: usize| -> Array1<f64> {
            (0..n)
                .map(|_| if p > 0.0 && rng.random_bool(p) { 0.0 } else { keep })
                .collect()
        };
        let m1 = draw(hidden.0);
        let m2 = draw(hidden.1);
        DropoutMask { m1, m2 }
    }

    /// One mask per forward pass of `batch`, in pass order.
    pub fn for_batch(batch: &[Instance], hidden: (usize, usize), p: f64, rng: &mut impl Rng) -> Vec<Self> {
        let passes: usize = batch.iter().map(Instance::passes).sum();
        (0..passes).map(|_| Self::sample(hidden, p, rng)).collect()
    }
}

fn check_kind(kind: ModelKind, instance: &Instance) -> Result<()> {
    let ok = matches!(
        (kind, instance),
        (ModelKind::Ntas1Pointwise, Instance::Pointwise { .. })
            | (ModelKind::Ntas1Pairwise, Instance::Pairwise { .. })
            | (ModelKind::Ntas2, Instance::Classification { .. })
    );
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("training instance does not fit {kind}")))
    }
}

fn representation(params: &Params, instance: &Instance) -> Result<QueryRep> {
    query_representation(params, instance.ids())
        .ok_or_else(|| Error::InvalidConfig("training instance has no in-vocabulary terms".into()))
}

struct Masks<'a> {
    masks: Option<&'a [DropoutMask]>,
    next: usize,
}

impl<'a> Masks<'a> {
    fn take(&mut self) -> Option<&'a DropoutMask> {
        let m = self.masks.map(|m| &m[self.next]);
        self.next += 1;
        m
    }
}

fn check_masks(batch: &[Instance], masks: Option<&[DropoutMask]>) -> Result<()> {
    if let Some(m) = masks {
        let passes: usize = batch.iter().map(Instance::passes).sum();
        if m.len() != passes {
            return Err(Error::LengthMismatch {
                left: m.len(),
                right: passes,
            });
        }
    }
    Ok(())
}

/// Loss of `batch` under `kind`'s objective, via the standalone loss functions.
pub fn batch_loss(
    params: &Params,
    kind: ModelKind,
    batch: &[Instance],
    masks: Option<&[DropoutMask]>,
    margin: f64,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    check_masks(batch, masks)?;
    let mut masks = Masks { masks, next: 0 };
    let head = kind.head();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    let (mut targets, mut probs) = (Vec::new(), Vec::new());
    for instance in batch {
        check_kind(kind, instance)?;
        let rep = representation(params, instance)?;
        let score = |app: usize, m| mlp(params, head, pair_input(&rep.q, params.a.row(app)), m).out[0];
        match instance {
            Instance::Pointwise { app, label, .. } => {
                a.push(*label);
                b.push(score(*app, masks.take()));
            }
            Instance::Pairwise { positive, negative, .. } => {
                a.push(score(*positive, masks.take()));
                b.push(score(*negative, masks.take()));
            }
            Instance::Classification { target, .. } => {
                targets.push(target.clone());
                probs.push(mlp(params, head, rep.q.clone(), masks.take()).out.to_vec());
            }
        }
    }
    match kind {
        ModelKind::Ntas1Pointwise => loss_mse(&a, &b),
        ModelKind::Ntas1Pairwise => loss_hinge(&a, &b, margin),
        ModelKind::Ntas2 => loss_cross_entropy(&targets, &probs),
    }
}

/// Backpropagate `d_logits` through the network; returns the gradient
/// with respect to the network input.
fn backprop_mlp(
    params: &Params,
    pass: &Pass,
    d_logits: &Array1<f64>,
    mask: Option<&DropoutMask>,
    grads: &mut Params,
) -> Array1<f64> {
    for (mut row, &d) in grads.w3.axis_iter_mut(Axis(0)).zip(d_logits) {
        row.scaled_add(d, &pass.h2);
    }
    grads.b3 += d_logits;

    let mut d_h2 = params.w3.t().dot(d_logits);
    for (i, d) in d_h2.iter_mut().enumerate() {
        let keep = mask.map_or(1.0, |m| m.m2[i]);
        *d *= if pass.h2_pre[i] > 0.0 { keep } else { 0.0 };
    }
    for (mut row, &d) in grads.w2.axis_iter_mut(Axis(0)).zip(&d_h2) {
        row.scaled_add(d, &pass.h1);
    }
    grads.b2 += &d_h2;

    let mut d_h1 = params.w2.t().dot(&d_h2);
    for (i, d) in d_h1.iter_mut().enumerate() {
        let keep = mask.map_or(1.0, |m| m.m1[i]);
        *d *= if pass.h1_pre[i] > 0.0 { keep } else { 0.0 };
    }
    for (mut row, &d) in grads.w1.axis_iter_mut(Axis(0)).zip(&d_h1) {
        row.scaled_add(d, &pass.x);
    }
    grads.b1 += &d_h1;

    params.w1.t().dot(&d_h1)
}

/// Gradients of `q = sum_i alpha_i E[t_i]` with `alpha = softmax(W[t])`.
fn backprop_query(params: &Params, rep: &QueryRep, d_q: &Array1<f64>, grads: &mut Params) {
    let d_alpha: Vec<f64> = rep.ids.iter().map(|&t| params.e.row(t).dot(d_q)).collect();
    let mean: f64 = rep.alpha.iter().zip(&d_alpha).map(|(a, d)| a * d).sum();
    for ((&t, &a), &d) in rep.ids.iter().zip(&rep.alpha).zip(&d_alpha) {
        grads.e.row_mut(t).scaled_add(a, d_q);
        grads.w[t] += a * (d - mean);
    }
}

/// Backpropagate a pair score: `x = q ⊙ A[app]`.
fn backprop_pair(
    params: &Params,
    rep: &QueryRep,
    app: usize,
    pass: &Pass,
    d_out: f64,
    mask: Option<&DropoutMask>,
    grads: &mut Params,
) {
    let d_x = backprop_mlp(params, pass, &Array1::from(vec![d_out]), mask, grads);
    let d_q = &d_x * &params.a.row(app);
    grads.a.row_mut(app).scaled_add(1.0, &(&d_x * &rep.q));
    backprop_query(params, rep, &d_q, grads);
}

/// Exact gradients of the batch loss with respect to every parameter, with
/// the dropout masks held fixed. Returns `(loss, gradients)`.
pub fn compute_gradients(
    params: &Params,
    kind: ModelKind,
    batch: &[Instance],
    masks: Option<&[DropoutMask]>,
    margin: f64,
) -> Result<(f64, Params)> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    check_masks(batch, masks)?;
    let mut masks = Masks { masks, next: 0 };
    let n = batch.len() as f64;
    let mut grads = Params::zeros(&params.dims(kind));
    let mut total = 0.0;
    for instance in batch {
        check_kind(kind, instance)?;
        let rep = representation(params, instance)?;
        match instance {
            Instance::Pointwise { app, label, .. } => {
                let m = masks.take();
                let pass = mlp(params, Head::Linear, pair_input(&rep.q, params.a.row(*app)), m);
                let residual = label - pass.out[0];
                total += residual * residual;
                backprop_pair(params, &rep, *app, &pass, -2.0 * residual / n, m, &mut grads);
            }
            Instance::Pairwise { positive, negative, .. } => {
                let (m1, m2) = (masks.take(), masks.take());
                let p1 = mlp(params, Head::Tanh, pair_input(&rep.q, params.a.row(*positive)), m1);
                let p2 = mlp(params, Head::Tanh, pair_input(&rep.q, params.a.row(*negative)), m2);
                let (s1, s2) = (p1.out[0], p2.out[0]);
                let violation = margin - (s1 - s2);
                if violation > 0.0 {
                    total += violation;
                    let d1 = -(1.0 - s1 * s1) / n;
                    let d2 = (1.0 - s2 * s2) / n;
                    backprop_pair(params, &rep, *positive, &p1, d1, m1, &mut grads);
                    backprop_pair(params, &rep, *negative, &p2, d2, m2, &mut grads);
                }
            }
            Instance::Classification { target, .. } => {
                let m = masks.take();
                let pass = mlp(params, Head::Softmax, rep.q.clone(), m);
                let p = &pass.out;
                // dL/dp_j, zero where the floor clamps the probability
                let g: Vec<f64> = target
                    .iter()
                    .zip(p)
                    .map(|(&t, &pj)| {
                        if t != 0.0 {
                            total -= t * pj.max(PROBABILITY_FLOOR).ln();
                        }
                        if pj > PROBABILITY_FLOOR { -t / pj } else { 0.0 }
                    })
                    .collect();
                let dot: f64 = p.iter().zip(&g).map(|(pj, gj)| pj * gj).sum();
                let d_logits: Array1<f64> = p.iter().zip(&g).map(|(pk, gk)| pk * (gk - dot) / n).collect();
                let d_q = backprop_mlp(params, &pass, &d_logits, m, &mut grads);
                backprop_query(params, &rep, &d_q, &mut grads);
            }
        }
    }
    Ok((total / n, grads))
}
