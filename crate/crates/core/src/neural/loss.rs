use crate::{Error, Result};

/// Predicted probabilities are clamped here before taking logs.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

fn check(left: usize, right: usize) -> Result<()> {
    if left == 0 {
        return Err(Error::EmptyBatch);
    }
    if left != right {
        return Err(Error::LengthMismatch { left, right });
    }
    Ok(())
}

/// `mean((y - s)^2)`.
pub fn loss_mse(labels: &[f64], scores: &[f64]) -> Result<f64> {
    check(labels.len(), scores.len())?;
    let total: f64 = labels.iter().zip(scores).map(|(y, s)| (y - s).powi(2)).sum();
    Ok(total / labels.len() as f64)
}

/// `mean(max(0, margin - (s_pos - s_neg)))`.
pub fn loss_hinge(positive: &[f64], negative: &[f64], margin: f64) -> Result<f64> {
    check(positive.len(), negative.len())?;
    let total: f64 = positive
        .iter()
        .zip(negative)
        .map(|(p, n)| (margin - (p - n)).max(0.0))
        .sum();
    Ok(total / positive.len() as f64)
}

/// `mean(-sum_j target_j * ln(max(prob_j, floor)))`.
pub fn loss_cross_entropy(targets: &[Vec<f64>], probs: &[Vec<f64>]) -> Result<f64> {
    check(targets.len(), probs.len())?;
    let mut total = 0.0;
    for (t, p) in targets.iter().zip(probs) {
        if t.len() != p.len() {
            return Err(Error::LengthMismatch {
                left: t.len(),
                right: p.len(),
            });
        }
        total -= t
            .iter()
            .zip(p)
            .filter(|(tj, _)| **tj != 0.0)
            .map(|(tj, pj)| tj * pj.max(PROBABILITY_FLOOR).ln())
            .sum::<f64>();
    }
    Ok(total / targets.len() as f64)
}
