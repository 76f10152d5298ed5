use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::{Error, Result};

/// Result of a two-tailed paired t-test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub df: usize,
    pub mean_difference: f64,
    pub p_value: f64,
}

/// Two-tailed paired t-test on `a - b` with `n - 1` degrees of freedom.
///
/// When every difference is the same the statistic is undefined: the
/// p-value is 1 if that difference is 0 and 0 otherwise.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::InsufficientData("paired t-test needs at least two pairs".into()));
    }
    let n = a.len() as f64;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let df = a.len() - 1;
    let sd = var.sqrt();
    // relative guard so rounding noise in identical inputs reads as zero spread
    let scale = diffs.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    if sd <= 1e-12 * scale {
        let p_value = if mean == 0.0 { 1.0 } else { 0.0 };
        let t = if mean == 0.0 { 0.0 } else { mean.signum() * f64::INFINITY };
        return Ok(TTest {
            t,
            df,
            mean_difference: mean,
            p_value,
        });
    }
    let t = mean / (sd / n.sqrt());
    let dist = StudentsT::new(0.0, 1.0, df as f64)
        .map_err(|e| Error::InvalidConfig(format!("t distribution: {e}")))?;
    let p_value = (2.0 * dist.cdf(-t.abs())).min(1.0);
    Ok(TTest {
        t,
        df,
        mean_difference: mean,
        p_value,
    })
}

/// Per-comparison threshold `alpha / m`.
pub fn bonferroni_threshold(alpha: f64, comparisons: usize) -> f64 {
    alpha / comparisons.max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn student_sleep_data() {
        // extra sleep for the two drugs in the classic ten-patient study
        let g1 = [0.7, -1.6, -0.2, -1.2, -0.1, 3.4, 3.7, 0.8, 0.0, 2.0];
        let g2 = [1.9, 0.8, 1.1, 0.1, -0.1, 4.4, 5.5, 1.6, 4.6, 3.4];
        let r = paired_t_test(&g1, &g2).unwrap();
        assert!((r.t + 4.0621).abs() < 1e-4);
        assert_eq!(r.df, 9);
        assert!((r.p_value - 0.002833).abs() < 1e-3);
        assert!((r.p_value - 0.00283289019738427).abs() < 1e-9);
    }

    #[test]
    fn identical_inputs_give_one() {
        let a = [0.1, 0.5, 0.9, 1.0];
        assert_eq!(paired_t_test(&a, &a).unwrap().p_value, 1.0);
        let shifted: Vec<f64> = a.iter().map(|v| v + 0.25).collect();
        assert_eq!(paired_t_test(&shifted, &a).unwrap().p_value, 0.0);
    }

    #[test]
    fn errors_and_threshold() {
        assert!(paired_t_test(&[1.0], &[1.0]).is_err());
        assert!(matches!(paired_t_test(&[1.0, 2.0], &[1.0]), Err(Error::LengthMismatch { .. })));
        assert_eq!(bonferroni_threshold(0.05, 5), 0.01);
    }
}
