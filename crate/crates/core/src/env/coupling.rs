//! Degree of coupling between two arms: one minus the time-averaged
//! Jensen-Shannon divergence of their Bernoulli reward distributions.
//! Base-2 logarithms keep the divergence in `[0, 1]`.

use crate::error::{Error, Result};

fn xlog2(p: f64, q: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        p * (p / q).log2()
    }
}

/// JS divergence (bits) between Bernoulli(p) and Bernoulli(q).
pub fn js_divergence_bernoulli(p: f64, q: f64) -> f64 {
    let m1 = 0.5 * (p + q);
    let m0 = 1.0 - m1;
    let kl_pm = xlog2(p, m1) + xlog2(1.0 - p, m0);
    let kl_qm = xlog2(q, m1) + xlog2(1.0 - q, m0);
    (0.5 * kl_pm + 0.5 * kl_qm).clamp(0.0, 1.0)
}

/// Coupling of two per-interval sequences of Bernoulli means.
pub fn coupling_rho(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            expected: p.len(),
            found: q.len(),
        });
    }
    if p.is_empty() {
        return Err(Error::Empty("coupling history"));
    }
    for &v in p.iter().chain(q) {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidConfig(format!("Bernoulli mean {v} outside [0, 1]")));
        }
    }
    let total: f64 = p.iter().zip(q).map(|(&a, &b)| js_divergence_bernoulli(a, b)).sum();
    Ok(1.0 - total / p.len() as f64)
}

/// Add-one smoothed rate `(k + 1) / (n + 2)` for plugging empirical counts
/// into [`coupling_rho`] without infinite KL terms.
pub fn smoothed_rate(successes: usize, trials: usize) -> f64 {
    (successes as f64 + 1.0) / (trials as f64 + 2.0)
}
