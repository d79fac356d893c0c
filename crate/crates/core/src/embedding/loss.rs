//! Binary cross entropy and expected calibration error.

use crate::error::{Error, Result};

/// Predictions are clamped to `[P_MIN, 1 - P_MIN]` before taking logs.
pub const P_MIN: f64 = 1e-7;

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(P_MIN, 1.0 - P_MIN)
}

pub fn bce_loss(p_hat: f64, r: f64) -> f64 {
    let p = clamp_prob(p_hat);
    -(r * p.ln() + (1.0 - r) * (1.0 - p).ln())
}

/// d BCE / d p_hat; zero where the clamp is active.
pub fn bce_grad(p_hat: f64, r: f64) -> f64 {
    if p_hat <= P_MIN || p_hat >= 1.0 - P_MIN {
        return 0.0;
    }
    -r / p_hat + (1.0 - r) / (1.0 - p_hat)
}

/// Equal-width bin of a confidence in `[0, 1]`.
pub fn bin_of(p: f64, bins: usize) -> usize {
    ((p * bins as f64).floor().max(0.0) as usize).min(bins - 1)
}

fn bin_gaps(p_hats: &[f64], rs: &[f64], bins: usize) -> Result<Vec<f64>> {
    if p_hats.len() != rs.len() {
        return Err(Error::LengthMismatch {
            expected: p_hats.len(),
            found: rs.len(),
        });
    }
    if p_hats.is_empty() {
        return Err(Error::Empty("calibration batch"));
    }
    if bins == 0 {
        return Err(Error::InvalidConfig("ECE needs at least one bin".into()));
    }
    let mut gap = vec![0.0; bins];
    for (&p, &r) in p_hats.iter().zip(rs) {
        gap[bin_of(p, bins)] += p - r;
    }
    Ok(gap)
}

/// `sum_b (n_b / N) |conf_b - acc_b|`, which is `(1/N) sum_b |sum_{i in b} (p_i - r_i)|`.
pub fn ece_loss(p_hats: &[f64], rs: &[f64], bins: usize) -> Result<f64> {
    let gap = bin_gaps(p_hats, rs, bins)?;
    Ok(gap.iter().map(|g| g.abs()).sum::<f64>() / p_hats.len() as f64)
}

/// Gradient of [`ece_loss`] with bin membership held fixed.
pub fn ece_grad(p_hats: &[f64], rs: &[f64], bins: usize) -> Result<Vec<f64>> {
    let gap = bin_gaps(p_hats, rs, bins)?;
    let n = p_hats.len() as f64;
    Ok(p_hats
        .iter()
        .map(|&p| {
            let g = gap[bin_of(p, bins)];
            if g > 0.0 {
                1.0 / n
            } else if g < 0.0 {
                -1.0 / n
            } else {
                0.0
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    #[test]
    fn bce_cases() {
        assert!((bce_loss(0.5, 1.0) - 0.693147).abs() < 1e-6);
        assert!(bce_loss(1.0, 1.0) < 1e-6);
        assert!(bce_loss(0.0, 1.0).is_finite());
        let mut g = rng::stream(1, "bce");
        for _ in 0..100 {
            let p: f64 = g.random_range(0.01..0.99);
            let r = f64::from(g.random::<bool>() as u8);
            let direct = if r == 1.0 { -p.ln() } else { -(1.0 - p).ln() };
            assert!((bce_loss(p, r) - direct).abs() < 1e-12);
            let h = 1e-6;
            let fd = (bce_loss(p + h, r) - bce_loss(p - h, r)) / (2.0 * h);
            assert!((fd - bce_grad(p, r)).abs() < 1e-5 * fd.abs().max(1.0));
        }
    }

    /// Explicit bin loop with per-bin averages.
    fn oracle_ece(p: &[f64], r: &[f64], bins: usize) -> f64 {
        let mut total = 0.0;
        for b in 0..bins {
            let lo = b as f64 / bins as f64;
            let hi = (b + 1) as f64 / bins as f64;
            let members: Vec<usize> = (0..p.len())
                .filter(|&i| p[i] >= lo && (p[i] < hi || (b == bins - 1 && p[i] <= 1.0)))
                .collect();
            if members.is_empty() {
                continue;
            }
            let conf = members.iter().map(|&i| p[i]).sum::<f64>() / members.len() as f64;
            let acc = members.iter().map(|&i| r[i]).sum::<f64>() / members.len() as f64;
            total += members.len() as f64 / p.len() as f64 * (conf - acc).abs();
        }
        total
    }

    #[test]
    fn ece_cases() {
        let r = [1.0, 0.0, 1.0, 1.0];
        assert!(ece_loss(&[0.75; 4], &r, 5).unwrap().abs() < 1e-15);
        for bins in [1, 3, 5, 10] {
            assert!((ece_loss(&[1.0; 4], &[0.0; 4], bins).unwrap() - 1.0).abs() < 1e-15);
        }
        assert!(ece_loss(&[], &[], 5).is_err());
        assert!(ece_loss(&[0.5], &[1.0, 0.0], 5).is_err());

        let mut g = rng::stream(2, "ece");
        for _ in 0..50 {
            let n = g.random_range(1..40);
            let p: Vec<f64> = (0..n).map(|_| g.random()).collect();
            let r: Vec<f64> = (0..n).map(|_| f64::from(g.random::<bool>() as u8)).collect();
            let bins = g.random_range(1..8);
            assert!((ece_loss(&p, &r, bins).unwrap() - oracle_ece(&p, &r, bins)).abs() < 1e-12);
        }
    }

    #[test]
    fn ece_gradient_is_sign_over_n() {
        let p = [0.1, 0.15, 0.9];
        let r = [1.0, 0.0, 1.0];
        let g = ece_grad(&p, &r, 5).unwrap();
        assert_eq!(g, vec![-1.0 / 3.0, -1.0 / 3.0, -1.0 / 3.0]);
    }
}
