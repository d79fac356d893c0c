//! Beta posteriors over the reference store, and Thompson draws.
//!
//! For a query `s` with kernel mass `eta = sum_i k(s, s_i)` and IWKR estimate
//! `p`, the posterior is `Beta(eta * p, eta * (1 - p))`: its mean is the IWKR
//! estimate and its total count is the kernel mass, so importance weights
//! shift the mean without diluting the confidence.

use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::kernel::{iwkr_from_kernel, ReferenceStore};

/// Floor applied to both Beta parameters so the sampler stays defined when
/// every nearby reward agrees.
pub const EPS_CLAMP: f64 = 1e-6;

/// Kernel mass below which the store is treated as silent and the uniform
/// prior is used instead.
pub const ETA_MIN: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaParams {
    pub alpha: f64,
    pub beta: f64,
    /// Kernel mass at the query; 0 when the uniform prior was used.
    pub eta: f64,
}

impl BetaParams {
    pub const UNIFORM: Self = Self {
        alpha: 1.0,
        beta: 1.0,
        eta: 0.0,
    };

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    pub fn variance(&self) -> f64 {
        let s = self.alpha + self.beta;
        self.alpha * self.beta / (s * s * (s + 1.0))
    }

    /// Posterior from an estimate and kernel mass.
    pub fn from_estimate(p: f64, eta: f64) -> Self {
        if !(eta >= ETA_MIN) || !p.is_finite() {
            return Self::UNIFORM;
        }
        Self {
            alpha: (eta * p).max(EPS_CLAMP),
            beta: (eta * (1.0 - p)).max(EPS_CLAMP),
            eta,
        }
    }

    /// Posterior from a precomputed kernel vector against `store`.
    pub fn from_kernel_vector(kvec: &[f64], store: &ReferenceStore, mask: Option<&[usize]>) -> Self {
        let eta = mass_from_kernel(kvec, mask);
        if !(eta >= ETA_MIN) {
            return Self::UNIFORM;
        }
        match iwkr_from_kernel(kvec, store.rewards(), store.accumulators(), mask) {
            Ok(p) => Self::from_estimate(p, eta),
            Err(_) => Self::UNIFORM,
        }
    }
}

fn mass_from_kernel(kvec: &[f64], mask: Option<&[usize]>) -> f64 {
    match mask {
        Some(m) => m.iter().map(|&i| kvec[i]).sum(),
        None => kvec.iter().sum(),
    }
}

/// Total kernel similarity of `query` to the (masked) store.
pub fn kernel_mass(query: &[f64], store: &ReferenceStore, mask: Option<&[usize]>) -> Result<f64> {
    let kvec = store.kernel_vector(query)?;
    if let Some(&bad) = mask.and_then(|m| m.iter().find(|&&i| i >= store.len())) {
        return Err(Error::IndexOutOfRange {
            index: bad,
            len: store.len(),
        });
    }
    Ok(mass_from_kernel(&kvec, mask))
}

/// Beta posterior at `query`.
pub fn beta_params(query: &[f64], store: &ReferenceStore, mask: Option<&[usize]>) -> Result<BetaParams> {
    let kvec = store.kernel_vector(query)?;
    if let Some(&bad) = mask.and_then(|m| m.iter().find(|&&i| i >= store.len())) {
        return Err(Error::IndexOutOfRange {
            index: bad,
            len: store.len(),
        });
    }
    Ok(BetaParams::from_kernel_vector(&kvec, store, mask))
}

/// Log of a Gamma(shape, 1) variate. Shapes below 1 use
/// `Gamma(a) = Gamma(a + 1) * U^(1/a)` in log space, which stays finite for
/// the tiny shapes produced by clamping.
fn ln_gamma_variate<R: rand::Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape >= 1.0 {
        let g = Gamma::new(shape, 1.0).expect("shape is positive");
        g.sample(rng).ln()
    } else {
        let g = Gamma::new(shape + 1.0, 1.0).expect("shape is positive");
        let u: f64 = rng.random::<f64>();
        // random::<f64>() is in [0, 1); flip to (0, 1].
        g.sample(rng).ln() + (1.0 - u).ln() / shape
    }
}

/// One Thompson draw from `Beta(alpha, beta)`, built from two Gamma variates.
pub fn thompson_draw<R: rand::Rng + ?Sized>(params: &BetaParams, rng: &mut R) -> f64 {
    let lx = ln_gamma_variate(params.alpha, rng);
    let ly = ln_gamma_variate(params.beta, rng);
    // x / (x + y) = 1 / (1 + exp(ly - lx))
    let d = ly - lx;
    if d > 0.0 {
        let e = (-d).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + d.exp())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelConfig;
    use crate::rng;
    use proptest::prelude::*;
    use rand::{Rng as _, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn coincident(rewards: &[f64]) -> ReferenceStore {
        ReferenceStore::from_samples(
            1,
            KernelConfig::new(1.0).unwrap(),
            vec![0.25; rewards.len()],
            rewards.to_vec(),
            None,
        )
        .unwrap()
    }

    fn monte_carlo(p: &BetaParams, n: usize, seed: u64) -> (f64, f64) {
        let mut r = rng::stream(seed, "test");
        let xs: Vec<f64> = (0..n).map(|_| thompson_draw(p, &mut r)).collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        (m, v)
    }

    #[test]
    fn kernel_mass_cases() {
        let empty = ReferenceStore::new(1, KernelConfig::new(1.0).unwrap()).unwrap();
        assert_eq!(kernel_mass(&[0.0], &empty, None).unwrap(), 0.0);
        assert_eq!(kernel_mass(&[0.25], &coincident(&[1.0, 0.0, 1.0]), None).unwrap(), 3.0);

        let mut r = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<f64> = (0..40).map(|_| r.random()).collect();
        let s = ReferenceStore::from_samples(2, KernelConfig::new(0.3).unwrap(), pts.clone(), vec![1.0; 20], None)
            .unwrap();
        let q = [0.4, 0.6];
        let direct: f64 = pts
            .chunks(2)
            .map(|p| (-((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)) / (2.0 * 0.09)).exp())
            .sum();
        assert!((kernel_mass(&q, &s, None).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn beta_params_cases() {
        let p = beta_params(&[0.25], &coincident(&[1.0, 1.0, 0.0]), None).unwrap();
        assert!((p.eta - 3.0).abs() < 1e-12);
        assert!((p.alpha - 2.0).abs() < 1e-12);
        assert!((p.beta - 1.0).abs() < 1e-12);

        let empty = ReferenceStore::new(1, KernelConfig::new(1.0).unwrap()).unwrap();
        assert_eq!(beta_params(&[0.0], &empty, None).unwrap(), BetaParams::UNIFORM);

        let p = beta_params(&[0.25], &coincident(&[1.0; 4]), None).unwrap();
        assert_eq!(p.alpha, 4.0);
        assert_eq!(p.beta, EPS_CLAMP);

        // Far away under truncation: no mass, uniform prior.
        let t = ReferenceStore::from_samples(1, KernelConfig::truncated(0.1, 0.3).unwrap(), vec![0.0], vec![1.0], None)
            .unwrap();
        assert_eq!(beta_params(&[1.0], &t, None).unwrap(), BetaParams::UNIFORM);
    }

    #[test]
    fn uniform_draws_average_one_half() {
        let (m, _) = monte_carlo(&BetaParams::UNIFORM, 100_000, 1);
        assert!((m - 0.5).abs() < 0.005, "{m}");
    }

    #[test]
    fn beta_two_one_mean() {
        let p = BetaParams { alpha: 2.0, beta: 1.0, eta: 3.0 };
        let (m, v) = monte_carlo(&p, 100_000, 2);
        let se = (p.variance() / 100_000.0).sqrt();
        assert!((m - 2.0 / 3.0).abs() < 3.0 * se, "{m}");
        assert!((v - p.variance()).abs() < 0.05 * p.variance());
    }

    #[test]
    fn clamped_draws_pile_up_at_one() {
        let p = BetaParams { alpha: 50.0, beta: EPS_CLAMP, eta: 50.0 };
        let mut r = rng::stream(3, "test");
        let hits = (0..10_000).filter(|_| thompson_draw(&p, &mut r) >= 0.999).count();
        assert!(hits as f64 / 10_000.0 > 0.99);
        let q = BetaParams { alpha: EPS_CLAMP, beta: EPS_CLAMP, eta: 1e-8 };
        for _ in 0..1000 {
            let x = thompson_draw(&q, &mut r);
            assert!((0.0..=1.0).contains(&x));
        }
    }

    #[test]
    fn draws_are_reproducible() {
        let p = BetaParams { alpha: 3.5, beta: 0.7, eta: 4.2 };
        let a: Vec<f64> = {
            let mut r = rng::stream(9, "x");
            (0..50).map(|_| thompson_draw(&p, &mut r)).collect()
        };
        let b: Vec<f64> = {
            let mut r = rng::stream(9, "x");
            (0..50).map(|_| thompson_draw(&p, &mut r)).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn more_mass_means_less_variance() {
        for p in [0.1, 0.35, 0.5, 0.9] {
            let wide = BetaParams::from_estimate(p, 2.0);
            let narrow = BetaParams::from_estimate(p, 20.0);
            assert!(narrow.variance() < wide.variance());
            assert!((wide.variance() - p * (1.0 - p) / 3.0).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn posterior_identities(seed in any::<u64>(), n in 1usize..40, sigma in 0.05f64..1.0) {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<f64> = (0..n * 3).map(|_| r.random()).collect();
            let rewards: Vec<f64> = (0..n).map(|_| f64::from(r.random::<bool>() as u8)).collect();
            let s = ReferenceStore::from_samples(3, KernelConfig::new(sigma).unwrap(), pts, rewards, None).unwrap();
            let q: Vec<f64> = (0..3).map(|_| r.random()).collect();
            let b = beta_params(&q, &s, None).unwrap();
            let eta = kernel_mass(&q, &s, None).unwrap();
            if eta >= ETA_MIN {
                let p = s.iwkr_estimate(&q, None).unwrap();
                let clamped = b.alpha == EPS_CLAMP || b.beta == EPS_CLAMP;
                if !clamped {
                    prop_assert!((b.mean() - p).abs() < 1e-9);
                    prop_assert!((b.alpha + b.beta - eta).abs() < 1e-9);
                }
                prop_assert!(b.alpha >= EPS_CLAMP && b.beta >= EPS_CLAMP);
            }
        }
    }
}
