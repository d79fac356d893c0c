//! Coupled-arm generator: an anchor arm with mean `mu0 ~ U(0, 1)` per
//! episode, and non-anchor arms whose means are drawn from a Beta
//! distribution centred on `rho * (mu0 - 0.5) + 0.5`.

use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::data::LoggedSample;
use crate::env::{one_hot, Environment, Step};
use crate::error::{Error, Result};
use crate::rng;

/// Correlations used in the reference study, one per non-anchor arm.
pub const DEFAULT_CORRELATIONS: [f64; 6] = [-1.0, -0.6, -0.2, 0.2, 0.6, 1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledArmSpec {
    /// Correlation with the anchor for arms 1.. (arm 0 is the anchor).
    pub correlations: Vec<f64>,
    pub concentration: f64,
    pub episodes: usize,
    pub samples_per_episode: usize,
}

impl Default for CoupledArmSpec {
    fn default() -> Self {
        Self {
            correlations: DEFAULT_CORRELATIONS.to_vec(),
            concentration: 50.0,
            episodes: 200,
            samples_per_episode: 100,
        }
    }
}

impl CoupledArmSpec {
    pub fn num_arms(&self) -> usize {
        self.correlations.len() + 1
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.concentration >= 1.0 && self.concentration.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "concentration must be >= 1, got {}",
                self.concentration
            )));
        }
        if let Some(r) = self.correlations.iter().find(|r| !(-1.0..=1.0).contains(*r)) {
            return Err(Error::InvalidConfig(format!("correlation {r} outside [-1, 1]")));
        }
        Ok(())
    }

    /// Draw the per-arm means of one episode (anchor first).
    pub fn sample_means<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mu0 = open_unit(rng);
        std::iter::once(mu0)
            .chain(
                self.correlations
                    .iter()
                    .map(|&rho| sample_correlated_mu(mu0, rho, self.concentration, rng)),
            )
            .collect()
    }
}

/// Uniform draw in the open interval (0, 1).
fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Beta parameters of a correlated arm's mean.
pub fn correlated_beta_params(mu0: f64, rho: f64, c: f64) -> (f64, f64) {
    (
        2.0 * c * (rho * (mu0 - 0.5) + 0.5),
        2.0 * c * (rho * (0.5 - mu0) + 0.5),
    )
}

/// Mean of a non-anchor arm with correlation `rho` to an anchor of mean `mu0`.
pub fn sample_correlated_mu<R: Rng + ?Sized>(mu0: f64, rho: f64, c: f64, rng: &mut R) -> f64 {
    let (a, b) = correlated_beta_params(mu0, rho, c);
    let beta = Beta::new(a, b).expect("parameters are positive for mu0 in (0, 1)");
    // Keep the draw strictly inside (0, 1) even when it rounds to an end.
    beta.sample(rng).clamp(f64::EPSILON, 1.0 - f64::EPSILON)
}

/// Logged data of the coupled-arm study: per episode, fresh means and
/// `samples_per_episode` uniformly chosen pulls. The context is empty and
/// the interval label is the episode index.
pub fn coupled_episode<R: Rng + ?Sized>(spec: &CoupledArmSpec, rng: &mut R) -> Result<Vec<LoggedSample>> {
    spec.validate()?;
    let k = spec.num_arms();
    let mut rows = Vec::with_capacity(spec.episodes * spec.samples_per_episode);
    for t in 0..spec.episodes {
        let mus = spec.sample_means(rng);
        for _ in 0..spec.samples_per_episode {
            let arm = rng.random_range(0..k);
            let r = f64::from(rng.random::<f64>() < mus[arm]);
            rows.push(LoggedSample::new(Vec::new(), one_hot(arm, k), r, t as i64));
        }
    }
    Ok(rows)
}

/// Online version of the study: one episode every `episode_length` steps,
/// one-hot arms, no context.
#[derive(Debug, Clone)]
pub struct CoupledBandit {
    spec: CoupledArmSpec,
    episode_length: usize,
    horizon: usize,
    step: usize,
    means: Vec<f64>,
    ctx_rng: rng::Rng,
    reward_rng: rng::Rng,
    warm_rng: rng::Rng,
}

impl CoupledBandit {
    pub fn new(spec: CoupledArmSpec, episode_length: usize, horizon: usize, seed: u64) -> Result<Self> {
        spec.validate()?;
        if episode_length == 0 {
            return Err(Error::InvalidConfig("episode_length must be positive".into()));
        }
        Ok(Self {
            spec,
            episode_length,
            horizon,
            step: 0,
            means: Vec::new(),
            ctx_rng: rng::stream(seed, "env/context"),
            reward_rng: rng::stream(seed, "env/reward"),
            warm_rng: rng::stream(seed, "env/warm"),
        })
    }
}

impl Environment for CoupledBandit {
    fn context_dim(&self) -> usize {
        0
    }

    fn arm_dim(&self) -> usize {
        self.spec.num_arms()
    }

    fn next_step(&mut self) -> Option<Step> {
        if self.step >= self.horizon {
            return None;
        }
        if self.step % self.episode_length == 0 {
            self.means = self.spec.sample_means(&mut self.ctx_rng);
        }
        let k = self.spec.num_arms();
        let step = Step {
            index: self.step,
            context: Vec::new(),
            arms: (0..k).map(|a| one_hot(a, k)).collect(),
            means: self.means.clone(),
            eval: true,
            interval: (self.step / self.episode_length) as i64,
        };
        self.step += 1;
        Some(step)
    }

    fn reward(&mut self, step: &Step, arm: usize) -> f64 {
        f64::from(self.reward_rng.random::<f64>() < step.means[arm])
    }

    fn warm_start_data(&mut self) -> Vec<LoggedSample> {
        coupled_episode(&self.spec, &mut self.warm_rng).unwrap_or_default()
    }

    fn time_intervals(&self) -> usize {
        self.spec.episodes
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{mean, pearson};

    #[test]
    fn beta_parameters_stay_positive() {
        for &rho in &[-1.0, -0.6, 0.0, 0.6, 1.0] {
            for i in 1..100 {
                let mu0 = i as f64 / 100.0;
                let (a, b) = correlated_beta_params(mu0, rho, 1.0);
                assert!(a > 0.0 && b > 0.0);
            }
        }
    }

    fn draws(mu0: f64, rho: f64, c: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut g = rng::stream(seed, "mu");
        (0..n).map(|_| sample_correlated_mu(mu0, rho, c, &mut g)).collect()
    }

    #[test]
    fn perfectly_correlated_mean() {
        let xs = draws(0.9, 1.0, 50.0, 10_000, 1);
        let (a, b) = correlated_beta_params(0.9, 1.0, 50.0);
        let var = a * b / ((a + b).powi(2) * (a + b + 1.0));
        assert!((mean(&xs) - 0.9).abs() < 3.0 * (var / 10_000.0).sqrt());
        assert!(xs.iter().all(|&x| x > 0.0 && x < 1.0));
    }

    #[test]
    fn anti_correlated_mean() {
        let xs = draws(0.9, -1.0, 50.0, 10_000, 2);
        assert!((mean(&xs) - 0.1).abs() < 0.005);
    }

    #[test]
    fn uncorrelated_matches_symmetric_beta() {
        let c = 50.0;
        let xs = draws(0.3, 0.0, c, 20_000, 3);
        let m = mean(&xs);
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        // Beta(c, c): mean 1/2, variance 1 / (4 (2c + 1)).
        let var = 1.0 / (4.0 * (2.0 * c + 1.0));
        assert!((m - 0.5).abs() < 3.0 * (var / 20_000.0).sqrt());
        assert!((v - var).abs() < 0.05 * var);
    }

    #[test]
    fn single_row_episode() {
        let spec = CoupledArmSpec { episodes: 1, samples_per_episode: 1, ..Default::default() };
        let rows = coupled_episode(&spec, &mut rng::stream(0, "x")).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].interval, 0);
        assert!(rows[0].context.is_empty());
        assert_eq!(rows[0].arm.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn coupled_arm_tracks_anchor() {
        // About 140 pulls per arm and episode, so the Bernoulli noise in each
        // per-episode rate is small next to the spread of the anchor mean.
        let spec = CoupledArmSpec { samples_per_episode: 1000, ..Default::default() };
        let rows = coupled_episode(&spec, &mut rng::stream(4, "x")).unwrap();
        let k = spec.num_arms();
        let mut rate = vec![vec![(0usize, 0usize); spec.episodes]; k];
        let mut counts = vec![0usize; k];
        for s in &rows {
            let a = s.arm.iter().position(|&v| v == 1.0).unwrap();
            let e = &mut rate[a][s.interval as usize];
            e.0 += s.reward as usize;
            e.1 += 1;
            counts[a] += 1;
        }
        let r = |a: usize| -> Vec<f64> {
            rate[a].iter().map(|&(s, n)| s as f64 / n.max(1) as f64).collect()
        };
        assert!(pearson(&r(0), &r(6)) > 0.9);
        assert!(pearson(&r(0), &r(1)) < -0.8);
        // Multinomial arm counts: each within 3 sd of n / k.
        let n = rows.len() as f64;
        let p = 1.0 / k as f64;
        for c in counts {
            assert!((c as f64 - n * p).abs() < 3.0 * (n * p * (1.0 - p)).sqrt());
        }
    }

    #[test]
    fn online_bandit_resamples_per_episode() {
        let mut env = CoupledBandit::new(CoupledArmSpec::default(), 10, 30, 1).unwrap();
        let steps: Vec<Step> = std::iter::from_fn(|| env.next_step()).collect();
        assert_eq!(steps.len(), 30);
        assert_eq!(steps[0].means, steps[9].means);
        assert_ne!(steps[9].means, steps[10].means);
        assert_eq!(steps[25].interval, 2);
    }
}
